# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled backend for the hot kernels.

Same contract as _ray_py; see that module for the reference semantics.
"""
from libc.math cimport INFINITY, floor
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

import numpy as np

cimport numpy as cnp  # noqa: F401  (types only, no numpy C-API calls)

BACKEND_NAME = "compiled"

cdef long long KEY_OFF = 1 << 20
cdef long long KEY_MASK = (1 << 21) - 1


cdef inline long long c_pack(long long ix, long long iy, long long iz) nogil:
    return ((ix + KEY_OFF) << 42) | ((iy + KEY_OFF) << 21) | (iz + KEY_OFF)


cdef class GridIndex:
    """Packed voxel key -> dense slot map backed by a C++ unordered_map."""

    cdef unordered_map[long long, long long] _map

    def __len__(self):
        return self._map.size()

    cdef inline long long c_get(self, long long key) nogil:
        cdef unordered_map[long long, long long].iterator it = self._map.find(key)
        if it == self._map.end():
            return -1
        return dereference(it).second

    cdef inline long long c_get_or_insert(self, long long key, bint* inserted) nogil:
        cdef long long slot
        cdef unordered_map[long long, long long].iterator it = self._map.find(key)
        if it != self._map.end():
            inserted[0] = False
            return dereference(it).second
        slot = <long long>self._map.size()
        self._map[key] = slot
        inserted[0] = True
        return slot

    def get(self, key):
        return self.c_get(<long long>key)

    def insert(self, key):
        cdef bint ins
        return self.c_get_or_insert(<long long>key, &ins)

    def lookup(self, keys):
        cdef long long[::1] kv = np.ascontiguousarray(keys, dtype=np.int64)
        cdef Py_ssize_t n = kv.shape[0]
        out = np.empty(n, dtype=np.int64)
        cdef long long[::1] ov = out
        cdef Py_ssize_t i
        with nogil:
            for i in range(n):
                ov[i] = self.c_get(kv[i])
        return out


from cython.operator cimport dereference


def trace_ray(origin, endpoint, grid_origin, voxel_size):
    """Exact voxel walk; same contract as the Python backend."""
    cdef double[::1] o = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(endpoint, dtype=np.float64)
    cdef double[::1] g0 = np.ascontiguousarray(grid_origin, dtype=np.float64)
    cdef double v = voxel_size
    cdef double d[3]
    cdef long long cur[3]
    cdef long long end[3]
    cdef long long step[3]
    cdef double tmax[3]
    cdef double tdelta[3]
    cdef Py_ssize_t a, k, axis
    cdef long long n_steps = 0
    cdef double best

    for a in range(3):
        d[a] = e[a] - o[a]
    if d[0] == 0.0 and d[1] == 0.0 and d[2] == 0.0:
        return np.empty((0, 3), dtype=np.int64)

    for a in range(3):
        cur[a] = <long long>floor((o[a] - g0[a]) / v)
        end[a] = <long long>floor((e[a] - g0[a]) / v)
        if d[a] > 0.0:
            step[a] = 1
            tmax[a] = (g0[a] + (cur[a] + 1) * v - o[a]) / d[a]
            tdelta[a] = v / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            tmax[a] = (g0[a] + cur[a] * v - o[a]) / d[a]
            tdelta[a] = -v / d[a]
        else:
            step[a] = 0
            tmax[a] = INFINITY
            tdelta[a] = INFINITY
        n_steps += end[a] - cur[a] if end[a] > cur[a] else cur[a] - end[a]

    out = np.empty((n_steps + 1, 3), dtype=np.int64)
    cdef long long[:, ::1] ov = out
    for a in range(3):
        ov[0, a] = cur[a]
    for k in range(n_steps):
        axis = -1
        best = INFINITY
        for a in range(3):
            if cur[a] != end[a] and tmax[a] < best:
                best = tmax[a]
                axis = a
        cur[axis] += step[axis]
        tmax[axis] += tdelta[axis]
        for a in range(3):
            ov[k + 1, a] = cur[a]
    return out


def integrate_rays(
    origin,
    endpoints,
    grid_origin,
    voxel_size,
    lo,
    hi,
    max_range,
    GridIndex index,
    means,
    prec,
    fitted,
    d2_max,
):
    """Trace, classify and accumulate; same contract as the Python backend."""
    cdef double[::1] o = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double[:, ::1] ep = np.ascontiguousarray(endpoints, dtype=np.float64)
    cdef double[::1] g0 = np.ascontiguousarray(grid_origin, dtype=np.float64)
    cdef double v = voxel_size
    cdef long long[::1] lo_v = np.ascontiguousarray(lo, dtype=np.int64)
    cdef long long[::1] hi_v = np.ascontiguousarray(hi, dtype=np.int64)
    cdef double[:, ::1] mu = np.ascontiguousarray(means, dtype=np.float64).reshape(-1, 3)
    cdef double[:, :, ::1] pr = np.ascontiguousarray(prec, dtype=np.float64).reshape(-1, 3, 3)
    cdef unsigned char[::1] fit = np.ascontiguousarray(fitted, dtype=np.uint8)
    cdef double d2m = d2_max
    cdef double max_r2 = <double>max_range * <double>max_range
    cdef long long n_known = mu.shape[0]
    cdef Py_ssize_t n_rays = ep.shape[0]

    cdef double bmin[3]
    cdef double bmax[3]
    cdef bint origin_inside = True
    cdef Py_ssize_t a, r
    for a in range(3):
        bmin[a] = g0[a] + lo_v[a] * v
        bmax[a] = g0[a] + (hi_v[a] + 1) * v
        if not (o[a] >= bmin[a] and o[a] < bmax[a]):
            origin_inside = False

    ep_slots = np.full(n_rays, -1, dtype=np.int64)
    cdef long long[::1] ep_sl = ep_slots

    cdef vector[double] occ_acc
    cdef vector[double] emp_acc
    cdef vector[char] seen
    cdef vector[long long] touched
    cdef vector[long long] newkeys
    occ_acc.resize(n_known, 0.0)
    emp_acc.resize(n_known, 0.0)
    seen.resize(n_known, 0)

    cdef double d[3]
    cdef double start[3]
    cdef long long cur[3]
    cdef long long end[3]
    cdef long long step[3]
    cdef double tmax[3]
    cdef double tdelta[3]
    cdef double l2, t0, t, best, d2, rx, ry, rz
    cdef long long slot, n_steps, k
    cdef Py_ssize_t axis
    cdef bint oob, inserted
    cdef long long key

    with nogil:
        for r in range(n_rays):
            l2 = 0.0
            for a in range(3):
                d[a] = ep[r, a] - o[a]
                l2 += d[a] * d[a]
            if l2 > max_r2:
                continue
            oob = False
            for a in range(3):
                end[a] = <long long>floor((ep[r, a] - g0[a]) / v)
                if end[a] < lo_v[a] or end[a] > hi_v[a]:
                    oob = True
            if oob:
                continue

            if l2 == 0.0:
                key = c_pack(end[0], end[1], end[2])
                slot = index.c_get_or_insert(key, &inserted)
                if inserted:
                    newkeys.push_back(key)
                    occ_acc.push_back(0.0)
                    emp_acc.push_back(0.0)
                    seen.push_back(0)
                if seen[slot] == 0:
                    seen[slot] = 1
                    touched.push_back(slot)
                occ_acc[slot] += 1.0
                ep_sl[r] = slot
                continue

            if origin_inside:
                for a in range(3):
                    start[a] = o[a]
            else:
                t0 = 0.0
                for a in range(3):
                    if d[a] > 0.0:
                        t = (bmin[a] - o[a]) / d[a]
                        if t > t0:
                            t0 = t
                    elif d[a] < 0.0:
                        t = (bmax[a] - o[a]) / d[a]
                        if t > t0:
                            t0 = t
                for a in range(3):
                    start[a] = o[a] + t0 * d[a]

            n_steps = 0
            for a in range(3):
                cur[a] = <long long>floor((start[a] - g0[a]) / v)
                if cur[a] < lo_v[a]:
                    cur[a] = lo_v[a]
                elif cur[a] > hi_v[a]:
                    cur[a] = hi_v[a]
                if d[a] > 0.0:
                    step[a] = 1
                    tmax[a] = (g0[a] + (cur[a] + 1) * v - o[a]) / d[a]
                    tdelta[a] = v / d[a]
                elif d[a] < 0.0:
                    step[a] = -1
                    tmax[a] = (g0[a] + cur[a] * v - o[a]) / d[a]
                    tdelta[a] = -v / d[a]
                else:
                    step[a] = 0
                    tmax[a] = INFINITY
                    tdelta[a] = INFINITY
                n_steps += end[a] - cur[a] if end[a] > cur[a] else cur[a] - end[a]

            for k in range(n_steps + 1):
                if cur[0] == end[0] and cur[1] == end[1] and cur[2] == end[2]:
                    break
                key = c_pack(cur[0], cur[1], cur[2])
                slot = index.c_get_or_insert(key, &inserted)
                if inserted:
                    newkeys.push_back(key)
                    occ_acc.push_back(0.0)
                    emp_acc.push_back(0.0)
                    seen.push_back(0)
                if slot < n_known and fit[slot]:
                    t = (
                        (mu[slot, 0] - o[0]) * d[0]
                        + (mu[slot, 1] - o[1]) * d[1]
                        + (mu[slot, 2] - o[2]) * d[2]
                    ) / l2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                    rx = o[0] + t * d[0] - mu[slot, 0]
                    ry = o[1] + t * d[1] - mu[slot, 1]
                    rz = o[2] + t * d[2] - mu[slot, 2]
                    d2 = (
                        rx * (pr[slot, 0, 0] * rx + pr[slot, 0, 1] * ry + pr[slot, 0, 2] * rz)
                        + ry * (pr[slot, 1, 0] * rx + pr[slot, 1, 1] * ry + pr[slot, 1, 2] * rz)
                        + rz * (pr[slot, 2, 0] * rx + pr[slot, 2, 1] * ry + pr[slot, 2, 2] * rz)
                    )
                    if d2 <= d2m:
                        if seen[slot] == 0:
                            seen[slot] = 1
                            touched.push_back(slot)
                        emp_acc[slot] += 1.0
                else:
                    if seen[slot] == 0:
                        seen[slot] = 1
                        touched.push_back(slot)
                    emp_acc[slot] += 1.0
                axis = -1
                best = INFINITY
                for a in range(3):
                    if cur[a] != end[a] and tmax[a] < best:
                        best = tmax[a]
                        axis = a
                cur[axis] += step[axis]
                tmax[axis] += tdelta[axis]

            key = c_pack(end[0], end[1], end[2])
            slot = index.c_get_or_insert(key, &inserted)
            if inserted:
                newkeys.push_back(key)
                occ_acc.push_back(0.0)
                emp_acc.push_back(0.0)
                seen.push_back(0)
            if seen[slot] == 0:
                seen[slot] = 1
                touched.push_back(slot)
            occ_acc[slot] += 1.0
            ep_sl[r] = slot

    cdef Py_ssize_t n_touched = touched.size()
    touched_arr = np.empty(n_touched, dtype=np.int64)
    cdef long long[::1] tv = touched_arr
    cdef Py_ssize_t i
    for i in range(n_touched):
        tv[i] = touched[i]
    order = np.argsort(touched_arr, kind="stable")
    touched_arr = touched_arr[order]

    occ_out = np.empty(n_touched, dtype=np.float64)
    emp_out = np.empty(n_touched, dtype=np.float64)
    cdef double[::1] oo = occ_out
    cdef double[::1] eo = emp_out
    cdef long long[::1] to = touched_arr
    for i in range(n_touched):
        oo[i] = occ_acc[to[i]]
        eo[i] = emp_acc[to[i]]

    cdef Py_ssize_t n_new = newkeys.size()
    new_arr = np.empty(n_new, dtype=np.int64)
    cdef long long[::1] nv = new_arr
    for i in range(n_new):
        nv[i] = newkeys[i]

    return ep_slots, touched_arr, occ_out, emp_out, new_arr


def batch_lookup(GridIndex index, keys):
    return index.lookup(keys)
