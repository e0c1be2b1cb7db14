"""Pure-Python backend for the hot kernels.

Reference implementation of the voxel walk, pass-through classification
and evidence accumulation. The compiled backend in _ray_cy.pyx mirrors
this behaviour exactly; parity is enforced by tests/test_kernels.py.
"""
import math

import numpy as np

from ._common import KEY_LIMIT, pack_key

BACKEND_NAME = "python"


class GridIndex:
    """Maps packed voxel keys to dense slot numbers (append-only)."""

    def __init__(self):
        self._map = {}

    def __len__(self):
        return len(self._map)

    def get(self, key):
        return self._map.get(key, -1)

    def insert(self, key):
        slot = self._map.setdefault(key, len(self._map))
        return slot

    def lookup(self, keys):
        """Batch lookup; returns -1 for missing or out-of-range keys."""
        keys = np.asarray(keys, dtype=np.int64)
        get = self._map.get
        return np.fromiter(
            (get(int(k), -1) for k in keys), dtype=np.int64, count=len(keys)
        )


def trace_ray(origin, endpoint, grid_origin, voxel_size):
    """Exact voxel walk from origin to endpoint (Amanatides-Woo style).

    Returns an (K, 3) int64 array of visited voxel indices, starting at
    the origin voxel and ending at the endpoint voxel. Zero-length rays
    return an empty array.
    """
    o = np.asarray(origin, dtype=np.float64)
    e = np.asarray(endpoint, dtype=np.float64)
    g0 = np.asarray(grid_origin, dtype=np.float64)
    v = float(voxel_size)

    d = e - o
    if not np.any(d):
        return np.empty((0, 3), dtype=np.int64)

    cur = np.floor((o - g0) / v).astype(np.int64)
    end = np.floor((e - g0) / v).astype(np.int64)

    step = np.sign(d).astype(np.int64)
    tmax = np.full(3, np.inf)
    tdelta = np.full(3, np.inf)
    for a in range(3):
        if step[a] > 0:
            tmax[a] = (g0[a] + (cur[a] + 1) * v - o[a]) / d[a]
            tdelta[a] = v / d[a]
        elif step[a] < 0:
            tmax[a] = (g0[a] + cur[a] * v - o[a]) / d[a]
            tdelta[a] = -v / d[a]

    n_steps = int(np.abs(end - cur).sum())
    out = np.empty((n_steps + 1, 3), dtype=np.int64)
    out[0] = cur
    for k in range(n_steps):
        axis = -1
        best = np.inf
        for a in range(3):
            if cur[a] != end[a] and tmax[a] < best:
                best = tmax[a]
                axis = a
        cur[axis] += step[axis]
        tmax[axis] += tdelta[axis]
        out[k + 1] = cur
    return out


def _classify_d2(o, d, l2, mean, prec):
    """Squared Mahalanobis distance from the closest segment point to mean."""
    t = ((mean[0] - o[0]) * d[0] + (mean[1] - o[1]) * d[1] + (mean[2] - o[2]) * d[2]) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    rx = o[0] + t * d[0] - mean[0]
    ry = o[1] + t * d[1] - mean[1]
    rz = o[2] + t * d[2] - mean[2]
    return (
        rx * (prec[0, 0] * rx + prec[0, 1] * ry + prec[0, 2] * rz)
        + ry * (prec[1, 0] * rx + prec[1, 1] * ry + prec[1, 2] * rz)
        + rz * (prec[2, 0] * rx + prec[2, 1] * ry + prec[2, 2] * rz)
    )


def integrate_rays(
    origin,
    endpoints,
    grid_origin,
    voxel_size,
    lo,
    hi,
    max_range,
    index,
    means,
    prec,
    fitted,
    d2_max,
):
    """Trace every ray, classify pass-throughs and accumulate evidence.

    Endpoint cells receive one occupied count, traversed cells one empty
    count per ray when the pass-through is classified empty (always, for
    cells without a fitted Gaussian). Missing cells are appended to
    `index`; their packed keys are returned so the caller can grow the
    cell store.

    Returns (endpoint_slots, touched_slots, d_occ, d_emp, new_keys);
    endpoint_slots[r] is -1 for skipped (out-of-range / out-of-bounds)
    rays.
    """
    o = np.asarray(origin, dtype=np.float64)
    endpoints = np.asarray(endpoints, dtype=np.float64)
    g0 = np.asarray(grid_origin, dtype=np.float64)
    v = float(voxel_size)
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    n_known = len(means)

    bmin = g0 + lo * v
    bmax = g0 + (hi + 1) * v
    origin_inside = bool(np.all(o >= bmin) and np.all(o < bmax))

    n_rays = len(endpoints)
    endpoint_slots = np.full(n_rays, -1, dtype=np.int64)
    d_occ = {}
    d_emp = {}
    new_keys = []

    def get_or_insert(ix, iy, iz):
        key = pack_key(ix, iy, iz)
        slot = index.get(key)
        if slot < 0:
            slot = index.insert(key)
            new_keys.append(key)
        return slot

    max_r2 = float(max_range) * float(max_range)

    for r in range(n_rays):
        e = endpoints[r]
        d = e - o
        l2 = float(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if l2 > max_r2:
            continue
        end = np.floor((e - g0) / v).astype(np.int64)
        if np.any(end < lo) or np.any(end > hi):
            continue

        if l2 == 0.0:
            slot = get_or_insert(end[0], end[1], end[2])
            d_occ[slot] = d_occ.get(slot, 0.0) + 1.0
            endpoint_slots[r] = slot
            continue

        if origin_inside:
            start = o
        else:
            t0 = 0.0
            for a in range(3):
                if d[a] > 0.0:
                    t0 = max(t0, (bmin[a] - o[a]) / d[a])
                elif d[a] < 0.0:
                    t0 = max(t0, (bmax[a] - o[a]) / d[a])
            start = o + t0 * d
        cur = np.floor((start - g0) / v).astype(np.int64)
        np.clip(cur, lo, hi, out=cur)

        step = np.sign(d).astype(np.int64)
        tmax = np.full(3, np.inf)
        tdelta = np.full(3, np.inf)
        for a in range(3):
            if step[a] > 0:
                tmax[a] = (g0[a] + (cur[a] + 1) * v - o[a]) / d[a]
                tdelta[a] = v / d[a]
            elif step[a] < 0:
                tmax[a] = (g0[a] + cur[a] * v - o[a]) / d[a]
                tdelta[a] = -v / d[a]

        n_steps = int(np.abs(end - cur).sum())
        for _ in range(n_steps + 1):
            if cur[0] == end[0] and cur[1] == end[1] and cur[2] == end[2]:
                break
            slot = get_or_insert(cur[0], cur[1], cur[2])
            if slot < n_known and fitted[slot]:
                d2 = _classify_d2(o, d, l2, means[slot], prec[slot])
                if d2 <= d2_max:
                    d_emp[slot] = d_emp.get(slot, 0.0) + 1.0
            else:
                d_emp[slot] = d_emp.get(slot, 0.0) + 1.0
            axis = -1
            best = math.inf
            for a in range(3):
                if cur[a] != end[a] and tmax[a] < best:
                    best = tmax[a]
                    axis = a
            cur[axis] += step[axis]
            tmax[axis] += tdelta[axis]

        slot = get_or_insert(end[0], end[1], end[2])
        d_occ[slot] = d_occ.get(slot, 0.0) + 1.0
        endpoint_slots[r] = slot

    touched = np.array(sorted(set(d_occ) | set(d_emp)), dtype=np.int64)
    occ = np.array([d_occ.get(int(s), 0.0) for s in touched], dtype=np.float64)
    emp = np.array([d_emp.get(int(s), 0.0) for s in touched], dtype=np.float64)
    return (
        endpoint_slots,
        touched,
        occ,
        emp,
        np.array(new_keys, dtype=np.int64),
    )


def batch_lookup(index, keys):
    """Lookup with out-of-range key masking (helper for localization)."""
    keys = np.asarray(keys, dtype=np.int64)
    return index.lookup(keys)


__all__ = [
    "BACKEND_NAME",
    "GridIndex",
    "trace_ray",
    "integrate_rays",
    "batch_lookup",
    "KEY_LIMIT",
]
