"""Voxel key packing shared by the compiled and pure-Python backends.

A signed (ix, iy, iz) triple is packed into one int64 with 21 bits per
axis, so indices must stay within +-2^20. Grid extents cap indices far
below that; query helpers mask anything larger to "missing".
"""
import numpy as np

KEY_OFFSET = 1 << 20
KEY_SPAN = 1 << 21
KEY_LIMIT = KEY_OFFSET  # |index| must be < KEY_LIMIT


def pack_keys(ijk):
    """Pack an (N, 3) int array of voxel indices into (N,) int64 keys."""
    ijk = np.asarray(ijk, dtype=np.int64)
    return (
        ((ijk[..., 0] + KEY_OFFSET) << 42)
        | ((ijk[..., 1] + KEY_OFFSET) << 21)
        | (ijk[..., 2] + KEY_OFFSET)
    )


def unpack_keys(keys):
    """Inverse of pack_keys; returns an (N, 3) int64 array."""
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty(keys.shape + (3,), dtype=np.int64)
    out[..., 0] = (keys >> 42) - KEY_OFFSET
    out[..., 1] = ((keys >> 21) & (KEY_SPAN - 1)) - KEY_OFFSET
    out[..., 2] = (keys & (KEY_SPAN - 1)) - KEY_OFFSET
    return out


def pack_key(ix, iy, iz):
    """Scalar variant of pack_keys."""
    return (
        ((int(ix) + KEY_OFFSET) << 42)
        | ((int(iy) + KEY_OFFSET) << 21)
        | (int(iz) + KEY_OFFSET)
    )
