import numpy as np

ALIGN_BYTES = 32


def aligned_empty(shape, dtype, order="C", align=ALIGN_BYTES):
    """Uninitialised array whose data pointer sits on an ``align``-byte boundary."""
    dtype = np.dtype(dtype)
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    raw = np.empty(nbytes + align, dtype=np.uint8)
    offset = (-raw.ctypes.data) % align
    flat = raw[offset:offset + nbytes].view(dtype)
    return flat.reshape(shape, order=order)


def aligned_zeros(shape, dtype, order="C", align=ALIGN_BYTES):
    out = aligned_empty(shape, dtype, order=order, align=align)
    out[...] = 0
    return out
