"""Row-parallel CSR x dense product shared by propagation and walk aggregation."""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def _spmm_kernel(indptr, indices, values, x, out):
    n = indptr.shape[0] - 1
    d = x.shape[1]
    for i in prange(n):
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            w = values[k]
            for c in range(d):
                out[i, c] += w * x[j, c]


def spmm(indptr, indices, values, x):
    """Return ``A @ x`` for CSR ``A``.

    Each output row accumulates its stored neighbours left to right, so the
    result is bit-identical for any thread count.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.zeros((indptr.shape[0] - 1, x.shape[1]), dtype=np.float64)
    _spmm_kernel(indptr, indices, np.asarray(values, dtype=np.float64), x, out)
    return out
