"""Pure-numpy implementations of the hot data-movement kernels.

The loops run over kernel taps (small, typically 3..7), so every numpy
statement touches a long contiguous stretch; this keeps the fallback within
a small factor of the compiled core.
"""

import numpy as np


def im2col(x, k, stride):
    """Unfold (N, C, Tp) into patch columns (N, C*k, To).

    cols[n, c*k + j, t] = x[n, c, t*stride + j]
    """
    n, c, tp = x.shape
    to = (tp - k) // stride + 1
    cols = np.empty((n, c, k, to), dtype=x.dtype)
    span = (to - 1) * stride + 1
    for j in range(k):
        cols[:, :, j, :] = x[:, :, j : j + span : stride]
    return cols.reshape(n, c * k, to)


def col2im(cols, k, stride, tp):
    """Adjoint of im2col: scatter-add (N, C*k, To) back to (N, C, Tp)."""
    n, ck, to = cols.shape
    c = ck // k
    cols = cols.reshape(n, c, k, to)
    out = np.zeros((n, c, tp), dtype=cols.dtype)
    span = (to - 1) * stride + 1
    for j in range(k):
        out[:, :, j : j + span : stride] += cols[:, :, j, :]
    return out
