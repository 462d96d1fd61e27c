"""Kernel backend selection.

The compiled Cython core is preferred when present; the numpy fallback is
drop-in equivalent. NDG_KERNELS=fallback forces the pure-numpy path (used by
the backend-parity tests and the benchmark).
"""

import os

import numpy as np

from . import fallback

if os.environ.get("NDG_KERNELS", "").lower() in ("fallback", "py", "python"):
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "fallback"


def im2col(x, k, stride):
    x = np.ascontiguousarray(x)
    return _impl.im2col(x, k, stride)


def col2im(cols, k, stride, tp):
    cols = np.ascontiguousarray(cols)
    return _impl.col2im(cols, k, stride, tp)
