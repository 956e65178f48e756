"""Convolution lowering kernels, compiled when available.

The Cython extension ``dgfilter._ckernels`` is preferred. Setting the
environment variable ``DGF_PURE_PYTHON=1`` before import forces the numpy
fallback; ``BACKEND`` reports which one is active.
"""
import os

import numpy as np

from . import _npkernels

_compiled = None
if not os.environ.get("DGF_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def conv_output_size(n, k, stride=1, dilation=1, padding=0):
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def im2col(x, k, stride=1, dilation=1, pad=0, backend=None):
    """Lower a ``B x C x H x W`` array to a ``(C*k*k, B*Ho*Wo)`` column matrix."""
    impl = _select(backend)
    return impl.im2col(np.ascontiguousarray(x), int(k), int(stride), int(dilation), int(pad))


def col2im(cols, shape, k, stride=1, dilation=1, pad=0, backend=None):
    """Adjoint of :func:`im2col`: scatter-add columns back to ``shape``."""
    impl = _select(backend)
    return impl.col2im(np.ascontiguousarray(cols), tuple(int(s) for s in shape),
                       int(k), int(stride), int(dilation), int(pad))


def _select(backend):
    if backend is None:
        return _compiled if _compiled is not None else _npkernels
    if backend == "numpy":
        return _npkernels
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        return _compiled
    raise ValueError(f"unknown kernel backend {backend!r}")
