"""Backend selection for the periodic stencil kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Setting ``PERFHOM_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("PERFHOM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels
        BACKEND = "python"


def _c(u):
    return np.ascontiguousarray(u, dtype=float)


def laplacian(u: np.ndarray, h: float, impl=None) -> np.ndarray:
    """Periodic 5/7-point Laplacian of a 2-D or 3-D array."""
    impl = impl or _impl
    u = _c(u)
    if u.ndim == 2:
        return np.asarray(impl.laplacian2(u, h))
    return np.asarray(impl.laplacian3(u, h))


def backward_diff(u: np.ndarray, axis: int, h: float, impl=None) -> np.ndarray:
    """``(u[j] - u[j - e_axis]) / h`` with periodic wrap."""
    impl = impl or _impl
    return np.asarray(impl.backward_diff(_c(u), axis, h))


def forward_diff(u: np.ndarray, axis: int, h: float, impl=None) -> np.ndarray:
    """``(u[j + e_axis] - u[j]) / h`` with periodic wrap."""
    impl = impl or _impl
    return np.asarray(impl.forward_diff(_c(u), axis, h))


def divergence(components, h: float, impl=None) -> np.ndarray:
    """Forward-difference divergence of face components."""
    impl = impl or _impl
    comps = [_c(c) for c in components]
    if len(comps) == 2:
        return np.asarray(impl.divergence2(*comps, h))
    return np.asarray(impl.divergence3(*comps, h))
