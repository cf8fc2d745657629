"""Staggered-grid differential operators on field objects.

``grad`` is the backward difference onto lower faces and ``div`` the
forward difference back to centers, so the pair is exactly adjoint under
the ``h^d``-weighted inner products and ``lap = div . grad``.
"""
from __future__ import annotations

import numpy as np

from ..errors import GridMismatchError
from . import kernels
from .fields import ScalarField, StaggeredField


def grad(p: ScalarField) -> StaggeredField:
    """Discrete gradient of a center field, living on faces."""
    if not isinstance(p, ScalarField):
        raise GridMismatchError("grad expects a ScalarField")
    comps = tuple(kernels.backward_diff(p.values, a, p.h) for a in range(p.d))
    return StaggeredField(comps, p.h)


def div(v: StaggeredField) -> ScalarField:
    """Discrete divergence of a face field, living on centers."""
    if not isinstance(v, StaggeredField):
        raise GridMismatchError("div expects a StaggeredField")
    return ScalarField(kernels.divergence(v.components, v.h), v.h)


def lap(u: ScalarField) -> ScalarField:
    """Discrete Laplacian, defined as ``div(grad(u))``."""
    return div(grad(u))


def vector_lap(v: StaggeredField) -> StaggeredField:
    """Component-wise Laplacian of a face field."""
    return StaggeredField(tuple(kernels.laplacian(c, v.h) for c in v.components), v.h)


def dirichlet_energy(arrays, h: float) -> float:
    """``sum_a sum_b ||D_b^- u_a||^2 h^d`` for a list of periodic arrays."""
    arrays = [np.asarray(u, dtype=float) for u in arrays]
    d = arrays[0].ndim
    total = 0.0
    for u in arrays:
        for b in range(d):
            total += float(np.sum(kernels.backward_diff(u, b, h) ** 2))
    return total * h**d


def grad_norm(u) -> float:
    """L2 norm of the full discrete gradient of a scalar or staggered field."""
    if isinstance(u, ScalarField):
        return float(np.sqrt(dirichlet_energy([u.values], u.h)))
    if isinstance(u, StaggeredField):
        return float(np.sqrt(dirichlet_energy(u.components, u.h)))
    raise GridMismatchError("grad_norm expects a field")
