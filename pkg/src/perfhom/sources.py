"""Smooth compactly supported sources and test functions on the torus grid."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import ScalarField, StaggeredField, coordinates


def bump_profile(r2: np.ndarray, radius: float) -> np.ndarray:
    """Radial C2 polynomial bump ``(1 - |x|^2/R^2)^3`` on ``|x| < R``, 0 outside."""
    return np.maximum(0.0, 1.0 - r2 / radius**2) ** 3


def _r2(coords, center):
    return sum((c - x) ** 2 for c, x in zip(coords, center))


def scalar_bump(d: int, N: int, L: float, radius: float, center: Optional[Sequence[float]] = None) -> ScalarField:
    """Bump sampled at cell centers."""
    center = center if center is not None else (0.0,) * d
    coords = coordinates(d, N, L)
    return ScalarField(np.broadcast_to(bump_profile(_r2(coords, center), radius), (N,) * d).copy(), L / N)


def scalar_dipole(d: int, N: int, L: float, radius: float, separation: float) -> ScalarField:
    """Difference of two bumps displaced by ``+-separation/2`` along axis 0; mean zero."""
    off = np.zeros(d)
    off[0] = separation / 2
    plus = scalar_bump(d, N, L, radius, off).values
    minus = scalar_bump(d, N, L, radius, -off).values
    # antisymmetric sampling makes the discrete integral vanish exactly
    return ScalarField(plus - minus, L / N)


def sample_faces(func: Callable[..., np.ndarray], d: int, N: int, L: float) -> StaggeredField:
    """Sample ``func(a, *coords)`` on the faces normal to each axis ``a``."""
    comps = []
    for a in range(d):
        coords = coordinates(d, N, L, axis_shift=a)
        comps.append(np.broadcast_to(func(a, *coords), (N,) * d).astype(float).copy())
    return StaggeredField(tuple(comps), L / N)


def vector_bump(d: int, N: int, L: float, radius: float, direction: int = 0,
                center: Optional[Sequence[float]] = None) -> StaggeredField:
    """``bump(x) * e_direction`` sampled on faces."""
    center = center if center is not None else (0.0,) * d

    def f(a, *coords):
        if a != direction:
            return np.zeros(1)
        return bump_profile(_r2(coords, center), radius)

    return sample_faces(f, d, N, L)


def vector_dipole(d: int, N: int, L: float, radius: float, separation: float, direction: int = 0) -> StaggeredField:
    """Mean-free vector source ``(bump(x - s) - bump(x + s)) e_direction``."""
    off = np.zeros(d)
    off[0] = separation / 2
    plus = vector_bump(d, N, L, radius, direction, off)
    minus = vector_bump(d, N, L, radius, direction, -off)
    return StaggeredField(tuple(p - m for p, m in zip(plus.components, minus.components)), L / N)


def swirl(d: int, N: int, L: float, radius: float) -> StaggeredField:
    """Divergence-free compactly supported field: the discrete curl of a bump stream function.

    In 2-D ``v = (D_1 psi, -D_0 psi)`` with ``psi`` sampled at cell corners;
    in 3-D the same construction acts in the (0, 1) plane.
    """
    h = L / N
    x = coordinates(d, N, L)
    corner = [c - h / 2 for c in x]
    psi = np.broadcast_to(bump_profile(_r2(corner, (0.0,) * d), radius), (N,) * d)
    comps = [np.zeros((N,) * d) for _ in range(d)]
    # v0 on the face j - e0/2 uses psi at corners j - e0/2 -+ e1/2
    comps[0] = (np.roll(psi, -1, 1) - psi) / h
    comps[1] = -(np.roll(psi, -1, 0) - psi) / h
    return StaggeredField(tuple(comps), h)
