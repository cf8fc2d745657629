"""Discrete field carriers on the periodic torus ``[-L/2, L/2)^d``.

Cell ``j`` has center ``-L/2 + (j + 1/2) h``.  Component ``a`` of a
staggered field sits on the lower face of each cell along axis ``a``,
i.e. at the cell center shifted by ``-h/2`` along that axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import GridMismatchError


def _check_grid(shape, d=None):
    if len(shape) not in (2, 3):
        raise GridMismatchError(f"fields must be 2-D or 3-D, got shape {shape}")
    if len(set(shape)) != 1:
        raise GridMismatchError(f"grid must be cubic, got shape {shape}")
    if d is not None and len(shape) != d:
        raise GridMismatchError(f"expected a {d}-D grid, got shape {shape}")


@dataclass(frozen=True)
class ScalarField:
    """Center-sampled real field.

    Parameters
    ----------
    values : ndarray
        Array of shape ``(N,) * d``.
    h : float
        Grid spacing.
    """

    values: np.ndarray
    h: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        _check_grid(v.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("ScalarField values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "h", float(self.h))

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> float:
        return self.N * self.h

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def norm(self) -> float:
        """Discrete L2 norm with weight ``h^d``."""
        return float(np.sqrt(np.sum(self.values**2) * self.cell_volume))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(values, self.h)


@dataclass(frozen=True)
class StaggeredField:
    """Face-sampled vector field on the MAC grid.

    Parameters
    ----------
    components : sequence of ndarray
        ``d`` arrays of shape ``(N,) * d``; component ``a`` lives on faces
        normal to axis ``a``.
    h : float
        Grid spacing.
    face_masks : sequence of bool ndarray, optional
        Solid-face masks.  When given, masked entries must be exactly 0.
    """

    components: Tuple[np.ndarray, ...]
    h: float
    face_masks: Optional[Tuple[np.ndarray, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if not comps:
            raise GridMismatchError("StaggeredField needs at least one component")
        _check_grid(comps[0].shape, d=len(comps))
        for c in comps:
            if c.shape != comps[0].shape:
                raise GridMismatchError("component shapes differ")
            if not np.all(np.isfinite(c)):
                raise ValueError("StaggeredField components must be finite")
        masks = self.face_masks
        if masks is not None:
            masks = tuple(np.asarray(m, dtype=bool) for m in masks)
            if len(masks) != len(comps) or any(m.shape != comps[0].shape for m in masks):
                raise GridMismatchError("face masks do not match the components")
            for c, m in zip(comps, masks):
                if np.any(c[m] != 0.0):
                    raise ValueError("masked faces must hold exactly zero")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "face_masks", masks)
        object.__setattr__(self, "h", float(self.h))

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def N(self) -> int:
        return self.components[0].shape[0]

    @property
    def L(self) -> float:
        return self.N * self.h

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(c**2) for c in self.components) * self.cell_volume))

    def means(self) -> np.ndarray:
        return np.array([c.mean() for c in self.components])

    @classmethod
    def zeros(cls, d: int, N: int, h: float) -> "StaggeredField":
        return cls(tuple(np.zeros((N,) * d) for _ in range(d)), h)


def inner(a, b) -> float:
    """Discrete L2 inner product of two scalar or two staggered fields."""
    if isinstance(a, ScalarField) and isinstance(b, ScalarField):
        _same_grid(a, b)
        return float(np.sum(a.values * b.values) * a.cell_volume)
    if isinstance(a, StaggeredField) and isinstance(b, StaggeredField):
        _same_grid(a, b)
        return float(sum(np.sum(x * y) for x, y in zip(a.components, b.components)) * a.cell_volume)
    raise GridMismatchError("inner product needs two fields of the same kind")


def _same_grid(a, b):
    if a.d != b.d or a.N != b.N or not np.isclose(a.h, b.h, rtol=1e-14, atol=0.0):
        raise GridMismatchError(f"grids differ: (d={a.d}, N={a.N}, h={a.h}) vs (d={b.d}, N={b.N}, h={b.h})")


def cell_centers(N: int, L: float) -> np.ndarray:
    """1-D cell-center coordinates of the torus ``[-L/2, L/2)``."""
    h = L / N
    # (2j + 1 - N) h / 2 is exactly antisymmetric under j -> N - 1 - j
    return (2.0 * np.arange(N) + 1.0 - N) * (h / 2.0)


def coordinates(d: int, N: int, L: float, axis_shift: Optional[int] = None) -> list:
    """Broadcastable coordinate arrays of centers or of faces normal to ``axis_shift``."""
    x = cell_centers(N, L)
    out = []
    for a in range(d):
        xa = x - (L / N) / 2.0 if axis_shift == a else x
        shape = [1] * d
        shape[a] = N
        out.append(xa.reshape(shape))
    return out


def as_arrays(components: Sequence) -> list:
    return [np.asarray(c, dtype=float) for c in components]
