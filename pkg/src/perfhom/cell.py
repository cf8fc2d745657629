"""Unit-cell problems with the hole ``eta*T`` and the tensor ``A(eta)``.

The Stokes cell problem is

    -lap w^i + grad q^i = c_eta^2 e^i   in Q0 minus eta*T,
    div w^i = 0,   w^i = 0 on eta*T,   periodic,

and the Poisson one ``-lap w = c_eta^2`` with the same boundary rule.
``A(eta)_ij`` is the cell integral of ``(w^i)_j``; testing the equation
for ``w^j`` with ``w^i`` gives the second expression
``c_eta^-2 <grad w^i, grad w^j>``, which is used as a consistency check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DiscrepancyError, DomainError, GridMismatchError, ResolutionError
from .geometry import HoleModel, PerforationConfig, cell_mask, default_hole
from .numerics import MaskedPoisson, MaskedStokes, ScalarField, StaggeredField, dirichlet_energy
from .numerics.masked import check_converged

DISCREPANCY_RTOL = 1e-4


def c_eta(d: int, eta: float) -> float:
    """Cell scaling ``|log eta|^(-1/2)`` (d = 2) or ``eta^((d-2)/2)`` (d = 3)."""
    if d not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {d}")
    if d == 2:
        if not (0 < eta < 1):
            raise DomainError(f"d = 2 needs 0 < eta < 1, got {eta}")
        return abs(math.log(eta)) ** -0.5
    if not (0 < eta <= 1):
        raise DomainError(f"d = 3 needs 0 < eta <= 1, got {eta}")
    return eta ** ((d - 2) / 2)


@dataclass(frozen=True)
class CellSolution:
    """Solution of the Stokes or Poisson cell problem.

    Attributes
    ----------
    kind : str
        ``"stokes"`` or ``"poisson"``.
    w : tuple
        Stokes: ``d`` face fields ``w^i``; Poisson: a single center field.
    q : tuple
        Stokes pressures ``q^i`` (zero mean over the fluid cells); empty for Poisson.
    A_mean, A_energy : ndarray
        The two expressions of ``A(eta)`` (Poisson: 1x1 arrays holding ``wbar``).
    wbar : ndarray
        Cell averages; ``wbar[i, j]`` is the integral of ``(w^i)_j`` (Stokes)
        or a 1x1 array with the integral of ``w`` (Poisson).
    qbar : ndarray
        Cell averages of ``q^i / c_eta`` (Stokes).
    bounds : dict
        Scaling ratios ``||grad w|| / c``, ``||w||`` and ``||q|| / c`` (max over i).
    """

    kind: str
    d: int
    eta: float
    n: int
    hole: HoleModel
    center: Tuple[float, ...]
    c_eta: float
    w: tuple
    q: tuple
    A_mean: np.ndarray
    A_energy: np.ndarray
    qbar: np.ndarray
    solid: np.ndarray = field(repr=False)
    bounds: dict = field(default_factory=dict)
    iterations: Tuple[int, ...] = ()
    residual: float = 0.0
    div_residual: float = 0.0

    @property
    def wbar(self) -> np.ndarray:
        return self.A_mean

    @property
    def A_eta(self) -> np.ndarray:
        """Average of the two expressions, symmetrized."""
        A = 0.5 * (self.A_mean + self.A_energy)
        return 0.5 * (A + A.T)

    @property
    def discrepancy(self) -> float:
        return float(np.linalg.norm(self.A_mean - self.A_energy) / np.linalg.norm(self.A_mean))

    @property
    def wbar_scalar(self) -> float:
        if self.kind != "poisson":
            raise AttributeError("wbar_scalar is defined for the Poisson cell problem")
        return float(self.A_eta[0, 0])


def _prepare(d, eta, hole, n, center, min_hole_cells):
    hole = hole or default_hole()
    hole.validate(d)
    if not (0 < eta <= 1):
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    if eta * hole.delta2 >= 0.5:
        raise DomainError("eta * delta2 must be below 1/2")
    span = 2.0 * hole.shape.extent(d) * eta * n
    if span.min() < min_hole_cells:
        raise ResolutionError(f"cell hole spans {span.min():.2f} cells, below the floor of {min_hole_cells}")
    center = tuple(center) if center is not None else (0.0,) * d
    solid = cell_mask(d, n, hole, eta, center)
    if not solid.any():
        raise ResolutionError("cell hole rasterizes to an empty set")
    return hole, center, solid


def solve_cell_stokes(
    d: int,
    eta: float,
    hole: Optional[HoleModel] = None,
    n: int = 64,
    center: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
    min_hole_cells: int = 8,
) -> CellSolution:
    """Solve the ``d`` Stokes cell problems on an ``n^d`` grid of the unit cell.

    Parameters
    ----------
    d : int
        Dimension.
    eta : float
        Hole ratio ``a_eps / eps``.
    hole : HoleModel, optional
        Model hole, the default ball otherwise.
    n : int
        Grid cells per axis.
    center : sequence of float, optional
        Hole center inside the cell (only needed to match an offset lattice).
    tol : float
        Required relative residual of the masked equations.
    min_hole_cells : int
        Resolution floor on the hole diameter in cells.
    """
    c = c_eta(d, eta)
    hole, center, solid = _prepare(d, eta, hole, n, center, min_hole_cells)
    h = 1.0 / n
    solver = MaskedStokes(solid, 1.0)
    ws, qs, its = [], [], []
    res = dres = 0.0
    for i in range(d):
        g = [np.full(solid.shape, c * c if a == i else 0.0) for a in range(d)]
        v, p, info = solver.solve(g)
        check_converged(info, tol, f"cell Stokes corrector {i}")
        ws.append(v)
        qs.append(p)
        its.append(info.iterations)
        res, dres = max(res, info.residual), max(dres, info.div_residual)
    A_mean = np.array([[ws[i][j].mean() for j in range(d)] for i in range(d)])
    grads = [[np.stack(_grads(w[a], h)) for a in range(d)] for w in ws]
    A_energy = np.array(
        [[sum(np.sum(grads[i][a] * grads[j][a]) for a in range(d)) * h**d / c**2 for j in range(d)] for i in range(d)]
    )
    qbar = np.array([q.mean() / c for q in qs])
    bounds = {
        "grad_w_over_c": max(np.sqrt(dirichlet_energy(w, h)) for w in ws) / c,
        "w": max(np.sqrt(sum(np.sum(x**2) for x in w) * h**d) for w in ws),
        "q_over_c": max(np.sqrt(np.sum(q**2) * h**d) for q in qs) / c,
    }
    fields_w = tuple(StaggeredField(tuple(w), h, solver.face_masks) for w in ws)
    fields_q = tuple(ScalarField(q, h) for q in qs)
    return CellSolution("stokes", d, eta, n, hole, center, c, fields_w, fields_q, A_mean, A_energy, qbar,
                        solid, bounds, tuple(its), res, dres)


def _grads(u, h):
    from .numerics import kernels

    return [kernels.backward_diff(u, b, h) for b in range(u.ndim)]


def solve_cell_poisson(
    d: int,
    eta: float,
    hole: Optional[HoleModel] = None,
    n: int = 64,
    center: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
    min_hole_cells: int = 8,
) -> CellSolution:
    """Solve ``-lap w = c_eta^2`` on the unit cell minus ``eta*T`` (``w = 0`` on the hole)."""
    c = c_eta(d, eta)
    hole, center, solid = _prepare(d, eta, hole, n, center, min_hole_cells)
    h = 1.0 / n
    w, info = MaskedPoisson(solid, 1.0).solve(np.full(solid.shape, c * c))
    check_converged(info, tol, "cell Poisson corrector")
    wbar = np.array([[w.mean()]])
    energy = np.array([[dirichlet_energy([w], h) / c**2]])
    bounds = {"grad_w_over_c": np.sqrt(dirichlet_energy([w], h)) / c, "w": np.sqrt(np.sum(w**2) * h**d)}
    return CellSolution("poisson", d, eta, n, hole, center, c, (ScalarField(w, h),), (), wbar, energy,
                        np.zeros(0), solid, bounds, (info.iterations,), info.residual, 0.0)


@dataclass(frozen=True)
class Permeability:
    """``A(eta)`` from a cell solution, with the gap between its two expressions."""

    A: np.ndarray
    A_mean: np.ndarray
    A_energy: np.ndarray
    discrepancy: float
    asymmetry: float
    min_eigenvalue: float


def permeability(sol: CellSolution, rtol: float = DISCREPANCY_RTOL) -> Permeability:
    """Average the two expressions of ``A(eta)`` and check that they agree.

    Raises
    ------
    DiscrepancyError
        If the relative gap exceeds ``rtol``.
    """
    if sol.discrepancy > rtol:
        raise DiscrepancyError(f"A(eta) expressions differ by {sol.discrepancy:.2e} (> {rtol:.1e})")
    A = sol.A_eta
    asym = float(np.linalg.norm(sol.A_mean - sol.A_mean.T) / np.linalg.norm(sol.A_mean))
    return Permeability(A, sol.A_mean, sol.A_energy, sol.discrepancy, asym, float(np.linalg.eigvalsh(A).min()))


@dataclass(frozen=True)
class LimitEstimate:
    """Extrapolated ``eta -> 0`` limit of ``A(eta)`` along a ladder."""

    etas: Tuple[float, ...]
    values: Tuple[np.ndarray, ...]
    limit: np.ndarray
    discrepancy: float
    monotone: bool


def aitken(x0, x1, x2):
    """Aitken delta-squared extrapolation, entrywise; falls back to ``x2`` on flat data."""
    x0, x1, x2 = (np.asarray(v, dtype=float) for v in (x0, x1, x2))
    d1, d2 = x1 - x0, x2 - x1
    den = d2 - d1
    scale = np.maximum(np.abs(x2), 1e-300)
    safe = np.abs(den) > 1e-12 * scale
    out = np.where(safe, x2 - d2**2 / np.where(safe, den, 1.0), x2)
    return out


def limit_tensor(solutions: Sequence[CellSolution]) -> LimitEstimate:
    """Estimate ``lim A(eta)`` from solutions along a halving ``eta`` ladder (Aitken on the last three)."""
    sols = sorted(solutions, key=lambda s: -s.eta)
    if len(sols) < 3:
        raise ValueError("limit extrapolation needs at least three ladder points")
    vals = tuple(s.A_eta for s in sols)
    lim = aitken(*vals[-3:])
    lim = 0.5 * (lim + lim.T)
    diffs = [np.linalg.norm(b - a) for a, b in zip(vals, vals[1:])]
    monotone = all(y < x for x, y in zip(diffs, diffs[1:]))
    disc = float(np.linalg.norm(lim - vals[-1]) / np.linalg.norm(lim))
    return LimitEstimate(tuple(s.eta for s in sols), vals, lim, disc, monotone)


@dataclass(frozen=True)
class LatticeCorrector:
    """Cell correctors tiled over the torus: ``w_{eta,eps}(x) = w_eta(x/eps)``."""

    w: tuple
    q: tuple
    eps: float
    sigma: float
    c_eta: float


def tile_cell_array(arr: np.ndarray, n: int, m: int) -> np.ndarray:
    """Tile a cell-grid array (hole-centered layout) onto the torus grid."""
    d = arr.ndim
    blk = np.roll(arr, [-(n // 2)] * d, axis=tuple(range(d)))
    return np.tile(blk, (m,) * d)


def rescale_corrector(sol: CellSolution, config: PerforationConfig) -> LatticeCorrector:
    """Tile ``sol`` onto the torus of ``config``.

    Raises
    ------
    GridMismatchError
        If the dimension, ``eta``, hole, grid resolution or hole offset of
        the cell solve do not match the lattice.
    """
    if sol.d != config.d or sol.n != config.n:
        raise GridMismatchError(f"cell grid (d={sol.d}, n={sol.n}) does not match lattice (d={config.d}, n={config.n})")
    if abs(sol.eta - config.eta) > 1e-12 * config.eta:
        raise GridMismatchError(f"cell eta={sol.eta} differs from lattice eta={config.eta}")
    if sol.hole != config.hole:
        raise GridMismatchError("cell hole model differs from the lattice hole model")
    want = config.cell_center_offset()
    if any(abs(a - b) > 1e-12 for a, b in zip(want, sol.center)):
        raise GridMismatchError(f"cell hole center {sol.center} does not match lattice offset {want}")
    h = config.h
    if sol.kind == "stokes":
        solid = tile_cell_array(sol.solid, config.n, config.m)
        faces = tuple(solid | np.roll(solid, 1, axis=a) for a in range(config.d))
        w = tuple(
            StaggeredField(tuple(tile_cell_array(c, config.n, config.m) for c in wi.components), h, faces)
            for wi in sol.w
        )
        q = tuple(ScalarField(tile_cell_array(qi.values, config.n, config.m), h) for qi in sol.q)
    else:
        w = (ScalarField(tile_cell_array(sol.w[0].values, config.n, config.m), h),)
        q = ()
    return LatticeCorrector(w, q, config.eps, config.sigma, sol.c_eta)
