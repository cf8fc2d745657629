"""Poisson and Stokes solvers on a periodic grid with solid (Dirichlet) cells.

Two routes are provided.

``MaskedPoisson.solve`` / ``MaskedStokes.solve`` use a capacitance
formulation: the solution is written as a periodic FFT solve driven by the
source plus unknown forces supported on the solid cells (or faces), and
CG determines those forces so that the field vanishes on the solid set.
The result is the exact solution of the eliminated (masked) system; the
Dirichlet condition is enforced, not penalized.

``MaskedPoisson.operators`` / ``MaskedStokes.operators`` expose the
eliminated system itself (unknowns on fluid cells / faces only) for the
generic :func:`solve_spd` / :func:`solve_saddle` kernels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import NonConvergence, RangeError, ZeroModeError
from . import kernels
from .krylov import solve_spd
from .spectral import periodic_poisson, periodic_stokes

CAPACITANCE_TOL = 1e-14


@dataclass(frozen=True)
class SolveInfo:
    """Diagnostics of one masked solve.

    Attributes
    ----------
    iterations : int
        CG iterations on the capacitance system.
    residual : float
        Residual of the masked equations on fluid unknowns, relative to the
        sum of the norms of the individual terms (a backward error; the
        floor of ``||r||/||g||`` grows like ``h^-2`` from rounding in ``lap_h``).
    div_residual : float
        ``||div v|| / ||grad v||`` on fluid cells (Stokes only, 0 for Poisson).
    """

    iterations: int
    residual: float
    div_residual: float = 0.0


def face_masks_from(solid: np.ndarray) -> tuple:
    """A face is solid iff either adjacent center cell is solid."""
    return tuple(solid | np.roll(solid, 1, axis=a) for a in range(solid.ndim))


def _projected_cg(S, b, blocks, tol, maxiter):
    """CG for ``P S z = P b`` where ``P`` removes the mean of each block.

    The residual floor is tied to the unprojected ``b``: for symmetric
    geometries ``P b`` can be pure rounding noise.
    """

    def P(v):
        out = v.copy()
        for lo, hi in blocks:
            if hi > lo:
                out[lo:hi] -= out[lo:hi].mean()
        return out

    return solve_spd(lambda z: P(S(z)), P(b), tol=tol, maxiter=maxiter, atol=1e-15 * np.linalg.norm(b))


class MaskedPoisson:
    """``-lap_h u = f`` on fluid cells, ``u = 0`` on solid cells, periodic.

    Parameters
    ----------
    solid : bool ndarray
        Solid cell mask of shape ``(N,) * d``.
    L : float
        Torus side length.
    """

    def __init__(self, solid: np.ndarray, L: float):
        self.solid = np.asarray(solid, dtype=bool)
        self.L = float(L)
        self.N = self.solid.shape[0]
        self.d = self.solid.ndim
        self.h = self.L / self.N
        self.idx = np.flatnonzero(self.solid)
        self.fluid = ~self.solid

    def _S(self, lam):
        full = np.zeros(self.solid.size)
        full[self.idx] = lam
        return periodic_poisson(full.reshape(self.solid.shape), self.L).ravel()[self.idx]

    def solve(self, f: np.ndarray, tol: float = CAPACITANCE_TOL, maxiter: Optional[int] = None):
        """Solve for ``u``; returns ``(u, SolveInfo)``."""
        f = np.where(self.solid, 0.0, np.asarray(f, dtype=float))
        ns = self.idx.size
        if ns == 0:
            scale = np.abs(f).mean() or 1.0
            if abs(f.mean()) > 1e-12 * scale:
                raise RangeError("hole-free periodic Poisson needs a mean-free source")
            u = periodic_poisson(f, self.L)
            return u, SolveInfo(0, self._residual(u, f))
        lam_p = np.full(ns, -f.sum() / ns)
        b = -periodic_poisson(f, self.L).ravel()[self.idx] - self._S(lam_p)
        cap = maxiter if maxiter is not None else 50 * self.N
        out = _projected_cg(self._S, b, [(0, ns)], tol, cap)
        lam = lam_p + out.x
        forcing = f.ravel().copy()
        forcing[self.idx] += lam
        u = periodic_poisson(forcing.reshape(f.shape), self.L)
        u -= u.ravel()[self.idx].mean()
        u[self.solid] = 0.0
        return u, SolveInfo(out.iterations, self._residual(u, f))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Masked operator ``-lap_h`` restricted to fluid cells (zero on solid)."""
        v = np.where(self.solid, 0.0, u)
        return np.where(self.solid, 0.0, -kernels.laplacian(v, self.h))

    def _residual(self, u, f):
        au = self.apply(u)
        r = au - f
        scale = np.linalg.norm(f) + np.linalg.norm(au)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))

    def operators(self):
        """Eliminated operator and gather/scatter maps on fluid unknowns."""
        fidx = np.flatnonzero(self.fluid)
        shape = self.solid.shape

        def scatter(x):
            full = np.zeros(self.solid.size)
            full[fidx] = x
            return full.reshape(shape)

        def gather(u):
            return u.ravel()[fidx]

        def apply(x):
            return gather(-kernels.laplacian(scatter(x), self.h))

        return apply, gather, scatter


class MaskedStokes:
    """MAC Stokes ``-lap_h v + grad_h p = g``, ``div_h v = 0`` with solid faces.

    Parameters
    ----------
    solid : bool ndarray
        Solid cell mask.
    L : float
        Torus side length.
    """

    def __init__(self, solid: np.ndarray, L: float):
        self.solid = np.asarray(solid, dtype=bool)
        self.fluid = ~self.solid
        self.L = float(L)
        self.N = self.solid.shape[0]
        self.d = self.solid.ndim
        self.h = self.L / self.N
        self.face_masks = face_masks_from(self.solid)
        self.idx = [np.flatnonzero(m) for m in self.face_masks]
        sizes = [i.size for i in self.idx]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.blocks = [(int(self.offsets[a]), int(self.offsets[a + 1])) for a in range(self.d)]

    def _scatter(self, lam):
        shape = self.solid.shape
        out = []
        for a, (lo, hi) in enumerate(self.blocks):
            c = np.zeros(self.solid.size)
            c[self.idx[a]] = lam[lo:hi]
            out.append(c.reshape(shape))
        return out

    def _gather(self, comps):
        return np.concatenate([comps[a].ravel()[self.idx[a]] for a in range(self.d)])

    def _S(self, lam):
        return self._gather(periodic_stokes(self._scatter(lam), self.L)[0])

    def solve(self, g, tol: float = CAPACITANCE_TOL, maxiter: Optional[int] = None):
        """Solve for ``(v, p)``; returns ``(v_components, p, SolveInfo)``.

        ``p`` has zero mean over fluid cells and is set to 0 inside holes.
        """
        g = [np.where(m, 0.0, np.asarray(c, dtype=float)) for c, m in zip(g, self.face_masks)]
        if self.offsets[-1] == 0:
            means = [c.mean() for c in g]
            scale = max(np.abs(c).mean() for c in g) or 1.0
            if max(abs(m) for m in means) > 1e-12 * scale:
                raise ZeroModeError("hole-free periodic Stokes needs a mean-free source")
            v, p = periodic_stokes(g, self.L)
            return v, p - p.mean(), self._info(v, p, g, 0)
        lam_p = np.concatenate(
            [np.full(hi - lo, -g[a].sum() / max(hi - lo, 1)) for a, (lo, hi) in enumerate(self.blocks)]
        )
        for a, (lo, hi) in enumerate(self.blocks):
            if hi == lo and abs(g[a].sum()) > 0:
                raise ZeroModeError(f"component {a} has no solid faces to absorb its mean force")
        b = -self._gather(periodic_stokes(g, self.L)[0]) - self._S(lam_p)
        cap = maxiter if maxiter is not None else 50 * self.N
        out = _projected_cg(self._S, b, self.blocks, tol, cap)
        lam = lam_p + out.x
        forcing = [c + s for c, s in zip(g, self._scatter(lam))]
        v, p = periodic_stokes(forcing, self.L)
        for a in range(self.d):
            if self.idx[a].size:
                v[a] -= v[a].ravel()[self.idx[a]].mean()
            v[a][self.face_masks[a]] = 0.0
        p = p - p[self.fluid].mean()
        p[self.solid] = 0.0
        return v, p, self._info(v, p, g, out.iterations)

    def momentum_residual(self, v, p, g):
        """Momentum residual on fluid faces (zero on solid faces)."""
        res = []
        for a in range(self.d):
            r = -kernels.laplacian(v[a], self.h) + kernels.backward_diff(p, a, self.h) - g[a]
            res.append(np.where(self.face_masks[a], 0.0, r))
        return res

    def _info(self, v, p, g, its):
        r = self.momentum_residual(v, p, g)
        gn = np.sqrt(sum(np.sum(c**2) for c in g))
        for a in range(self.d):
            fl = ~self.face_masks[a]
            gn += np.linalg.norm(kernels.laplacian(v[a], self.h)[fl])
            gn += np.linalg.norm(kernels.backward_diff(p, a, self.h)[fl])
        rn = np.sqrt(sum(np.sum(c**2) for c in r))
        vn = np.sqrt(sum(np.sum(kernels.backward_diff(c, b, self.h) ** 2)
                         for c in v for b in range(self.d)))
        dv = np.where(self.solid, 0.0, kernels.divergence(v, self.h))
        return SolveInfo(
            its,
            float(rn / gn) if gn > 0 else float(rn),
            float(np.linalg.norm(dv) / vn) if vn > 0 else 0.0,
        )

    def operators(self):
        """Eliminated ``(visc_op, div_op, grad_op, gather, scatter, pgather, pscatter)``.

        Velocity unknowns are the fluid faces (all components stacked),
        pressure unknowns the fluid cells; ``div_op = -grad_op^T``.
        """
        shape = self.solid.shape
        fidx = [np.flatnonzero(~m) for m in self.face_masks]
        offs = np.concatenate([[0], np.cumsum([i.size for i in fidx])]).astype(int)
        cidx = np.flatnonzero(self.fluid)
        h = self.h

        def scatter(x):
            out = []
            for a in range(self.d):
                c = np.zeros(self.solid.size)
                c[fidx[a]] = x[offs[a]:offs[a + 1]]
                out.append(c.reshape(shape))
            return out

        def gather(comps):
            return np.concatenate([comps[a].ravel()[fidx[a]] for a in range(self.d)])

        def pscatter(q):
            full = np.zeros(self.solid.size)
            full[cidx] = q
            return full.reshape(shape)

        def pgather(p):
            return p.ravel()[cidx]

        def visc_op(x):
            return gather([-kernels.laplacian(c, h) for c in scatter(x)])

        def div_op(x):
            return pgather(kernels.divergence(scatter(x), h))

        def grad_op(q):
            p = pscatter(q)
            return gather([kernels.backward_diff(p, a, h) for a in range(self.d)])

        return visc_op, div_op, grad_op, gather, scatter, pgather, pscatter


def check_converged(info: SolveInfo, tol: float, what: str) -> None:
    if info.residual > tol:
        raise NonConvergence(f"{what}: masked residual {info.residual:.3e} above {tol:.1e}",
                             info.iterations, info.residual)
