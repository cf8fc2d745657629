"""Restriction operator, pressure extension into the holes and frequency split.

The restriction replaces a torus velocity field inside every ball
``B(eps*x_k, delta2*eps)`` by the solution of a local MAC Stokes problem in
the annulus ``B \\ T_k``: Dirichlet data ``u`` on the ball boundary, zero on
the hole, and divergence ``div u`` plus the hole's divergence spread evenly
over the annulus.  All holes share one rasterized geometry, so the local
saddle system is assembled and LU-factorized once and solved for every hole
as a block of right-hand sides.

The unknown of the local problem is the correction ``delta = R(u) - u``; a
field that already vanishes on the holes produces an exactly zero
right-hand side and therefore comes back unchanged bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatchError, InsufficientLadder, LocalSolveFailure, ResolutionError, SizeError
from .geometry import PerforationConfig, Regime, build_masks, cell_coords, cell_mask
from .numerics import kernels
from .numerics.fields import ScalarField, StaggeredField, coordinates
from .numerics.operators import dirichlet_energy
from .numerics.spectral import check_fft_size, wavenumbers
from .scaling import loglog_slope, spread

LOCAL_TOL = 1e-10


# ------------------------------------------------------------ local geometry


class _Annulus:
    """Index maps of the per-hole annulus problem for one configuration."""

    def __init__(self, config: PerforationConfig, min_annulus_cells: float):
        d, n, m = config.d, config.n, config.m
        hole = config.hole
        center = config.cell_center_offset()
        solid_c = cell_mask(d, n, hole, config.eta, center)
        coords = cell_coords(d, n, center)
        ball_c = np.broadcast_to(sum(c * c for c in coords) <= hole.delta2**2, (n,) * d)
        width = (hole.delta2 - config.eta * hole.shape.radii(d)[1]) * n
        if width < min_annulus_cells:
            raise ResolutionError(
                f"annulus spans {width:.2f} cells radially, below the floor of {min_annulus_cells}")
        if not solid_c.any():
            raise ResolutionError("hole rasterizes to an empty set")

        # reference cell nearest to the hole center; ball cells sit at small offsets from it
        ref = [int(np.argmin(np.abs(c.ravel()))) for c in coords]
        grids = np.meshgrid(*([np.arange(n)] * d), indexing="ij")
        offs = [((g - r + n // 2) % n) - n // 2 for g, r in zip(grids, ref)]
        inball = np.asarray(ball_c)
        lo = [int(o[inball].min()) - 1 for o in offs]
        hi = [int(o[inball].max()) + 1 for o in offs]
        W = [b - a + 1 for a, b in zip(lo, hi)]
        if max(W) > n:
            raise ResolutionError("annulus box exceeds one lattice period")
        self.d, self.n, self.m, self.N = d, n, m, config.N
        self.box = tuple(W)

        # box cell -> cell-frame index
        bgrid = np.meshgrid(*[np.arange(w) for w in W], indexing="ij")
        cf = tuple((r + l + b) % n for r, l, b in zip(ref, lo, bgrid))
        self.inB = np.asarray(ball_c)[cf]
        self.inT = np.asarray(solid_c)[cf] & self.inB
        if int(self.inT.sum()) != int(solid_c.sum()):
            raise ResolutionError("hole is not contained in the ball B(x_k, delta2)")
        for a in range(d):
            for s in (1, -1):
                if np.any(np.roll(self.inT, s, axis=a) & ~self.inB):
                    raise ResolutionError("hole touches the boundary of B(x_k, delta2)")
        self.inA = self.inB & ~self.inT
        if not self.inA.any():
            raise ResolutionError("annulus B(x_k, delta2) minus the hole contains no cell")

        # torus index of box cell b for the hole of lattice block j:
        # cell-frame index i lives at j*n + ((i - n//2) mod n); box origin at ref + lo
        start = [((r + l) - n // 2) % n for r, l in zip(ref, lo)]
        blocks = np.meshgrid(*([np.arange(m)] * d), indexing="ij")
        self.n_holes = m**d
        tor = []
        for a in range(d):
            base = (blocks[a].ravel() * n + start[a])[:, None]
            axis_idx = (base + np.arange(W[a])[None, :]) % self.N  # (holes, W_a)
            tor.append(axis_idx)
        self._tor = tor
        self._assemble()

    @property
    def lu(self):
        """Sparse LU of the local system, factorized on first use."""
        if self._lu is None:
            try:
                self._lu = spla.splu(self.M)
            except RuntimeError as exc:  # isolated annulus cells make M singular
                raise ResolutionError(f"local annulus system is singular ({exc}); widen the annulus") from None
        return self._lu

    # -- flat torus indices of a set of box cells, for every hole: (holes, k)
    def torus_flat(self, cells: tuple) -> np.ndarray:
        d, N = self.d, self.N
        flat = np.zeros((self.n_holes, cells[0].size), dtype=np.int64)
        for a in range(d):
            flat = flat * N + self._tor[a][:, cells[a]]
        return flat

    def _assemble(self):
        d, W = self.d, self.box
        inB, inT, inA = self.inB, self.inT, self.inA
        shape = W
        solid_f, inter_f = [], []
        for a in range(d):
            lower = np.roll(inT, 1, axis=a)
            lowB = np.roll(inB, 1, axis=a)
            valid = np.ones(shape, dtype=bool)
            idx = [slice(None)] * d
            idx[a] = 0
            valid[tuple(idx)] = False  # no lower neighbour inside the box
            solid_f.append(valid & (inT | lower))
            inter_f.append(valid & inB & lowB & ~(inT | lower))
        # numbering: interior faces (velocity), then annulus cells (pressure)
        vid = []
        nv = 0
        for a in range(d):
            ids = np.full(shape, -1, dtype=np.int64)
            k = int(inter_f[a].sum())
            ids[inter_f[a]] = nv + np.arange(k)
            vid.append(ids)
            nv += k
        pid = np.full(shape, -1, dtype=np.int64)
        npr = int(inA.sum())
        pid[inA] = nv + np.arange(npr)
        # known-face numbering (solid faces: delta = -u there)
        sid = []
        ns = 0
        for a in range(d):
            ids = np.full(shape, -1, dtype=np.int64)
            k = int(solid_f[a].sum())
            ids[solid_f[a]] = ns + np.arange(k)
            sid.append(ids)
            ns += k

        rows, cols, vals = [], [], []
        rrows, rcols, rvals = [], [], []  # rhs = Rm @ u_solid

        def shift(arr, a, s):
            # arr value at cell b + s*e_a (outside the box -> -1 / False)
            out = np.roll(arr, -s, axis=a)
            idx = [slice(None)] * d
            idx[a] = -1 if s > 0 else 0
            out[tuple(idx)] = -1 if arr.dtype != bool else False
            return out

        # momentum rows: 2d*delta - sum_nb delta + (p'_b - p'_{b-e_a}) = -sum_{solid nb} u
        for a in range(d):
            me = vid[a]
            sel = me >= 0
            r = me[sel]
            rows.append(r); cols.append(r); vals.append(np.full(r.size, 2.0 * d))
            for c in range(d):
                for s in (1, -1):
                    nb_v = shift(vid[a], c, s)[sel]
                    nb_s = shift(sid[a], c, s)[sel]
                    ok = nb_v >= 0
                    rows.append(r[ok]); cols.append(nb_v[ok]); vals.append(-np.ones(ok.sum()))
                    ok = nb_s >= 0
                    # known delta = -u moves to the rhs with sign -(-1)(-u) = -u
                    rrows.append(r[ok]); rcols.append(nb_s[ok]); rvals.append(-np.ones(ok.sum()))
            p_hi = pid[sel]
            p_lo = shift(pid, a, -1)[sel]
            rows.append(r); cols.append(p_hi); vals.append(np.ones(r.size))
            rows.append(r); cols.append(p_lo); vals.append(-np.ones(r.size))
        # continuity rows: sum_a delta_a(b+e_a) - delta_a(b) = s_T/n_A - known terms.
        # The rows sum to a compatibility identity, so the last one is replaced by
        # pinning its pressure; the pressure is re-centred after the solve.
        selA = pid >= 0
        rA = pid[selA]
        pin = int(rA.max())
        for a in range(d):
            for s, sign in ((1, 1.0), (0, -1.0)):
                fv = (shift(vid[a], a, 1) if s else vid[a])[selA]
                fs = (shift(sid[a], a, 1) if s else sid[a])[selA]
                ok = (fv >= 0) & (rA != pin)
                rows.append(rA[ok]); cols.append(fv[ok]); vals.append(np.full(ok.sum(), sign))
                ok = (fs >= 0) & (rA != pin)
                # known delta = -u: move sign*(-u) to the rhs -> +sign*u
                rrows.append(rA[ok]); rcols.append(fs[ok]); rvals.append(np.full(ok.sum(), sign))
        rows.append(np.array([pin])); cols.append(np.array([pin])); vals.append(np.ones(1))

        # hole flux s_T = sum_T sum_a u_a(b+e_a) - u_a(b); every face of a hole cell is solid
        flux = np.zeros(ns)
        for a in range(d):
            np.add.at(flux, shift(sid[a], a, 1)[inT], 1.0)
            np.add.at(flux, sid[a][inT], -1.0)
        spread_rows = np.zeros(nv + npr)
        spread_rows[rA[rA != pin]] = 1.0 / npr
        neq = nv + npr

        cat = np.concatenate
        self.M = sp.csc_matrix((cat(vals), (cat(rows), cat(cols))), shape=(neq, neq))
        self.Rm = sp.csr_matrix((cat(rvals), (cat(rrows), cat(rcols))), shape=(neq, ns))
        self.nv, self.npr = nv, npr
        self.flux, self.spread_rows = flux, spread_rows
        self._lu = None
        # gather/scatter indices
        self.solid_cells = [np.nonzero(solid_f[a]) for a in range(d)]
        self.inter_cells = [np.nonzero(inter_f[a]) for a in range(d)]
        self.solid_flat = [self.torus_flat(c) for c in self.solid_cells]
        self.inter_flat = [self.torus_flat(c) for c in self.inter_cells]
        self.vid_order = [vid[a][self.inter_cells[a]] for a in range(d)]
        self.sid_order = [sid[a][self.solid_cells[a]] for a in range(d)]
        self.ns = ns
        annulus_cells = np.nonzero(inA)
        self.annulus_flat = self.torus_flat(annulus_cells)
        self.pid_order = pid[annulus_cells]
        self.hole_flat = self.torus_flat(np.nonzero(inT))


@lru_cache(maxsize=8)
def _annulus(config: PerforationConfig, min_annulus_cells: float) -> _Annulus:
    return _Annulus(config, min_annulus_cells)


# ----------------------------------------------------------------- restrict


@dataclass(frozen=True)
class RestrictionResult:
    """Output of :func:`restrict`.

    Attributes
    ----------
    velocity : StaggeredField
        ``R_eps(u)``; zero on every solid face.
    local_pressure : ScalarField
        Local annulus pressures ``p_{eps,k}`` (zero outside the annuli).
    local_residuals : ndarray
        Relative residual of each local solve, one per hole.
    norm_ratio : float
        ``||grad R(u)|| / (||grad u|| + ||u|| / sigma_eps)``.
    div_ratio : float
        ``||div R(u)||`` over fluid cells divided by ``||grad u||``.
    """

    velocity: StaggeredField
    local_pressure: ScalarField
    local_residuals: np.ndarray
    norm_ratio: float
    div_ratio: float


def restrict(u: StaggeredField, config: PerforationConfig, min_annulus_cells: float = 8,
             tol: float = LOCAL_TOL) -> RestrictionResult:
    """Apply the restriction operator ``R_eps`` to a torus velocity field.

    Parameters
    ----------
    u : StaggeredField
        Velocity on the torus grid of ``config``.
    config : PerforationConfig
    min_annulus_cells : float
        Floor on the radial width of the annulus ``B \\ T`` in grid cells.
    tol : float
        Largest accepted relative residual of a local solve.

    Raises
    ------
    LocalSolveFailure
        If some local solve is not finite or misses ``tol``.
    ResolutionError
        If the annulus is under-resolved or the hole leaves its ball.
    """
    comps = [np.asarray(c, dtype=float) for c in u.components]
    if comps[0].shape != (config.N,) * config.d:
        raise GridMismatchError(f"field grid {comps[0].shape} does not match N={config.N}")
    if not all(np.all(np.isfinite(c)) for c in comps):
        raise ValueError("restrict needs a finite field")
    geo = _annulus(config, float(min_annulus_cells))
    d, h = config.d, config.h
    # known values at solid faces, per hole: (ns, holes)
    us = np.zeros((geo.ns, geo.n_holes))
    for a in range(d):
        us[geo.sid_order[a], :] = comps[a].ravel()[geo.solid_flat[a]].T
    B = np.asarray(geo.Rm @ us) + np.outer(geo.spread_rows, geo.flux @ us)
    X = geo.lu.solve(B) if np.any(B) else np.zeros_like(B)
    res_abs = np.linalg.norm(geo.M @ X - B, axis=0)
    bn = np.linalg.norm(B, axis=0)
    residuals = np.where(bn > 0, res_abs / np.where(bn > 0, bn, 1.0), res_abs)
    bad = np.flatnonzero(~np.isfinite(residuals) | (residuals > tol) | ~np.all(np.isfinite(X), axis=0))
    if bad.size:
        k = int(bad[0])
        raise LocalSolveFailure(f"local restriction solve failed for hole {k} (residual {residuals[k]:.2e})", k)
    out = [c.copy() for c in comps]
    for a in range(d):
        flat = out[a].reshape(-1)
        idx = geo.inter_flat[a]
        flat[idx] = flat[idx] + X[geo.vid_order[a], :].T
        flat[geo.solid_flat[a]] = 0.0
    pk = X[geo.pid_order, :].T / h
    pl = np.zeros((config.N,) * d)
    pl.reshape(-1)[geo.annulus_flat] = pk - pk.mean(axis=1, keepdims=True)
    masks = _masks(config)
    R = StaggeredField(tuple(out), h, masks.faces)
    gu = math.sqrt(dirichlet_energy(comps, h))
    ul2 = math.sqrt(sum(np.sum(c * c) for c in comps) * h**d)
    gr = math.sqrt(dirichlet_energy(out, h))
    denom = gu + ul2 / config.sigma
    dv = np.where(masks.fluid, kernels.divergence(out, h), 0.0)
    div_ratio = float(np.sqrt(np.sum(dv**2) * h**d) / gu) if gu > 0 else float(np.sqrt(np.sum(dv**2) * h**d))
    return RestrictionResult(R, ScalarField(pl, h), residuals, gr / denom if denom > 0 else 0.0, div_ratio)


@lru_cache(maxsize=8)
def _masks(config: PerforationConfig):
    masks = build_masks(config)
    masks.fluid.setflags(write=False)
    for f in masks.faces:
        f.setflags(write=False)
    return masks


# ---------------------------------------------------------- pressure extension


def extend_pressure(p: ScalarField, config: PerforationConfig, min_annulus_cells: float = 8) -> ScalarField:
    """Continue a fluid pressure into the holes by the mean over each annulus.

    ``p`` keeps its fluid values; every cell of hole ``k`` receives the mean
    of ``p`` over the annulus ``B(eps*x_k, delta2*eps) \\ T_k``.
    """
    vals = np.asarray(p.values if hasattr(p, "values") else p, dtype=float)
    geo = _annulus(config, float(min_annulus_cells))
    out = vals.copy()
    flat = out.reshape(-1)
    means = vals.reshape(-1)[geo.annulus_flat].mean(axis=1)  # (holes,)
    flat[geo.hole_flat] = means[:, None]
    return ScalarField(out, config.h)


def smooth_test_field(config: PerforationConfig, rng: np.random.Generator, modes: int = 2) -> StaggeredField:
    """Random trigonometric polynomial with wavenumbers ``|xi| <= modes`` sampled on the faces."""
    d, N, L = config.d, config.N, config.L
    comps = []
    for a in range(d):
        shift = [0] * d
        shift[a] = 1
        x = coordinates(d, N, L, axis_shift=a)
        val = np.zeros((N,) * d)
        for _ in range(4):
            k = rng.integers(-modes, modes + 1, size=d)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.standard_normal()
            arg = sum(2 * np.pi * ki * xi / L for ki, xi in zip(k, x)) + phase
            val = val + amp * np.cos(arg)
        comps.append(np.broadcast_to(val, (N,) * d).copy())
    return StaggeredField(tuple(comps), config.h)


def duality_residual(p: ScalarField, config: PerforationConfig, tests: int = 10, seed: int = 0,
                     min_annulus_cells: float = 8, p_ext: Optional[ScalarField] = None) -> float:
    """Largest ``|<grad p~, phi> - <grad p, R(phi)>| / (||phi||_{W^{1,2}} ||p||)`` over random smooth ``phi``.

    ``p`` is the fluid pressure (zero inside the holes); ``p~`` its extension.
    """
    h, d = config.h, config.d
    pv = np.asarray(p.values, dtype=float)
    pe = (p_ext or extend_pressure(p, config, min_annulus_cells)).values
    pn = math.sqrt(np.sum(pv**2) * h**d)
    if pn == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(tests):
        phi = smooth_test_field(config, rng)
        R = restrict(phi, config, min_annulus_cells).velocity.components
        lhs = sum(np.sum(kernels.backward_diff(pe, a, h) * phi.components[a]) for a in range(d)) * h**d
        rhs = sum(np.sum(kernels.backward_diff(pv, a, h) * R[a]) for a in range(d)) * h**d
        w12 = math.sqrt(dirichlet_energy(phi.components, h) + phi.norm() ** 2)
        worst = max(worst, abs(lhs - rhs) / (w12 * pn))
    return worst


# ------------------------------------------------------------ frequency split


def cutoff(r: np.ndarray) -> np.ndarray:
    """Radial cutoff: 1 on ``[0, 1]``, 0 on ``[2, inf)``, quintic smoothstep between."""
    t = np.clip(2.0 - np.asarray(r, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class PressureSplit:
    """Low/high frequency parts of a pressure field.

    Attributes
    ----------
    p1, p2 : ScalarField
        ``chi(s D) p`` and ``p - p1``.
    cutoff_scale : float
        The scale ``s``.
    norms : dict
        ``grad_p1`` (L2 norm of the gradient of ``p1``), ``p2`` (L2 norm of
        ``p2``) and ``sobolev`` (``||grad p1||_{W^{m,2}}`` for ``m = 0..3``).
    """

    p1: ScalarField
    p2: ScalarField
    cutoff_scale: float
    norms: dict = field(default_factory=dict)


def freq_split(p: ScalarField, s: float) -> PressureSplit:
    """Split ``p`` with the Fourier multiplier ``chi(s * xi)`` (angular wavenumbers).

    Raises
    ------
    SizeError
        If the grid size is not FFT-friendly.
    ValueError
        If ``s`` is not positive.
    """
    if not (s > 0 and math.isfinite(s)):
        raise ValueError(f"cutoff scale must be positive and finite, got {s}")
    vals = np.asarray(p.values, dtype=float)
    d, N = vals.ndim, vals.shape[0]
    check_fft_size(N)
    h = p.h
    L = N * h
    ks = wavenumbers(d, N, L, True)
    k2 = sum(k * k for k in ks)
    chi = cutoff(s * np.sqrt(k2))
    ph = sfft.rfftn(vals)
    p1 = sfft.irfftn(ph * chi, vals.shape)
    p2 = vals - p1
    # Parseval weights for the half spectrum
    w = np.full(k2.shape, 2.0)
    w[..., 0] = 1.0
    if N % 2 == 0:
        w[..., -1] = 1.0
    dens = w * np.abs(ph * chi) ** 2 * (L**d / float(vals.size) ** 2)
    sob = {m: math.sqrt(float(np.sum(dens * k2 * (1.0 + k2) ** m))) for m in range(4)}
    norms = {
        "grad_p1": sob[0],
        "p2": math.sqrt(float(np.sum(p2**2)) * h**d),
        "sobolev": sob,
    }
    return PressureSplit(ScalarField(p1, h), ScalarField(p2, h), float(s), norms)


def cutoff_scale(regime, sigma: float) -> float:
    """``s = 1`` in the critical regime and ``sigma_eps`` otherwise."""
    return 1.0 if Regime(regime) is Regime.CRITICAL else float(sigma)


# ------------------------------------------------------------- bounds report


@dataclass(frozen=True)
class BoundsVerdict:
    """Outcome of :func:`pressure_bounds_report`; ``checks`` maps a name to ``(value, target, ok)``."""

    regime: Regime
    passed: bool
    checks: dict


def pressure_bounds_report(splits: Sequence[PressureSplit], sigmas: Sequence[float], regime,
                           bounded_ratio: float = 3.0, sobolev_ratio: float = 5.0,
                           slope_tol: float = 0.3) -> BoundsVerdict:
    """Check the regime-dependent pressure bounds along an eps-ladder.

    supercritical: ``||grad p1||`` bounded, ``||p2|| ~ sigma``;
    subcritical: ``||grad p1|| ~ 1/sigma``, ``||p2||`` bounded;
    critical: ``||grad p1||_{W^{m,2}}`` bounded for ``m <= 3``, ``||p2||`` bounded.
    Boundedness means ``max/min <= bounded_ratio``; an all-zero ladder passes every check.
    """
    if len(splits) < 4 or len(splits) != len(sigmas):
        raise InsufficientLadder(f"need at least 4 ladder points with matching sigmas, got {len(splits)}")
    label = Regime(regime)
    g1 = [s.norms["grad_p1"] for s in splits]
    p2 = [s.norms["p2"] for s in splits]
    sig = np.asarray(sigmas, dtype=float)
    checks = {}

    def bounded(name, vals, cap):
        r = spread(vals)
        checks[name] = (r, cap, bool(r <= cap))

    def slope(name, x, vals, target):
        if np.all(np.asarray(vals) == 0):
            checks[name] = (target, target, True)
            return
        k = loglog_slope(x, vals)
        checks[name] = (k, target, bool(abs(k - target) <= slope_tol))

    if label is Regime.SUPERCRITICAL:
        bounded("grad_p1_bounded", g1, bounded_ratio)
        slope("p2_slope_vs_sigma", sig, p2, 1.0)
    elif label is Regime.SUBCRITICAL:
        slope("grad_p1_slope_vs_inv_sigma", 1.0 / sig, g1, 1.0)
        bounded("p2_bounded", p2, bounded_ratio)
    else:
        for m in range(4):
            bounded(f"grad_p1_W{m}_bounded", [s.norms["sobolev"][m] for s in splits], sobolev_ratio)
        bounded("p2_bounded", p2, bounded_ratio)
    return BoundsVerdict(label, all(c[2] for c in checks.values()), checks)
