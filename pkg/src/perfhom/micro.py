"""Direct solves of the perforated Poisson and Stokes problems on the torus."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .errors import NonConvergence, SourceInvalid
from .geometry import Masks, PerforationConfig, Regime, RegimeReport, build_masks, validate_source
from .numerics import (
    MaskedPoisson,
    MaskedStokes,
    ScalarField,
    StaggeredField,
    dirichlet_energy,
    solve_saddle,
    solve_spd,
)
from .numerics.masked import check_converged
from .numerics.spectral import wavenumbers

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class MicroSolution:
    """Solution of the perforated problem on the torus.

    ``u`` is set for Poisson, ``v`` and ``p`` for Stokes.  ``norms`` holds
    ``u``/``v`` L2 and gradient norms and, for Stokes, the pressure norm on
    the central box ``[-L/4, L/4)^d``.
    """

    problem: str
    config: PerforationConfig
    source: object
    masks: Masks = field(repr=False)
    u: Optional[ScalarField] = None
    v: Optional[StaggeredField] = None
    p: Optional[ScalarField] = None
    norms: dict = field(default_factory=dict)
    residual: float = 0.0
    div_residual: float = 0.0
    iterations: int = 0

    @property
    def field(self):
        return self.u if self.problem == "poisson" else self.v


def _check_source(config, src, regime):
    if regime is None:
        return
    verdict = validate_source(src, regime, config.d)
    if not verdict:
        raise SourceInvalid(f"source rejected for the {regime.label.value} regime: {', '.join(verdict.failed)}")


def _check_grid(config, fld):
    if fld.d != config.d or fld.N != config.N or not math.isclose(fld.h, config.h, rel_tol=1e-12):
        from .errors import GridMismatchError

        raise GridMismatchError("source grid does not match the configuration grid")


def _central_box(N):
    lo, hi = N // 4, N - N // 4
    return slice(lo, hi)


def solve_perforated_poisson(
    config: PerforationConfig,
    f: ScalarField,
    regime: Optional[RegimeReport] = None,
    method: str = "capacitance",
    tol: float = DEFAULT_TOL,
    masks: Optional[Masks] = None,
) -> MicroSolution:
    """Solve ``-lap u = f`` on the fluid cells with ``u = 0`` on every hole.

    Parameters
    ----------
    config : PerforationConfig
    f : ScalarField
        Source on the torus grid.
    regime : RegimeReport, optional
        When given, ``f`` is validated against it.
    method : {"capacitance", "cg"}
        Capacitance (hole forces + FFT) or CG on the eliminated system.
    tol : float
        Required relative residual.
    masks : Masks, optional
        Precomputed masks of ``config``.
    """
    _check_grid(config, f)
    _check_source(config, f, regime)
    masks = masks or build_masks(config)
    solver = MaskedPoisson(masks.solid, config.L)
    if method == "capacitance":
        u, info = solver.solve(f.values)
        its, res = info.iterations, info.residual
    elif method == "cg":
        apply, gather, scatter = solver.operators()
        rhs = gather(np.where(masks.solid, 0.0, f.values))
        out = solve_spd(apply, rhs, tol=tol * 1e-2, projector=not masks.solid.any())
        u = scatter(out.x)
        its = out.iterations
        res = solver._residual(u, np.where(masks.solid, 0.0, f.values))
    else:
        raise ValueError(f"unknown method {method!r}")
    if res > tol:
        raise NonConvergence(f"perforated Poisson residual {res:.2e} above {tol:.1e}", its, res)
    h, d = config.h, config.d
    U = ScalarField(u, h)
    norms = {"L2": U.norm(), "grad": math.sqrt(dirichlet_energy([u], h)), "source_L2": f.norm()}
    return MicroSolution("poisson", config, f, masks, u=U, norms=norms, residual=res, iterations=its)


def solve_perforated_stokes(
    config: PerforationConfig,
    g: StaggeredField,
    regime: Optional[RegimeReport] = None,
    method: str = "capacitance",
    tol: float = DEFAULT_TOL,
    masks: Optional[Masks] = None,
) -> MicroSolution:
    """Solve the MAC Stokes system on the perforated torus.

    Parameters
    ----------
    config : PerforationConfig
    g : StaggeredField
        Momentum source on the faces.
    regime : RegimeReport, optional
        When given, ``g`` is validated against it.
    method : {"capacitance", "uzawa"}
        Capacitance (hole forces + FFT) or Uzawa CG on the eliminated system.
    tol : float
        Required relative momentum residual and divergence ratio.
    masks : Masks, optional
        Precomputed masks of ``config``.
    """
    _check_grid(config, g)
    _check_source(config, g, regime)
    masks = masks or build_masks(config)
    solver = MaskedStokes(masks.solid, config.L)
    gm = [np.where(fm, 0.0, c) for c, fm in zip(g.components, masks.faces)]
    if method == "capacitance":
        v, p, info = solver.solve(gm)
    elif method == "uzawa":
        visc_op, div_op, grad_op, gather, scatter, pgather, pscatter = solver.operators()
        out = solve_saddle(visc_op, div_op, grad_op, gather(gm), tol=tol)
        v, p = scatter(out.velocity), pscatter(out.pressure)
        info = solver._info(v, p, gm, out.iterations)
    else:
        raise ValueError(f"unknown method {method!r}")
    check_converged(info, tol, "perforated Stokes")
    if info.div_residual > tol:
        raise NonConvergence(f"divergence ratio {info.div_residual:.2e} above {tol:.1e}", info.iterations, info.div_residual)
    h, d = config.h, config.d
    V = StaggeredField(tuple(v), h, masks.faces)
    P = ScalarField(p, h)
    box = (_central_box(config.N),) * d
    norms = {
        "L2": V.norm(),
        "grad": math.sqrt(dirichlet_energy(v, h)),
        "p_local": float(np.sqrt(np.sum(p[box] ** 2) * h**d)),
        "source_L2": g.norm(),
    }
    return MicroSolution("stokes", config, g, masks, v=V, p=P, norms=norms, residual=info.residual,
                         div_residual=info.div_residual, iterations=info.iterations)


# ------------------------------------------------------------------ Poincaré


@dataclass(frozen=True)
class PoincareResult:
    C_P: float
    lambda_min: float
    iterations: int
    sigma: float

    @property
    def ratio(self) -> float:
        """``C_P / sigma_eps``."""
        return self.C_P / self.sigma


def poincare_constant(
    config: PerforationConfig,
    tol: float = 1e-8,
    maxiter: int = 500,
    masks: Optional[Masks] = None,
    allow_empty: bool = False,
) -> PoincareResult:
    """Best constant of ``||u|| <= C ||grad u||`` for grid fields vanishing on the holes.

    ``C_P = lambda_min^(-1/2)`` with ``lambda_min`` the smallest eigenvalue
    of the masked ``-lap_h``, found by inverse power iteration started from
    the fluid indicator.  Without holes the constant mode makes the
    eigenvalue vanish and ``+inf`` is returned.
    """
    sigma = config.sigma if not (config.d == 2 and config.a_eps == config.eps) else float("nan")
    if masks is None:
        try:
            masks = build_masks(config)
        except Exception:
            if not allow_empty:
                raise
            masks = None
    if masks is None or not masks.solid.any():
        return PoincareResult(math.inf, 0.0, 0, sigma)
    solver = MaskedPoisson(masks.solid, config.L)
    x = masks.fluid.astype(float)
    x /= np.linalg.norm(x)
    lam_old = None
    for it in range(1, maxiter + 1):
        y, _ = solver.solve(x)
        ynorm = np.linalg.norm(y)
        # Rayleigh quotient of the new iterate: <y, A y>/<y, y> = <y, x>/<y, y>
        lam = float(np.vdot(y, x) / ynorm**2)
        x = y / ynorm
        if lam_old is not None and abs(lam - lam_old) <= tol * lam:
            return PoincareResult(1.0 / math.sqrt(lam), lam, it, sigma)
        lam_old = lam
    raise NonConvergence("inverse power iteration did not converge", maxiter, None)


# ------------------------------------------------------------- energy report


def dual_norms(src, L: float) -> dict:
    """``W^{-1,2}`` and ``D^{-1,2}`` norms of a torus field computed spectrally."""
    arrays = src.components if hasattr(src, "components") else (src.values,)
    d, N = arrays[0].ndim, arrays[0].shape[0]
    ks = wavenumbers(d, N, L, True)
    k2 = sum(k * k for k in ks)
    w = np.full(k2.shape, 2.0)
    w[..., 0] = 1.0
    if N % 2 == 0:
        w[..., -1] = 1.0
    vol = L**d
    wm = 0.0
    dm = 0.0
    zero = total = 0.0
    for a in arrays:
        c = np.abs(sfft.rfftn(a) / a.size) ** 2 * w
        wm += float(np.sum(c / (1.0 + k2)))
        zero += float(c.flat[0])
        total += float(np.sum(c))
        k2z = k2.copy()
        k2z.flat[0] = np.inf
        dm += float(np.sum(c / k2z))
    return {
        "W-1,2": math.sqrt(wm * vol),
        "D-1,2": math.sqrt(dm * vol) if zero <= 1e-24 * total else math.inf,
        "D-1,2_mean_free_part": math.sqrt(dm * vol),
    }


@dataclass(frozen=True)
class EnergyReport:
    sigma: float
    grad: float
    L2: float
    sigma_inv_L2: float
    sigma_inv2_L2: float
    W12: float
    L_sobolev: Optional[float]
    ratios: dict
    flags: tuple

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("sigma", "grad", "L2", "sigma_inv_L2", "sigma_inv2_L2", "W12", "L_sobolev")}
        out.update({f"ratio_{k}": v for k, v in self.ratios.items()})
        return out


def energy_report(sol: MicroSolution, regime: Optional[Regime] = None, cap: float = 10.0) -> EnergyReport:
    """Quantities of the uniform velocity/solution estimates for one micro solution.

    Parameters
    ----------
    sol : MicroSolution
    regime : Regime, optional
        Selects which bounds are checked; without it no bound is flagged.
    cap : float
        Largest tolerated ratio between a norm and its regime bound.
    """
    cfg = sol.config
    sigma = cfg.sigma
    fld = sol.field
    h, d = cfg.h, cfg.d
    arrays = fld.components if hasattr(fld, "components") else (fld.values,)
    grad = math.sqrt(dirichlet_energy(arrays, h))
    l2 = fld.norm()
    lsob = None
    if d == 3:
        q = 2 * d / (d - 2)
        lsob = float(sum(np.sum(np.abs(a) ** q) for a in arrays) * h**d) ** (1 / q)
    src = sol.source
    gl2 = src.norm()
    dn = dual_norms(src, cfg.L)
    ratios = {}
    if gl2 > 0:
        ratios["grad_over_1_plus_sigma"] = grad / ((1 + sigma) * gl2)
        ratios["L2_over_sigma_1_plus_sigma"] = l2 / (sigma * (1 + sigma) * gl2)
    flags = []
    if regime is not None and gl2 > 0:
        label = Regime(regime)
        if label is Regime.SUPERCRITICAL:
            ratios["grad_over_sigma"] = grad / (sigma * gl2)
            ratios["L2_over_sigma2"] = l2 / (sigma**2 * gl2)
        elif label is Regime.CRITICAL:
            ratios["W12"] = math.sqrt(grad**2 + l2**2) / dn["W-1,2"]
        else:
            ref = dn["D-1,2"] if math.isfinite(dn["D-1,2"]) else dn["D-1,2_mean_free_part"]
            ratios["grad_plus_sigma_inv_L2"] = (grad + l2 / sigma) / ref
            if lsob is not None:
                ratios["L_sobolev"] = lsob / ref
        flags = [k for k, v in ratios.items() if v > cap]
    return EnergyReport(sigma, grad, l2, l2 / sigma, l2 / sigma**2, math.sqrt(grad**2 + l2**2), lsob, ratios, tuple(flags))
