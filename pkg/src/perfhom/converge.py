"""Convergence studies along eps-ladders: micro solves, regime errors, reports.

A study fixes the torus side ``L`` and a hole-size schedule, then walks a
ladder of decreasing ``eps`` (``m = L/eps`` periods).  At every rung the
perforated problem is solved, compared with the macro limit of the
declared regime, and summarized in one report row:

* supercritical: ``sigma^-2 v_eps`` against Darcy (Stokes) or ``u = wbar f``
  (Poisson).  The limit is weak, so the error is taken between averages
  over the lattice cells inside ``K``; the pointwise ``L2(K)`` distance is
  recorded as well.
* critical: ``v_eps`` against Brinkman, or ``u_eps`` against
  Laplace-Brinkman, in ``L2(K)``.
* subcritical: the gradient distance to the torus Stokes/Poisson solution.

Macro tensors are recomputed per rung from a cell problem on the same
grid (``n`` and hole offset), so both sides see the same rasterized hole.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import io
from .cell import CellSolution, LatticeCorrector, solve_cell_poisson, solve_cell_stokes
from .errors import ConfigError, GridMismatchError, NonDecreasingError
from .geometry import (
    CriticalSchedule,
    HoleModel,
    Masks,
    PerforationConfig,
    PowerSchedule,
    Regime,
    build_masks,
    classify_regime,
    default_hole,
)
from .macro import (
    poisson_pointwise,
    solve_brinkman,
    solve_darcy,
    solve_laplace_brinkman,
    solve_poisson_macro,
    solve_stokes_macro,
)
from .micro import MicroSolution, solve_perforated_poisson, solve_perforated_stokes
from .numerics import ScalarField, StaggeredField, coordinates, dirichlet_energy, inner, kernels
from .pressure import PressureSplit, cutoff_scale, extend_pressure, freq_split, pressure_bounds_report
from .scaling import loglog_fit, strictly_decreasing
from .sources import bump_profile, scalar_bump, scalar_dipole, swirl, vector_bump, vector_dipole

log = logging.getLogger(__name__)

SURROGATE_NOTE = (
    "supercritical error: distance between eps-cell averages over K (weak-limit surrogate); "
    "err_strong holds the pointwise L2(K) distance"
)


# ------------------------------------------------------------------ sources


@dataclass(frozen=True)
class SourceSpec:
    """Compactly supported source centered at the origin.

    ``kind`` is ``bump``, ``dipole`` (two opposite bumps ``separation`` apart
    along axis 0, mean free) or ``swirl`` (divergence free, Stokes only).
    """

    kind: str = "bump"
    radius: float = 0.4
    separation: float = 0.0
    direction: int = 0

    def __post_init__(self):
        if self.kind not in ("bump", "dipole", "swirl", "zero"):
            raise ConfigError(f"unknown source kind {self.kind!r}")
        if not self.radius > 0:
            raise ConfigError("source radius must be positive")

    def support_radius(self) -> float:
        """Half-width of a cube centered at 0 that contains the support."""
        if self.kind == "dipole":
            return self.separation / 2 + self.radius
        return self.radius

    def build(self, problem: str, d: int, N: int, L: float):
        if problem == "poisson":
            if self.kind == "bump":
                return scalar_bump(d, N, L, self.radius)
            if self.kind == "dipole":
                return scalar_dipole(d, N, L, self.radius, self.separation)
            if self.kind == "zero":
                return ScalarField(np.zeros((N,) * d), L / N)
            raise ConfigError(f"source {self.kind!r} is not scalar")
        if self.kind == "bump":
            return vector_bump(d, N, L, self.radius, self.direction)
        if self.kind == "dipole":
            return vector_dipole(d, N, L, self.radius, self.separation, self.direction)
        if self.kind == "swirl":
            return swirl(d, N, L, self.radius)
        return StaggeredField.zeros(d, N, L / N)


# -------------------------------------------------------------------- specs


@dataclass(frozen=True)
class Rung:
    """One ladder point: lattice spacing, cells per period and hole placement.

    ``centered`` puts the hole center on a cell center (offset ``1/(2n)``)
    instead of a grid vertex.
    """

    eps: float
    n: int
    centered: bool = False


@dataclass(frozen=True)
class StudySpec:
    """Input of :func:`run_study`.

    Parameters
    ----------
    problem : {"poisson", "stokes"}
    d : int
    regime : Regime
        Declared regime; it must agree with :func:`classify_regime` on the schedule.
    schedule : callable
        ``a_eps`` as a function of ``eps``.
    rungs : sequence of Rung
        At least four, with strictly decreasing ``eps``.
    source : SourceSpec
    L : float
        Torus side; ``L/eps`` must be an even integer at every rung.
    K : float
        Comparison box ``[-K L/2, K L/2)^d`` as a fraction of the torus.
    hole : HoleModel
    min_hole_cells : float
        Resolution floor passed to the lattice and the cell problems.
    pressure : bool
        Record the frequency split of the extended pressure (Stokes).
    min_annulus_cells : float
        Annulus floor for the pressure extension.
    final_tol : float
        Largest accepted relative error at the last rung.
    out_dir : str, optional
        Where ``report.csv`` (and optional dumps) are written.
    dump : bool
        Dump micro fields per rung.
    strict : bool
        Raise :class:`NonDecreasingError` when monotonicity fails.
    """

    problem: str
    d: int
    regime: Regime
    schedule: Callable[[float], float]
    rungs: Tuple[Rung, ...]
    source: SourceSpec = field(default_factory=SourceSpec)
    L: float = 1.0
    K: float = 0.75
    hole: HoleModel = field(default_factory=default_hole)
    min_hole_cells: float = 0.0
    pressure: bool = False
    min_annulus_cells: float = 0.0
    final_tol: float = 0.2
    out_dir: Optional[str] = None
    dump: bool = False
    strict: bool = False

    def __post_init__(self):
        if self.problem not in ("poisson", "stokes"):
            raise ConfigError(f"problem must be poisson or stokes, got {self.problem!r}")
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "rungs", tuple(self.rungs))
        if len(self.rungs) < 4:
            raise ConfigError(f"a ladder needs at least 4 rungs, got {len(self.rungs)}")
        eps = [r.eps for r in self.rungs]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("rungs must have strictly decreasing eps")
        for r in self.rungs:
            m = self.L / r.eps
            if abs(m - round(m)) > 1e-9 * m or round(m) % 2:
                raise ConfigError(f"L/eps = {m} is not an even integer")
        if not (0 < self.K < 1):
            raise ConfigError("K must lie strictly inside the torus (0 < K < 1)")
        if self.source.support_radius() >= self.K * self.L / 2:
            raise ConfigError("K must contain the support of the source")
        if self.pressure and self.problem != "stokes":
            raise ConfigError("pressure splits need the Stokes problem")

    def config(self, rung: Rung) -> PerforationConfig:
        m = int(round(self.L / rung.eps))
        x0 = (1.0 / (2 * rung.n),) * self.d if rung.centered else None
        return PerforationConfig(self.d, rung.eps, self.schedule(rung.eps), self.hole, m=m, n=rung.n,
                                 x0=x0, min_hole_cells=self.min_hole_cells)


# ------------------------------------------------------------------ reports


COLUMNS = (
    "rung", "eps", "m", "n", "N", "eta", "sigma_eps", "regime", "error", "err_strong",
    "micro_L2", "micro_grad", "cell_A", "solid_cells", "iterations", "residual",
    "norm_grad_p1", "norm_p2", "sobolev_1", "sobolev_2", "sobolev_3",
)


@dataclass
class ConvergenceReport:
    """Rows (decreasing ``eps``), fitted slopes with their residuals and verdicts."""

    spec: StudySpec
    rows: List[dict]
    slopes: Dict[str, Tuple[float, float]]
    verdicts: Dict[str, bool]
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def errors(self) -> List[float]:
        return [r["error"] for r in self.rows]

    def summary(self) -> str:
        lines = [f"{self.spec.problem} {self.spec.regime.value} d={self.spec.d}: "
                 + ("PASS" if self.passed else "FAIL")]
        lines.append("  errors: " + ", ".join(f"{e:.4g}" for e in self.errors))
        for k, v in self.verdicts.items():
            lines.append(f"  {k}: {'pass' if v else 'fail'}")
        for k, (s, r) in self.slopes.items():
            lines.append(f"  slope {k}: {s:.3f} (fit residual {r:.2e})")
        return "\n".join(lines)

    def write(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "report.csv")
        comments = list(self.notes)
        comments += [f"slope {k} = {s!r} residual {r!r}" for k, (s, r) in self.slopes.items()]
        io.write_csv(path, self.rows, COLUMNS, comments)
        return path


# ----------------------------------------------------------------- helpers


def box_slices(N: int, K: float, d: int) -> tuple:
    """Index box of the cells whose centers lie in ``[-K L/2, K L/2)``."""
    lo = int(math.ceil(N * (1 - K) / 2 - 1e-9))
    return (slice(lo, N - lo),) * d


def block_means(arr: np.ndarray, n: int, m: int) -> np.ndarray:
    """Averages over the hole-centered lattice cells, shape ``(m,) * d``.

    Block ``j`` is centered at ``-L/2 + j*eps`` along every axis.
    """
    d = arr.ndim
    a = np.roll(arr, n // 2, axis=tuple(range(d)))
    return a.reshape([s for _ in range(d) for s in (m, n)]).mean(axis=tuple(range(1, 2 * d, 2)))


def _blocks_in(m: int, K: float, d: int) -> tuple:
    j = np.arange(m)
    centers = -0.5 + j / m  # in units of L
    keep = np.abs(centers) + 0.5 / m <= K / 2 + 1e-12
    idx = np.flatnonzero(keep)
    return np.ix_(*([idx] * d))


def _arrays(fld) -> list:
    if isinstance(fld, np.ndarray):
        return [fld]
    if isinstance(fld, (list, tuple)):
        return list(fld)
    return list(fld.components) if hasattr(fld, "components") else [fld.values]


def _rel(num: float, den: float) -> float:
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return math.sqrt(num / den)


def relative_box_error(a, b, K: float) -> float:
    """``||a - b||_{L2(K)} / ||b||_{L2(K)}`` for two fields on the same grid."""
    aa, bb = _arrays(a), _arrays(b)
    box = box_slices(aa[0].shape[0], K, aa[0].ndim)
    num = sum(float(np.sum((x - y)[box] ** 2)) for x, y in zip(aa, bb))
    den = sum(float(np.sum(y[box] ** 2)) for y in bb)
    return _rel(num, den)


def relative_cell_average_error(a, b, n: int, m: int, K: float) -> float:
    """Relative distance of the lattice-cell averages over the cells inside ``K``."""
    aa, bb = _arrays(a), _arrays(b)
    sel = _blocks_in(m, K, aa[0].ndim)
    num = den = 0.0
    for x, y in zip(aa, bb):
        mx, my = block_means(x, n, m)[sel], block_means(y, n, m)[sel]
        num += float(np.sum((mx - my) ** 2))
        den += float(np.sum(my**2))
    return _rel(num, den)


def relative_gradient_error(a, b, h: float) -> float:
    """``||grad(a - b)|| / ||grad b||`` on the whole torus."""
    aa, bb = _arrays(a), _arrays(b)
    return _rel(dirichlet_energy([x - y for x, y in zip(aa, bb)], h), dirichlet_energy(bb, h))


def hole_free_masks(config: PerforationConfig) -> Masks:
    shape = (config.N,) * config.d
    return Masks(np.ones(shape, dtype=bool), tuple(np.zeros(shape, dtype=bool) for _ in range(config.d)))


def solve_cell(problem: str, config: PerforationConfig, min_hole_cells: float = 0.0) -> CellSolution:
    """Cell problem matching the lattice of ``config`` (same ``n``, ``eta`` and hole offset)."""
    solver = solve_cell_stokes if problem == "stokes" else solve_cell_poisson
    return solver(config.d, config.eta, config.hole, n=config.n, center=config.cell_center_offset(),
                  min_hole_cells=min_hole_cells)


def solve_micro(problem: str, config: PerforationConfig, src, masks: Optional[Masks] = None) -> MicroSolution:
    if problem == "stokes":
        return solve_perforated_stokes(config, src, masks=masks)
    return solve_perforated_poisson(config, src, masks=masks)


def macro_reference(problem: str, regime: Regime, config: PerforationConfig, src, cell: Optional[CellSolution]):
    """Macro limit on the micro grid, with discrete (``mac``) symbols."""
    regime = Regime(regime)
    if regime is Regime.SUBCRITICAL:
        if problem == "stokes":
            return solve_stokes_macro(src, symbol="mac").velocity()
        return solve_poisson_macro(src, symbol="mac").scalar()
    if cell is None:
        raise ConfigError(f"the {regime.value} limit needs a cell solution")
    if regime is Regime.CRITICAL:
        if problem == "stokes":
            return solve_brinkman(cell.A_eta, config.sigma, src, symbol="mac").velocity()
        return solve_laplace_brinkman(cell.wbar_scalar, config.sigma, src, symbol="mac").scalar()
    if problem == "stokes":
        return solve_darcy(cell.A_eta, src, symbol="mac").velocity()
    return poisson_pointwise(cell.wbar_scalar, src).scalar()


def regime_errors(problem: str, regime: Regime, config: PerforationConfig, sol: MicroSolution, ref, K: float) -> Tuple[float, float]:
    """``(error, err_strong)`` of one rung in the regime norm."""
    regime = Regime(regime)
    fld = sol.field
    if regime is Regime.SUBCRITICAL:
        e = relative_gradient_error(fld, ref, config.h)
        return e, e
    if regime is Regime.CRITICAL:
        e = relative_box_error(fld, ref, K)
        return e, e
    scaled = [x / config.sigma**2 for x in _arrays(fld)]
    weak = relative_cell_average_error(scaled, ref, config.n, config.m, K)
    return weak, relative_box_error(scaled, ref, K)


def _all_zero(values) -> bool:
    return all(v == 0 for v in values)


# -------------------------------------------------------------------- study


def run_study(spec: StudySpec, progress: Optional[Callable[[dict], None]] = None,
              on_solution: Optional[Callable[[dict, MicroSolution], None]] = None) -> ConvergenceReport:
    """Walk the ladder of ``spec`` and compare each rung with its macro limit.

    ``progress`` receives every finished row; ``on_solution`` receives the
    row together with the micro solution, which is not kept otherwise.

    Raises
    ------
    ConfigError
        If the declared regime disagrees with the schedule.
    NonDecreasingError
        With ``spec.strict``, when the errors do not strictly decrease.
    """
    eps = [r.eps for r in spec.rungs]
    label = classify_regime(spec.d, spec.schedule, eps).label
    if label is not spec.regime:
        raise ConfigError(f"schedule is {label.value} but the study declares {spec.regime.value}")
    rows, splits = [], []
    cells: Dict[tuple, CellSolution] = {}
    for k, rung in enumerate(spec.rungs):
        cfg = spec.config(rung)
        src = spec.source.build(spec.problem, spec.d, cfg.N, cfg.L)
        cell = None
        if spec.regime is not Regime.SUBCRITICAL:
            key = (cfg.eta, cfg.n, cfg.cell_center_offset())
            if key not in cells:
                cells[key] = solve_cell(spec.problem, cfg, spec.min_hole_cells)
            cell = cells[key]
        sol = solve_micro(spec.problem, cfg, src)
        ref = macro_reference(spec.problem, spec.regime, cfg, src, cell)
        err, strong = regime_errors(spec.problem, spec.regime, cfg, sol, ref, spec.K)
        row = {
            "rung": k, "eps": cfg.eps, "m": cfg.m, "n": cfg.n, "N": cfg.N, "eta": cfg.eta,
            "sigma_eps": cfg.sigma, "regime": spec.regime.value, "error": err, "err_strong": strong,
            "micro_L2": sol.norms["L2"], "micro_grad": sol.norms["grad"],
            "cell_A": float(cell.A_eta[0, 0]) if cell is not None else None,
            "solid_cells": int(sol.masks.solid.sum()), "iterations": sol.iterations, "residual": sol.residual,
        }
        if spec.pressure:
            pt = extend_pressure(sol.p, cfg, spec.min_annulus_cells)
            sp = freq_split(pt, cutoff_scale(spec.regime, cfg.sigma))
            splits.append(sp)
            row.update({"norm_grad_p1": sp.norms["grad_p1"], "norm_p2": sp.norms["p2"],
                        **{f"sobolev_{m}": sp.norms["sobolev"][m] for m in (1, 2, 3)}})
        if spec.dump and spec.out_dir:
            _dump(spec.out_dir, k, sol)
        rows.append(row)
        log.info("rung %d eps=%g N=%d error=%.4g", k, cfg.eps, cfg.N, err)
        if progress is not None:
            progress(row)
        if on_solution is not None:
            on_solution(row, sol)

    errors = [r["error"] for r in rows]
    sig = [r["sigma_eps"] for r in rows]
    slopes = {"error_vs_eps": loglog_fit(eps, errors)}
    if spec.regime is not Regime.CRITICAL:
        slopes["micro_L2_vs_sigma"] = loglog_fit(sig, [r["micro_L2"] for r in rows])
        slopes["micro_grad_vs_sigma"] = loglog_fit(sig, [r["micro_grad"] for r in rows])
    verdicts = {
        "monotone": strictly_decreasing(errors) or _all_zero(errors),
        "final_error": errors[-1] <= spec.final_tol,
    }
    if splits:
        pv = pressure_bounds_report(splits, sig, spec.regime)
        verdicts["pressure_bounds"] = pv.passed
    notes = [f"{spec.problem} {spec.regime.value} d={spec.d} L={spec.L!r} K={spec.K!r} source={spec.source.kind}"]
    if spec.regime is Regime.SUPERCRITICAL:
        notes.append(SURROGATE_NOTE)
    report = ConvergenceReport(spec, rows, slopes, verdicts, notes)
    if spec.out_dir:
        report.write(spec.out_dir)
    if spec.strict and not verdicts["monotone"]:
        raise NonDecreasingError(
            "errors do not strictly decrease: " + ", ".join(f"eps={r['eps']:.4g}: {r['error']:.4g}" for r in rows),
            report,
        )
    return report


def _dump(out_dir: str, k: int, sol: MicroSolution) -> None:
    os.makedirs(out_dir, exist_ok=True)
    h = sol.config.h
    for a, c in enumerate(_arrays(sol.field)):
        io.dump_array(os.path.join(out_dir, f"rung{k}_{'u' if sol.problem == 'poisson' else f'v{a}'}.bin"), c, h)
    if sol.p is not None:
        io.dump_array(os.path.join(out_dir, f"rung{k}_p.bin"), sol.p.values, h)
    io.dump_array(os.path.join(out_dir, f"rung{k}_solid.bin"), sol.masks.solid, h)


# ---------------------------------------------------------- spec files

STUDY_KEYS = {
    "problem", "d", "regime", "alpha", "prefactor", "eta", "sigma_star", "L", "eps", "n", "centered",
    "source.kind", "source.radius", "source.separation", "source.direction", "K", "min_hole_cells",
    "pressure", "min_annulus_cells", "final_tol",
    "hole.shape", "hole.r", "hole.semi_axes", "hole.exponent", "hole.delta1", "hole.delta2",
}


def _list(text: str, conv) -> list:
    return [conv(t) for t in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def study_from_mapping(raw: dict, out_dir: Optional[str] = None) -> StudySpec:
    """Build a :class:`StudySpec` from raw ``key = value`` strings.

    The schedule is one of ``alpha`` (with optional ``prefactor``),
    ``eta`` (``a_eps = eta * eps``) or ``sigma_star`` (critical).  ``eps``,
    ``n`` and ``centered`` are lists; a single ``n`` or ``centered`` value
    applies to every rung.
    """
    try:
        d = int(raw["d"])
        eps = _list(raw["eps"], float)
        ns = _list(raw["n"], int)
    except KeyError as exc:
        raise ConfigError(f"missing study key {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    given = [k for k in ("alpha", "eta", "sigma_star") if k in raw]
    if len(given) != 1:
        raise ConfigError("give exactly one of alpha, eta and sigma_star")
    if given[0] == "alpha":
        schedule = PowerSchedule(float(raw["alpha"]), float(raw.get("prefactor", 1.0)))
    elif given[0] == "eta":
        schedule = PowerSchedule(1.0, float(raw["eta"]))
    else:
        schedule = CriticalSchedule(d, float(raw["sigma_star"]))
    cen = [_bool(t) for t in raw.get("centered", "0").replace(",", " ").split()]
    if len(ns) == 1:
        ns = ns * len(eps)
    if len(cen) == 1:
        cen = cen * len(eps)
    if not (len(ns) == len(cen) == len(eps)):
        raise ConfigError("eps, n and centered must have matching lengths")
    src = SourceSpec(raw.get("source.kind", "bump"), float(raw.get("source.radius", 0.4)),
                     float(raw.get("source.separation", 0.0)), int(raw.get("source.direction", 0)))
    return StudySpec(
        problem=raw.get("problem", "stokes").strip(),
        d=d,
        regime=Regime(raw.get("regime", "").strip()),
        schedule=schedule,
        rungs=tuple(Rung(e, n, c) for e, n, c in zip(eps, ns, cen)),
        source=src,
        L=float(raw.get("L", 1.0)),
        K=float(raw.get("K", 0.75)),
        hole=io.hole_from(raw, d),
        min_hole_cells=float(raw.get("min_hole_cells", 0.0)),
        pressure=_bool(raw.get("pressure", "0")),
        min_annulus_cells=float(raw.get("min_annulus_cells", 0.0)),
        final_tol=float(raw.get("final_tol", 0.2)),
        out_dir=out_dir,
    )


def read_study(path: str, out_dir: Optional[str] = None) -> StudySpec:
    with open(path, "r", encoding="utf-8") as fh:
        raw = io.parse_config_text(fh.read(), STUDY_KEYS)
    try:
        return study_from_mapping(raw, out_dir)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


# ------------------------------------------------------ energy identity


@dataclass(frozen=True)
class EnergyVerdict:
    """Gaps ``| ||grad v_eps||^2 - <g, v> |`` (relative to ``<g, v>``) and the macro identity defect."""

    gaps: Tuple[float, ...]
    macro_defects: Tuple[float, ...]
    decreasing: bool
    macro_ok: bool

    @property
    def passed(self) -> bool:
        return self.decreasing and self.macro_ok


def strong_convergence_check(solutions: Sequence[MicroSolution], macros: Optional[Sequence] = None,
                             macro_tol: float = 1e-8) -> EnergyVerdict:
    """Energy identity chain of the strong subcritical limit.

    For each rung, ``||grad v_eps||^2`` is compared with ``<g, v>`` where
    ``v`` solves the hole-free problem on the same grid (built from the
    rung's source with discrete symbols unless ``macros`` are given).  The
    macro identity ``||grad v||^2 = <g, v>`` must hold to ``macro_tol``.
    A ladder whose gaps all vanish counts as decreasing.
    """
    gaps, defects = [], []
    for k, sol in enumerate(solutions):
        src = sol.source
        if macros is not None:
            ref = macros[k]
        elif sol.problem == "stokes":
            ref = solve_stokes_macro(src, symbol="mac").velocity()
        else:
            ref = solve_poisson_macro(src, symbol="mac").scalar()
        h = sol.config.h
        work = inner(src, ref)
        e_macro = dirichlet_energy(_arrays(ref), h)
        e_micro = dirichlet_energy(_arrays(sol.field), h)
        scale = abs(work)
        defects.append(abs(e_macro - work) / scale if scale > 0 else abs(e_macro - work))
        gaps.append(abs(e_micro - work) / scale if scale > 0 else abs(e_micro - work))
    tiny = [g <= macro_tol for g in gaps]
    decreasing = strictly_decreasing(gaps) or all(tiny)
    return EnergyVerdict(tuple(gaps), tuple(defects), decreasing, all(x <= macro_tol for x in defects))


# ------------------------------------------------- corrector identity


@dataclass(frozen=True)
class Bump:
    """``phi(x) = (1 - |x|^2/R^2)^3`` on ``|x| < R`` with its exact gradient."""

    radius: float

    def value(self, coords) -> np.ndarray:
        return bump_profile(sum(c * c for c in coords), self.radius)

    def grad(self, coords, axis: int) -> np.ndarray:
        r2 = sum(c * c for c in coords)
        t = np.maximum(0.0, 1.0 - r2 / self.radius**2)
        return -6.0 * coords[axis] / self.radius**2 * t**2


@dataclass(frozen=True)
class IdentityRecord:
    """Terms of the corrector test-function identity for direction ``i``.

    ``terms`` holds the velocity terms ``grad_v_w_gradphi``,
    ``gradphi_v_grad_w`` (with its minus sign), ``div_phiv_q``,
    ``friction`` and, for Stokes, the pressure terms ``grad_p1`` and
    ``p2_gradphi`` (entering with a minus sign), plus ``source``.
    ``direct`` is the defect of the unsplit discrete weak form.
    """

    i: int
    terms: dict
    lhs: float
    rhs: float
    residual: float
    scale: float
    direct: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual


def _face_coords(d, N, L, a):
    return coordinates(d, N, L, axis_shift=a)


def _edge_coords(d, N, L, a, b):
    """Coordinates where ``D_b^-`` of a component on faces ``a`` lives."""
    c = coordinates(d, N, L, axis_shift=a)
    h = L / N
    return [x - h / 2 if k == b else x for k, x in enumerate(c)]


def corrector_test_identity(sol: MicroSolution, corrector: LatticeCorrector, phi: Bump, i: int = 0,
                            split: Optional[PressureSplit] = None, min_annulus_cells: float = 0.0) -> IdentityRecord:
    """Evaluate the split terms of the weak form tested with ``w^i phi``.

    The velocity gradient pairing is decomposed by the product rule into
    ``grad v : (w x grad phi)``, ``-(grad phi x v) : grad w`` and
    ``grad(phi v) : grad w``; the last one is rewritten with the cell
    equation as ``eps^-1 <div(phi v), q> + sigma^-2 <phi v, e^i>``.  The
    pressure pairing becomes ``-<grad p1, w phi> + <p2, grad phi . w>``.
    ``phi`` and ``grad phi`` are evaluated exactly at the stencil points,
    so the residual measures the product-rule consistency of the scheme.

    Raises
    ------
    GridMismatchError
        If the corrector was tiled for a different lattice.
    """
    cfg = sol.config
    d, N, L, h = cfg.d, cfg.N, cfg.L, cfg.h
    stokes = sol.problem == "stokes"
    wi = corrector.w[i] if stokes else corrector.w[0]
    w = _arrays(wi)
    if w[0].shape != (N,) * d or abs(corrector.eps - cfg.eps) > 1e-12 * cfg.eps:
        raise GridMismatchError("corrector does not match the micro grid")
    v = _arrays(sol.field)
    g = _arrays(sol.source)
    sigma, eps = cfg.sigma, cfg.eps
    ncomp = len(v)
    if stokes:
        phi_f = [np.broadcast_to(phi.value(_face_coords(d, N, L, a)), (N,) * d) for a in range(d)]
    else:
        phi_f = [np.broadcast_to(phi.value(coordinates(d, N, L)), (N,) * d)]

    def pos(a, b):
        return _edge_coords(d, N, L, a, b) if stokes else [x - h / 2 if k == b else x
                                                            for k, x in enumerate(coordinates(d, N, L))]

    vol = h**d
    t1 = t2 = tvw = 0.0
    for a in range(ncomp):
        for b in range(d):
            c = pos(a, b)
            dphi = phi.grad(c, b)
            dv = kernels.backward_diff(v[a], b, h)
            dw = kernels.backward_diff(w[a], b, h)
            mw = 0.5 * (w[a] + np.roll(w[a], 1, b))
            mv = 0.5 * (v[a] + np.roll(v[a], 1, b))
            t1 += float(np.sum(dv * mw * dphi))
            t2 -= float(np.sum(dphi * mv * dw))
    t1 *= vol
    t2 *= vol
    phiv = [p * x for p, x in zip(phi_f, v)]
    e_i = i if stokes else 0
    friction = float(np.sum(phiv[e_i])) * vol / sigma**2
    if stokes:
        q = corrector.q[i].values
        div_term = float(np.sum(kernels.divergence(phiv, h) * q)) * vol / eps
    else:
        div_term = 0.0
    terms = {"grad_v_w_gradphi": t1, "gradphi_v_grad_w": t2, "div_phiv_q": div_term, "friction": friction}
    psi = [p * x for p, x in zip(phi_f, w)]
    rhs = float(sum(np.sum(x * y) for x, y in zip(g, psi))) * vol
    # unsplit discrete weak form
    direct = sum(float(np.sum(kernels.backward_diff(x, b, h) * kernels.backward_diff(y, b, h)))
                 for x, y in zip(v, psi) for b in range(d)) * vol
    lhs = t1 + t2 + div_term + friction
    if stokes:
        if split is None:
            pt = extend_pressure(sol.p, cfg, min_annulus_cells)
            split = freq_split(pt, sigma)
        p1, p2 = split.p1.values, split.p2.values
        gp1 = -sum(float(np.sum(kernels.backward_diff(p1, a, h) * psi[a])) for a in range(d)) * vol
        centers = coordinates(d, N, L)
        wdphi = sum(0.5 * (w[a] + np.roll(w[a], -1, a)) * phi.grad(centers, a) for a in range(d))
        p2t = float(np.sum(p2 * wdphi)) * vol
        terms.update({"grad_p1": gp1, "p2_gradphi": p2t})
        lhs -= gp1 + p2t
        direct -= float(np.sum(sol.p.values * kernels.divergence(psi, h))) * vol
    terms["source"] = rhs
    scale = max(abs(x) for x in terms.values())
    return IdentityRecord(i, terms, lhs, rhs, abs(lhs - rhs), scale, abs(direct - rhs))
