"""Acceptance studies, one test per criterion.

Every test prints a single ``criterion N: PASS|FAIL`` line with the numbers
behind the verdict, then asserts it.  The long ladders are marked ``slow``;
ladders shared by several criteria are computed once per session.
"""
import math

import numpy as np
import pytest
import scipy.fft as sfft

from perfhom import macro
from perfhom.cell import c_eta, permeability, rescale_corrector, solve_cell_stokes
from perfhom.converge import (
    Bump,
    Rung,
    SourceSpec,
    StudySpec,
    corrector_test_identity,
    run_study,
    solve_cell,
    solve_micro,
    strong_convergence_check,
)
from perfhom.geometry import Ball, CriticalSchedule, HoleModel, PerforationConfig, PowerSchedule, build_masks, sigma_eps
from perfhom.micro import poincare_constant
from perfhom.numerics import StaggeredField, kernels
from perfhom.numerics.spectral import periodic_poisson, wavenumbers
from perfhom.pressure import cutoff_scale, extend_pressure, freq_split, restrict, smooth_test_field
from perfhom.scaling import loglog_slope, spread
from perfhom.sources import scalar_dipole, vector_bump, vector_dipole

TWO_PI = 2 * math.pi


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


def _fmt(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


# ------------------------------------------------------------------ ladders

SUP_RUNGS = (Rung(1 / 4, 32), Rung(1 / 6, 20), Rung(1 / 8, 16), Rung(1 / 10, 12))
CRIT_RUNGS = (Rung(1 / 4, 32), Rung(1 / 6, 20), Rung(1 / 8, 16, True), Rung(1 / 10, 12, True))
# L = 4 admits eps up to 1, which keeps the shrinking holes resolved longer
SUB_L = 4.0
SUB_RUNGS = (Rung(1.0, 16, True), Rung(4 / 6, 16, True), Rung(0.5, 16, True), Rung(0.4, 24, True))
SUB_SOURCE = SourceSpec("dipole", 0.6, 1.0)
# eta = 1 on the first rung: a wider ball keeps an annulus around the hole for the restriction
SUB_HOLE = HoleModel(Ball(0.25), 0.2, 0.4)


def _sup_spec(problem, **kw):
    return StudySpec(problem, 3, "supercritical", PowerSchedule(1.0, 1.0), SUP_RUNGS, SourceSpec("bump", 0.4),
                     K=0.85, **kw)


def _crit_spec(problem):
    return StudySpec(problem, 3, "critical", CriticalSchedule(3, 0.25), CRIT_RUNGS, SourceSpec("bump", 0.35))


def _sub_spec(problem, **kw):
    return StudySpec(problem, 3, "subcritical", PowerSchedule(4.0), SUB_RUNGS, SUB_SOURCE, L=SUB_L, K=0.85,
                     hole=SUB_HOLE, **kw)


@pytest.fixture(scope="session")
def sup_stokes():
    return run_study(_sup_spec("stokes"))


@pytest.fixture(scope="session")
def crit_stokes():
    return run_study(_crit_spec("stokes"))


@pytest.fixture(scope="session")
def sub_stokes():
    """Subcritical Stokes ladder with pressure splits and the energy chain."""
    sols = []
    report = run_study(_sub_spec("stokes", pressure=True), on_solution=lambda row, sol: sols.append(sol))
    energy = strong_convergence_check(sols)
    del sols[:]
    return report, energy


# --------------------------------------------------------------- criterion 1


def test_criterion_01_sigma_identity(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        d = int(rng.choice([2, 3]))
        eps = float(10 ** rng.uniform(-4, 0))
        eta = float(10 ** rng.uniform(-6, -1e-3))
        a = eta * eps
        s = sigma_eps(d, eps, a)
        # independent route: eps / c_eta with the closed form of c_eta
        c = abs(math.log(eta)) ** -0.5 if d == 2 else math.sqrt(eta)
        worst = max(worst, abs(s - eps / c) / s, abs(s - eps / c_eta(d, eta)) / s)
    ok = worst <= 1e-12
    verdict(1, ok, f"max relative gap {worst:.2e} over 100 triples (tol 1e-12)")
    assert ok


# --------------------------------------------------------------- criterion 2


@pytest.mark.slow
def test_criterion_02_cell_energy_identity(verdict):
    n = 64
    rows, ok = [], True
    for d in (2, 3):
        for eta in (0.4, 0.2, 0.1, 0.05):
            # cell-centred hole so that eta = 0.05 still rasterizes at n = 64
            sol = solve_cell_stokes(d, eta, n=n, center=(1 / (2 * n),) * d, min_hole_cells=0)
            p = permeability(sol, rtol=np.inf)
            good = p.discrepancy <= 1e-6 and p.asymmetry <= 1e-8 and p.min_eigenvalue > 0
            ok &= good
            rows.append(f"d={d} eta={eta}: gap {p.discrepancy:.1e} asym {p.asymmetry:.1e} lmin {p.min_eigenvalue:.3g}")
    verdict(2, ok, "; ".join(rows))
    assert ok


# --------------------------------------------------------------- criterion 3


@pytest.mark.slow
@pytest.mark.parametrize("d, alpha, rungs", [
    (2, 1.5, [(4, 64, False), (8, 64, False), (16, 32, False), (32, 32, False)]),
    (3, 2.0, [(4, 32, False), (6, 20, True), (8, 16, True), (10, 12, True)]),
])
def test_criterion_03_poincare_scaling(verdict, d, alpha, rungs):
    ratios = []
    for m, n, centered in rungs:
        eps = 1 / m
        x0 = (1 / (2 * n),) * d if centered else None
        cfg = PerforationConfig(d, eps, eps**alpha, m=m, n=n, x0=x0, min_hole_cells=0)
        ratios.append(poincare_constant(cfg).ratio)
    ok = spread(ratios) <= 3
    verdict(3, ok, f"d={d} alpha={alpha}: C_P/sigma {_fmt(ratios)}, max/min {spread(ratios):.3f} (<= 3)")
    assert ok


# --------------------------------------------------------------- criterion 4


@pytest.mark.slow
def test_criterion_04_norm_scalings(verdict, sup_stokes, crit_stokes):
    for rep in (sup_stokes, crit_stokes):
        assert max(r["N"] for r in rep.rows) <= 128
    k_l2 = sup_stokes.slopes["micro_L2_vs_sigma"][0]
    k_gr = sup_stokes.slopes["micro_grad_vs_sigma"][0]
    w12 = [math.hypot(r["micro_L2"], r["micro_grad"]) for r in crit_stokes.rows]
    sub = run_study(StudySpec("stokes", 3, "subcritical", PowerSchedule(4.0),
                              (Rung(1 / 4, 32, True), Rung(1 / 6, 20, True), Rung(1 / 8, 16, True), Rung(1 / 10, 12, True)),
                              SourceSpec("dipole", 0.2, 0.3), K=0.85))
    grads = [r["micro_grad"] for r in sub.rows]
    checks = {
        "sup L2 slope": abs(k_l2 - 2) <= 0.3,
        "sup grad slope": abs(k_gr - 1) <= 0.3,
        "crit W12 bounded": spread(w12) <= 3,
        "sub grad bounded": spread(grads) <= 3,
    }
    ok = all(checks.values())
    verdict(4, ok, f"sup slopes L2 {k_l2:.3f} (2+-0.3), grad {k_gr:.3f} (1+-0.3); "
                   f"crit W12 max/min {spread(w12):.3f}; sub grad max/min {spread(grads):.3f}; "
                   + ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in checks.items()))
    assert ok


# --------------------------------------------------------------- criterion 5


def _band_limit_defect(split):
    """Largest spectral weight of p1 beyond |xi| = 2/s, relative to ||p||."""
    v = split.p1.values
    d, N = v.ndim, v.shape[0]
    ks = wavenumbers(d, N, N * split.p1.h, True)
    outside = np.sqrt(sum(k * k for k in ks)) * split.cutoff_scale >= 2.0
    p = split.p1.values + split.p2.values
    coef = np.abs(sfft.rfftn(v)) / v.size
    return float(coef[outside].max(initial=0.0) / max(np.sqrt(np.mean(p**2)), 1e-300))


def _split_invariants(row, sol, out):
    cfg = sol.config
    pt = extend_pressure(sol.p, cfg, 0.0)
    sp = freq_split(pt, cutoff_scale(row["regime"], cfg.sigma))
    scale = np.abs(pt.values).max()
    out.append(max(np.abs(sp.p1.values + sp.p2.values - pt.values).max() / scale, _band_limit_defect(sp)))


@pytest.mark.slow
def test_criterion_05_pressure_split(verdict, sub_stokes):
    lines, ok, invariants = [], True, []
    # supercritical: 2-D so that 2*pi*sigma/L is small along a feasible ladder
    sup = run_study(StudySpec("stokes", 2, "supercritical", PowerSchedule(1.0, 0.25),
                              tuple(Rung(1 / m, 16) for m in (8, 16, 32, 64)), SourceSpec("bump", 0.3),
                              K=0.85, pressure=True, final_tol=1.0),
                    on_solution=lambda row, sol: _split_invariants(row, sol, invariants))
    # critical: L = 2 pi puts the first nonzero frequency inside the cutoff band
    crit = run_study(StudySpec("stokes", 3, "critical", CriticalSchedule(3, 0.8),
                               tuple(Rung(TWO_PI / m, 12) for m in (8, 10, 12, 14)), SourceSpec("bump", 2.0),
                               L=TWO_PI, K=0.85, pressure=True, final_tol=1.0),
                     on_solution=lambda row, sol: _split_invariants(row, sol, invariants))
    sub, _ = sub_stokes
    for name, rep in (("sup", sup), ("crit", crit), ("sub", sub)):
        good = rep.verdicts["pressure_bounds"]
        ok &= good
        sig = [r["sigma_eps"] for r in rep.rows]
        g1 = [r["norm_grad_p1"] for r in rep.rows]
        p2 = [r["norm_p2"] for r in rep.rows]
        if name == "sup":
            lines.append(f"sup grad_p1 max/min {spread(g1):.3f} (<= 3), p2 slope vs sigma {loglog_slope(sig, p2):.3f} (1+-0.3)")
        elif name == "sub":
            lines.append(f"sub grad_p1 {_fmt(g1)} slope vs 1/sigma {loglog_slope([1 / s for s in sig], g1):.3f} "
                         f"(1+-0.3), p2 max/min {spread(p2):.3f} (<= 3)")
        else:
            sob = [max(spread([r[f"sobolev_{m}"] for r in rep.rows]) for m in (1, 2, 3)), spread(g1)]
            lines.append(f"crit W^m grad_p1 max/min {max(sob):.3f} (<= 5), p2 max/min {spread(p2):.3f} (<= 3)")
    inv = max(invariants)
    ok &= inv <= 1e-12
    verdict(5, ok, "; ".join(lines) + f"; partition/band-limit defect {inv:.1e} (<= 1e-12)")
    assert ok


# --------------------------------------------------------------- criterion 6


def _div_free(u, cfg):
    phi = periodic_poisson(-kernels.divergence(u.components, cfg.h), cfg.L)
    return StaggeredField(tuple(c - kernels.backward_diff(phi, a, cfg.h) for a, c in enumerate(u.components)), cfg.h)


@pytest.mark.slow
def test_criterion_06_restriction(verdict):
    exact, div, ratios = 0.0, 0.0, []
    for m in (4, 6, 8, 10):
        cfg = PerforationConfig(3, 1 / m, 0.5 / m, m=m, n=16, min_hole_cells=0)
        masks = build_masks(cfg)
        rng = np.random.default_rng(m)
        worst = 0.0
        for _ in range(10):
            u = _div_free(smooth_test_field(cfg, rng), cfg)
            res = restrict(u, cfg, min_annulus_cells=2)
            div = max(div, res.div_ratio)
            worst = max(worst, res.norm_ratio)
            z = StaggeredField(tuple(np.where(f, 0.0, c) for c, f in zip(u.components, masks.faces)), cfg.h)
            rz = restrict(z, cfg, min_annulus_cells=2).velocity
            exact = max(exact, max(float(np.abs(a - b).max()) for a, b in zip(rz.components, z.components)))
        ratios.append(worst)
    ok = exact == 0.0 and div <= 1e-8 and spread(ratios) <= 3
    verdict(6, ok, f"(i) max change {exact:.1e}; (ii) div ratio {div:.1e} (<= 1e-8); "
                   f"(iii) norm ratios {_fmt(ratios)}, max/min {spread(ratios):.3f} (<= 3)")
    assert ok


# --------------------------------------------------------------- criterion 7


def _study_line(name, rep):
    return (f"{name}: errors {_fmt(rep.errors)} monotone={rep.verdicts['monotone']} "
            f"final<=0.2={rep.verdicts['final_error']}")


@pytest.mark.slow
def test_criterion_07_homogenization(verdict, sup_stokes, crit_stokes, sub_stokes):
    reports = {
        "3d stokes sup": sup_stokes,
        "3d poisson sup": run_study(_sup_spec("poisson")),
        "3d stokes crit": crit_stokes,
        "3d poisson crit": run_study(_crit_spec("poisson")),
        "3d stokes sub": sub_stokes[0],
        "3d poisson sub": run_study(_sub_spec("poisson")),
        "2d poisson sup": run_study(StudySpec("poisson", 2, "supercritical", PowerSchedule(1.0, 0.25),
                                              tuple(Rung(1 / m, 32) for m in (4, 8, 16, 32)), SourceSpec("bump", 0.35))),
    }
    ok = all(r.verdicts["monotone"] and r.verdicts["final_error"] for r in reports.values())
    verdict(7, ok, "; ".join(_study_line(k, r) for k, r in reports.items()))
    assert ok


# --------------------------------------------------------------- criterion 8


@pytest.mark.slow
def test_criterion_08_energy_identity(verdict, sub_stokes):
    _, energy = sub_stokes
    ok = energy.passed
    verdict(8, ok, f"gaps {_fmt(energy.gaps)} decreasing={energy.decreasing}; "
                   f"macro defect max {max(energy.macro_defects):.1e} (<= 1e-8)")
    assert ok


# --------------------------------------------------------------- criterion 9


def test_criterion_09_macro_exactness(verdict):
    d, N = 3, 32
    A = np.array([[1.0, 0.2, 0.0], [0.2, 0.7, 0.1], [0.0, 0.1, 0.5]])
    g = vector_bump(d, N, 1.0, 0.35, direction=1)
    g0 = vector_dipole(d, N, 1.0, 0.2, 0.4)
    f = scalar_dipole(d, N, 1.0, 0.2, 0.4)
    res = []
    for sym in ("exact", "mac"):
        res += [
            macro.solve_darcy(A, g, sym).residual(),
            macro.solve_brinkman(A, 0.3, g, sym).residual(),
            macro.solve_stokes_macro(g0, sym).residual(),
            macro.solve_laplace_brinkman(0.7, 0.3, f, sym).residual(),
            macro.solve_poisson_macro(f, sym).residual(),
        ]

    def gap(a, b):
        num = sum(np.sum((x - y) ** 2) for x, y in zip(a.components, b.components))
        return math.sqrt(num / sum(np.sum(y**2) for y in b.components))

    stokes = macro.solve_stokes_macro(g0).velocity()
    to_stokes = gap(macro.solve_brinkman(A, 1e6, g0).velocity(), stokes)
    s = 1e-3
    vb = macro.solve_brinkman(A, s, g).velocity()
    scaled = StaggeredField(tuple(c / s**2 for c in vb.components), vb.h)
    to_darcy = gap(scaled, macro.solve_darcy(A, g).velocity())
    ok = max(res) <= 1e-10 and to_stokes <= 1e-4 and to_darcy <= 1e-2
    verdict(9, ok, f"max substitution residual {max(res):.1e} (<= 1e-10); Brinkman->Stokes gap {to_stokes:.1e} "
                   f"(<= 1e-4); Brinkman/sigma^2->Darcy gap {to_darcy:.1e} (<= 1e-2)")
    assert ok


# -------------------------------------------------------------- criterion 10


@pytest.mark.slow
def test_criterion_10_corrector_identity(verdict):
    lines, ok = [], True
    for d, ns in ((2, (16, 32, 64)), (3, (12, 16, 24))):
        rel = []
        for n in ns:
            cfg = PerforationConfig(d, 0.25, 0.25 * 0.4, m=4, n=n, min_hole_cells=0)
            cor = rescale_corrector(solve_cell("stokes", cfg), cfg)
            sol = solve_micro("stokes", cfg, SourceSpec("bump", 0.3).build("stokes", d, cfg.N, cfg.L))
            rel.append(corrector_test_identity(sol, cor, Bump(0.375)).relative)
        orders = [math.log(a / b) / math.log(m / k) for a, b, k, m in zip(rel, rel[1:], ns, ns[1:])]
        good = rel[0] <= 1e-2 and min(orders) >= 1
        ok &= good
        lines.append(f"d={d} n={list(ns)}: residuals {_fmt(rel)} orders {_fmt(orders)}")
    verdict(10, ok, "; ".join(lines) + " (coarsest <= 1e-2, order >= 1)")
    assert ok
