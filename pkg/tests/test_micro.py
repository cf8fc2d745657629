import math

import numpy as np
import pytest

from perfhom.errors import SourceInvalid
from perfhom.geometry import PerforationConfig, classify_regime
from perfhom.micro import dual_norms, energy_report, poincare_constant, solve_perforated_poisson, solve_perforated_stokes
from perfhom.numerics import ScalarField
from perfhom.sources import scalar_bump, vector_bump


def test_poisson_capacitance_vs_cg(small2):
    f = scalar_bump(2, small2.N, small2.L, 0.35)
    a = solve_perforated_poisson(small2, f)
    b = solve_perforated_poisson(small2, f, method="cg")
    np.testing.assert_allclose(a.u.values, b.u.values, atol=1e-8 * np.abs(a.u.values).max())
    assert a.norms["L2"] > 0 and a.residual < 1e-10


def test_stokes_capacitance_vs_uzawa(small2):
    g = vector_bump(2, small2.N, small2.L, 0.35)
    a = solve_perforated_stokes(small2, g)
    b = solve_perforated_stokes(small2, g, method="uzawa")
    scale = max(np.abs(c).max() for c in a.v.components)
    for x, y in zip(a.v.components, b.v.components):
        np.testing.assert_allclose(x, y, atol=1e-7 * scale)
    assert a.div_residual < 1e-10
    with pytest.raises(ValueError):
        solve_perforated_stokes(small2, g, method="gauss")


def test_source_validation_hook():
    # 2-D subcritical needs exponentially small holes; the source must then be mean-free
    cfg = PerforationConfig(2, 0.25, 0.25 * math.exp(-64), m=4, n=16, min_hole_cells=0)
    rep = classify_regime(2, lambda e: e * math.exp(-e**-3), [0.5, 0.4, 0.3, 0.25])
    f = scalar_bump(2, cfg.N, cfg.L, 0.3)
    with pytest.raises(SourceInvalid):
        solve_perforated_poisson(cfg, f, regime=rep)


def test_poincare_grows_as_holes_shrink():
    cps = []
    for eta in (0.4, 0.2, 0.1):
        cfg = PerforationConfig(2, 0.25, 0.25 * eta, m=4, n=32, min_hole_cells=0)
        cps.append(poincare_constant(cfg).C_P)
    assert cps[0] < cps[1] < cps[2]


def test_poincare_without_holes():
    cfg = PerforationConfig(2, 0.25, 0.25 * 0.001, m=4, n=8, min_hole_cells=0)
    res = poincare_constant(cfg, allow_empty=True)
    assert math.isinf(res.C_P)


def test_dual_norms_single_mode():
    N, L = 16, 1.0
    x = -L / 2 + (np.arange(N) + 0.5) / N
    f = ScalarField(np.cos(2 * np.pi * x)[:, None] * np.ones((1, N)), L / N)
    dn = dual_norms(f, L)
    k2 = (2 * np.pi) ** 2
    assert dn["W-1,2"] == pytest.approx(math.sqrt(0.5 / (1 + k2)))
    assert dn["D-1,2"] == pytest.approx(math.sqrt(0.5 / k2))
    assert math.isinf(dual_norms(scalar_bump(2, N, L, 0.3), L)["D-1,2"])


def test_energy_report_ratios(small2):
    sol = solve_perforated_poisson(small2, scalar_bump(2, small2.N, small2.L, 0.35))
    rep = energy_report(sol, "supercritical")
    d = rep.as_dict()
    assert d["grad"] == pytest.approx(sol.norms["grad"])
    assert "ratio_L2_over_sigma2" in d and not rep.flags
