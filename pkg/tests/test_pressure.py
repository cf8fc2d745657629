import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfhom.errors import InsufficientLadder, ResolutionError, SizeError
from perfhom.geometry import PerforationConfig, build_masks
from perfhom.numerics import ScalarField, StaggeredField
from perfhom.pressure import (
    cutoff,
    cutoff_scale,
    duality_residual,
    extend_pressure,
    freq_split,
    pressure_bounds_report,
    restrict,
    smooth_test_field,
)
from perfhom.sources import swirl


@pytest.fixture(scope="module")
def cfg2():
    return PerforationConfig(2, 0.25, 0.25 * 0.3, m=4, n=32, min_hole_cells=0)


@pytest.fixture(scope="module")
def cfg3():
    return PerforationConfig(3, 0.25, 0.25 * 0.3, m=4, n=16, min_hole_cells=0)


def test_cutoff_profile():
    r = np.linspace(0, 3, 301)
    c = cutoff(r)
    assert np.all(c[r <= 1] == 1) and np.all(c[r >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    assert cutoff(np.array([1.5]))[0] == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 2.0), st.sampled_from([(2, 16), (3, 8), (2, 12)]))
def test_freq_split_invariants(seed, s, grid):
    d, N = grid
    rng = np.random.default_rng(seed)
    p = ScalarField(rng.standard_normal((N,) * d), 1.0 / N)
    sp = freq_split(p, s)
    np.testing.assert_allclose(sp.p1.values + sp.p2.values, p.values, atol=1e-12)
    # the multiplier is a contraction and keeps the mean
    assert sp.p1.norm() <= p.norm() * (1 + 1e-12)
    assert sp.p1.values.mean() == pytest.approx(p.values.mean(), abs=1e-12)
    assert sp.norms["grad_p1"] <= sp.norms["sobolev"][1] <= sp.norms["sobolev"][3]


def test_freq_split_single_mode():
    N, L = 16, 2 * np.pi
    x = -L / 2 + (np.arange(N) + 0.5) * L / N
    p = ScalarField(np.cos(2 * x)[:, None] * np.ones((1, N)), L / N)
    low = freq_split(p, 0.4)  # s|xi| = 0.8: kept
    assert low.norms["p2"] < 1e-12
    # ||grad p1|| = |xi| ||p|| = 2 * sqrt(L^2 / 2)
    assert low.norms["grad_p1"] == pytest.approx(2 * math.sqrt(L**2 / 2))
    high = freq_split(p, 1.1)  # s|xi| = 2.2: removed
    assert high.norms["grad_p1"] < 1e-12
    with pytest.raises(ValueError):
        freq_split(p, 0.0)
    with pytest.raises(SizeError):
        freq_split(ScalarField(np.zeros((11, 11)), 0.1), 1.0)


def test_cutoff_scale():
    assert cutoff_scale("critical", 0.3) == 1.0
    assert cutoff_scale("supercritical", 0.3) == 0.3


@pytest.mark.parametrize("which", ["cfg2", "cfg3"])
def test_restriction_properties(request, which):
    cfg = request.getfixturevalue(which)
    # a discretely divergence-free field crossing many holes
    u = swirl(cfg.d, cfg.N, cfg.L, 0.45)
    res = restrict(u, cfg, min_annulus_cells=0)
    masks = build_masks(cfg)
    for c, m in zip(res.velocity.components, masks.faces):
        assert np.all(c[m] == 0)
    assert res.local_residuals.max() < 1e-10
    assert res.div_ratio < 1e-12
    assert res.norm_ratio < 10


def test_restriction_fixes_fields_vanishing_on_holes(cfg2, rng):
    # property (i): fields already zero on the holes come back unchanged
    u = smooth_test_field(cfg2, rng)
    masks = build_masks(cfg2)
    zeroed = StaggeredField(tuple(np.where(m, 0.0, c) for c, m in zip(u.components, masks.faces)), cfg2.h)
    first = restrict(zeroed, cfg2, min_annulus_cells=0).velocity
    # a second application is the identity
    again = restrict(first, cfg2, min_annulus_cells=0).velocity
    for a, b in zip(first.components, again.components):
        np.testing.assert_array_equal(a, b)


def test_restriction_is_linear(cfg2, rng):
    u = smooth_test_field(cfg2, rng)
    v = smooth_test_field(cfg2, rng)
    w = StaggeredField(tuple(2 * a - 3 * b for a, b in zip(u.components, v.components)), cfg2.h)
    Ru, Rv, Rw = (restrict(f, cfg2, min_annulus_cells=0).velocity for f in (u, v, w))
    for a, b, c in zip(Ru.components, Rv.components, Rw.components):
        np.testing.assert_allclose(c, 2 * a - 3 * b, atol=1e-11)


def test_restriction_of_zero(cfg3):
    z = StaggeredField.zeros(3, cfg3.N, cfg3.h)
    res = restrict(z, cfg3, min_annulus_cells=0)
    assert all(np.all(c == 0) for c in res.velocity.components)
    assert res.norm_ratio == 0.0


def test_annulus_floor(cfg2):
    with pytest.raises(ResolutionError):
        restrict(StaggeredField.zeros(2, cfg2.N, cfg2.h), cfg2, min_annulus_cells=100)


def test_extension_and_exact_duality(cfg2, rng):
    masks = build_masks(cfg2)
    p = ScalarField(np.where(masks.solid, 0.0, rng.standard_normal((cfg2.N,) * 2)), cfg2.h)
    pe = extend_pressure(p, cfg2, min_annulus_cells=0)
    np.testing.assert_array_equal(pe.values[masks.fluid], p.values[masks.fluid])
    # constant pressures extend to constants
    c = ScalarField(np.where(masks.solid, 0.0, 2.5), cfg2.h)
    assert np.all(extend_pressure(c, cfg2, min_annulus_cells=0).values == 2.5)
    # the annulus-mean fill is the discrete adjoint of the restriction
    assert duality_residual(p, cfg2, tests=3, min_annulus_cells=0, p_ext=pe) < 1e-12


def _fake_split(g1, p2):
    class S:
        norms = {"grad_p1": g1, "p2": p2, "sobolev": {m: g1 * (1 + m) for m in range(4)}}

    return S()


def test_bounds_report():
    sig = [0.4, 0.2, 0.1, 0.05]
    sup = [_fake_split(1.0 + 0.1 * i, 0.3 * s) for i, s in enumerate(sig)]
    assert pressure_bounds_report(sup, sig, "supercritical").passed
    sub = [_fake_split(1 / s, 1.0) for s in sig]
    assert pressure_bounds_report(sub, sig, "subcritical").passed
    assert not pressure_bounds_report(sub, sig, "supercritical").passed
    crit = [_fake_split(1.0, 1.0)] * 4
    assert pressure_bounds_report(crit, sig, "critical").passed
    zero = [_fake_split(0.0, 0.0)] * 4
    for regime in ("supercritical", "subcritical", "critical"):
        assert pressure_bounds_report(zero, sig, regime).passed
    with pytest.raises(InsufficientLadder):
        pressure_bounds_report(sup[:3], sig[:3], "supercritical")
