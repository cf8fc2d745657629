import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfhom.errors import GridMismatchError, NonConvergence, RangeError, SizeError, ZeroModeError
from perfhom.numerics import (
    BACKEND,
    MaskedPoisson,
    MaskedStokes,
    ScalarField,
    StaggeredField,
    check_fft_size,
    div,
    fft_forward,
    fft_inverse,
    grad,
    inner,
    kernels,
    lap,
    solve_saddle,
    solve_spd,
)
from perfhom.numerics import _pykernels
from perfhom.numerics.spectral import periodic_poisson, periodic_stokes

try:
    from perfhom.numerics import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _ball(d, N, r):
    x = np.arange(N) - (N - 1) / 2
    grids = np.meshgrid(*([x] * d), indexing="ij")
    return sum(g**2 for g in grids) <= r**2


def test_backend_reported():
    assert BACKEND in ("cython", "python")


@needs_c
@pytest.mark.parametrize("shape", [(8, 8), (6, 6, 6), (16, 16, 16)])
def test_backends_agree(rng, shape):
    u = rng.standard_normal(shape)
    h = 0.3
    np.testing.assert_allclose(kernels.laplacian(u, h, _ckernels), kernels.laplacian(u, h, _pykernels), rtol=1e-13, atol=1e-12)
    for a in range(len(shape)):
        for fn in (kernels.backward_diff, kernels.forward_diff):
            np.testing.assert_allclose(fn(u, a, h, _ckernels), fn(u, a, h, _pykernels), rtol=1e-14, atol=1e-13)
    v = [rng.standard_normal(shape) for _ in shape]
    np.testing.assert_allclose(kernels.divergence(v, h, _ckernels), kernels.divergence(v, h, _pykernels), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 3]), st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_div_is_minus_grad_adjoint(d, N, seed):
    rng = np.random.default_rng(seed)
    h = 1.0 / N
    p = ScalarField(rng.standard_normal((N,) * d), h)
    v = StaggeredField(tuple(rng.standard_normal((N,) * d) for _ in range(d)), h)
    assert inner(grad(p), v) == pytest.approx(-inner(p, div(v)), abs=1e-10 * (1 + abs(inner(grad(p), v))))
    # lap = div grad
    np.testing.assert_allclose(lap(p).values, div(grad(p)).values, atol=1e-9 * N**2)


def test_fields_validate():
    with pytest.raises(GridMismatchError):
        ScalarField(np.zeros((4, 5)), 0.1)
    with pytest.raises(ValueError):
        ScalarField(np.full((4, 4), np.nan), 0.1)
    with pytest.raises(ValueError):
        StaggeredField((np.ones((4, 4)), np.zeros((4, 4))), 0.1, face_masks=(np.ones((4, 4), bool), np.zeros((4, 4), bool)))
    with pytest.raises(GridMismatchError):
        inner(ScalarField(np.zeros((4, 4)), 0.1), ScalarField(np.zeros((4, 4)), 0.2))


def test_fft_sizes():
    for N in (8, 12, 30, 49, 2 * 3 * 5 * 7):
        check_fft_size(N)
    for N in (11, 26, 0):
        with pytest.raises(SizeError):
            check_fft_size(N)


def test_fft_roundtrip_and_parseval(rng):
    f = ScalarField(rng.standard_normal((12, 12, 12)), 0.1)
    s = fft_forward(f)
    assert s.energy() == pytest.approx(np.mean(f.values**2))
    np.testing.assert_allclose(fft_inverse(s).values, f.values, atol=1e-13)
    xi = s.frequencies()
    assert xi[0].min() == -6 and xi[0].max() == 5


def test_periodic_poisson_single_mode():
    # -lap_h of cos(2 pi k x / L) = (4/h^2) sin^2(pi k h / L) cos(...)
    N, L, k = 16, 2.0, 3
    h = L / N
    x = (np.arange(N) + 0.5) * h
    u = np.cos(2 * np.pi * k * x / L)[:, None] * np.ones((1, N))
    lam = 4 / h**2 * np.sin(np.pi * k * h / L) ** 2
    np.testing.assert_allclose(periodic_poisson(lam * u + 5.0, L), u, atol=1e-12)


def test_periodic_stokes_solves_mac_system(rng):
    N, L = 12, 1.0
    h = L / N
    g = [rng.standard_normal((N,) * 3) for _ in range(3)]
    v, p = periodic_stokes(g, L)
    np.testing.assert_allclose(kernels.divergence(v, h), 0.0, atol=1e-10)
    for a in range(3):
        r = -kernels.laplacian(v[a], h) + kernels.backward_diff(p, a, h) - (g[a] - g[a].mean())
        assert np.abs(r).max() < 1e-10


def test_spd_solver_and_projector(rng):
    N = 16
    h = 1.0 / N
    b = rng.standard_normal((N, N))
    b -= b.mean()
    out = solve_spd(lambda u: -kernels.laplacian(u, h), b, tol=1e-12, projector=True)
    np.testing.assert_allclose(out.x, periodic_poisson(b, 1.0), atol=1e-9)
    with pytest.raises(RangeError):
        solve_spd(lambda u: -kernels.laplacian(u, h), b + 1.0, projector=True)
    with pytest.raises(NonConvergence):
        solve_spd(lambda u: -kernels.laplacian(u, h), b, tol=1e-14, maxiter=2, projector=True)
    assert solve_spd(lambda u: u, np.zeros(5)).iterations == 0


def test_saddle_dense_oracle(rng):
    # small dense saddle system checked against a direct solve
    n, m = 12, 5
    M = rng.standard_normal((n, n))
    A = M @ M.T + n * np.eye(n)
    G = rng.standard_normal((n, m))
    G -= G.mean(axis=1, keepdims=True)  # constants in the kernel of G
    f = rng.standard_normal(n)
    out = solve_saddle(lambda x: A @ x, lambda x: -G.T @ x, lambda q: G @ q, f, tol=1e-12,
                       visc_solve=lambda b: np.linalg.solve(A, b))
    K = np.block([[A, G], [-G.T, np.zeros((m, m))]])
    K = np.vstack([K, np.r_[np.zeros(n), np.ones(m)]])
    ref = np.linalg.lstsq(K, np.r_[f, np.zeros(m), 0.0], rcond=None)[0]
    np.testing.assert_allclose(out.velocity, ref[:n], atol=1e-9)
    np.testing.assert_allclose(out.pressure, ref[n:], atol=1e-9)


def test_masked_poisson_capacitance_matches_eliminated_cg(rng):
    N, L = 16, 1.0
    solid = _ball(2, N, 3.2)
    f = rng.standard_normal((N, N))
    op = MaskedPoisson(solid, L)
    u, info = op.solve(f)
    assert info.residual < 1e-11
    assert np.all(u[solid] == 0)
    apply, gather, scatter = op.operators()
    ref = scatter(solve_spd(apply, gather(np.where(solid, 0, f)), tol=1e-13).x)
    np.testing.assert_allclose(u, ref, atol=1e-9 * np.abs(ref).max())


def test_masked_stokes_capacitance_matches_uzawa(rng):
    N, L = 12, 1.0
    solid = _ball(3, N, 2.6)
    g = [rng.standard_normal((N,) * 3) for _ in range(3)]
    op = MaskedStokes(solid, L)
    v, p, info = op.solve(g)
    assert info.residual < 1e-11 and info.div_residual < 1e-10
    for c, m in zip(v, op.face_masks):
        assert np.all(c[m] == 0)
    visc, dv, gr, gather, scatter, pgather, pscatter = op.operators()
    gm = [np.where(m, 0, c) for c, m in zip(g, op.face_masks)]
    out = solve_saddle(visc, dv, gr, gather(gm), tol=1e-11)
    vref = scatter(out.velocity)
    scale = max(np.abs(c).max() for c in vref)
    for a in range(3):
        np.testing.assert_allclose(v[a], vref[a], atol=1e-7 * scale)
    pref = pscatter(out.pressure - out.pressure.mean())
    np.testing.assert_allclose(p, pref, atol=1e-6 * np.abs(pref).max())


def test_masked_hole_free_zero_mode():
    N = 8
    solid = np.zeros((N, N), bool)
    with pytest.raises(ZeroModeError):
        MaskedStokes(solid, 1.0).solve([np.ones((N, N)), np.zeros((N, N))])
    with pytest.raises(RangeError):
        MaskedPoisson(solid, 1.0).solve(np.ones((N, N)))
    u, info = MaskedPoisson(solid, 1.0).solve(np.zeros((N, N)))
    assert np.all(u == 0)
