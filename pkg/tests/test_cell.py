import math

import numpy as np
import pytest

from perfhom.cell import (
    aitken,
    c_eta,
    limit_tensor,
    permeability,
    rescale_corrector,
    solve_cell_poisson,
    solve_cell_stokes,
    tile_cell_array,
)
from perfhom.errors import DiscrepancyError, DomainError, GridMismatchError, ResolutionError
from perfhom.geometry import PerforationConfig, build_masks


def test_c_eta():
    assert c_eta(3, 0.25) == pytest.approx(0.5)
    assert c_eta(2, math.exp(-4)) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        c_eta(2, 1.0)
    with pytest.raises(DomainError):
        c_eta(3, 0.0)


@pytest.mark.parametrize("d, n", [(2, 32), (3, 16)])
def test_poisson_cell_expressions_agree(d, n):
    sol = solve_cell_poisson(d, 0.5, n=n, min_hole_cells=0)
    # summation by parts makes the two expressions equal up to the solver tolerance
    assert sol.discrepancy < 1e-9
    assert sol.wbar_scalar > 0
    assert np.all(sol.w[0].values[sol.solid] == 0)


def test_stokes_cell_isotropic_spd():
    sol = solve_cell_stokes(3, 0.5, n=16, min_hole_cells=0)
    p = permeability(sol, rtol=1e-6)
    A = p.A
    assert p.min_eigenvalue > 0
    assert p.asymmetry < 1e-9
    # cubic symmetry of a centered ball: A is a multiple of the identity
    np.testing.assert_allclose(A, A[0, 0] * np.eye(3), atol=1e-9 * A[0, 0])
    with pytest.raises(DiscrepancyError):
        permeability(sol, rtol=-1.0)
    with pytest.raises(AttributeError):
        sol.wbar_scalar


def test_stokes_cell_2d_decreases_with_hole():
    small = solve_cell_stokes(2, 0.2, n=32, min_hole_cells=0).A_eta[0, 0]
    big = solve_cell_stokes(2, 0.4, n=32, min_hole_cells=0).A_eta[0, 0]
    # without the c_eta^2 factor the bigger hole is less permeable
    assert big / c_eta(2, 0.4) ** 2 < small / c_eta(2, 0.2) ** 2


def test_cell_resolution_and_domain():
    with pytest.raises(ResolutionError):
        solve_cell_poisson(3, 0.1, n=16)
    with pytest.raises(DomainError):
        solve_cell_poisson(3, 1.5, n=16)


def test_aitken_geometric():
    x = [1 + 0.5**k for k in range(3)]
    assert aitken(*x) == pytest.approx(1.0)
    assert aitken(2.0, 2.0, 2.0) == 2.0


def test_limit_tensor_needs_three():
    sols = [solve_cell_poisson(2, e, n=32, min_hole_cells=0) for e in (0.4, 0.2)]
    with pytest.raises(ValueError):
        limit_tensor(sols)


def test_tile_cell_array_period():
    arr = np.arange(16.0).reshape(4, 4)
    t = tile_cell_array(arr, 4, 3)
    assert t.shape == (12, 12)
    np.testing.assert_array_equal(t[:4, :4], np.roll(arr, (-2, -2), axis=(0, 1)))
    np.testing.assert_array_equal(t, np.roll(t, 4, axis=1))


@pytest.mark.parametrize("n, x0", [(16, (0.0, 0.0)), (12, (1 / 24, 1 / 24)), (9, (0.0, 0.0))])
def test_rescaled_corrector_matches_lattice(n, x0):
    cfg = PerforationConfig(2, 0.25, 0.25 * 0.4, m=4, n=n, x0=x0, min_hole_cells=0)
    sol = solve_cell_stokes(2, cfg.eta, n=n, center=cfg.cell_center_offset(), min_hole_cells=0)
    corr = rescale_corrector(sol, cfg)
    masks = build_masks(cfg)
    for w in corr.w:
        for c, m in zip(w.components, masks.faces):
            assert np.all(c[m] == 0)
    solid = tile_cell_array(sol.solid, n, cfg.m)
    np.testing.assert_array_equal(solid, masks.solid)
    assert corr.sigma == pytest.approx(cfg.sigma)


def test_rescale_mismatch():
    cfg = PerforationConfig(2, 0.25, 0.1, m=4, n=16, min_hole_cells=0)
    with pytest.raises(GridMismatchError):
        rescale_corrector(solve_cell_poisson(2, cfg.eta, n=32, min_hole_cells=0), cfg)
    with pytest.raises(GridMismatchError):
        rescale_corrector(solve_cell_poisson(2, 0.3, n=16, min_hole_cells=0), cfg)
    with pytest.raises(GridMismatchError):
        rescale_corrector(solve_cell_poisson(2, cfg.eta, n=16, center=(0.1, 0.0), min_hole_cells=0), cfg)
