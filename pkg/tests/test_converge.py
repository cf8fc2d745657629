import csv
import os

import numpy as np
import pytest

from perfhom import cli, io
from perfhom.cell import rescale_corrector
from perfhom.converge import (
    COLUMNS,
    Bump,
    Rung,
    SourceSpec,
    StudySpec,
    block_means,
    box_slices,
    corrector_test_identity,
    hole_free_masks,
    read_study,
    relative_box_error,
    relative_cell_average_error,
    run_study,
    solve_cell,
    solve_micro,
    strong_convergence_check,
)
from perfhom.errors import ConfigError, NonDecreasingError
from perfhom.geometry import PerforationConfig, PowerSchedule
from perfhom.micro import solve_perforated_poisson, solve_perforated_stokes

RUNGS2 = (Rung(0.25, 16), Rung(0.125, 16), Rung(1 / 16, 16), Rung(1 / 32, 16))


def _spec(**kw):
    base = dict(problem="poisson", d=2, regime="supercritical", schedule=PowerSchedule(1.0, 0.25),
                rungs=RUNGS2, source=SourceSpec("bump", 0.3))
    base.update(kw)
    return StudySpec(**base)


@pytest.mark.parametrize("kw", [
    dict(rungs=RUNGS2[:3]),
    dict(rungs=(Rung(0.125, 16), Rung(0.25, 16)) + RUNGS2[2:]),
    dict(rungs=(Rung(0.3, 16),) + RUNGS2[1:]),
    dict(K=1.0),
    dict(source=SourceSpec("bump", 0.4)),
    dict(pressure=True),
    dict(problem="heat"),
])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        _spec(**kw)


def test_regime_mismatch_is_rejected():
    with pytest.raises(ConfigError):
        run_study(_spec(regime="critical"))


def test_box_and_blocks():
    assert box_slices(16, 0.5, 2) == (slice(4, 12),) * 2
    arr = np.zeros((8, 8))
    arr[0, 0] = 4.0  # cell adjacent to the corner hole center
    bm = block_means(arr, 4, 2)
    assert bm.shape == (2, 2) and bm[0, 0] == 0.25 and bm.sum() == 0.25
    x = np.ones((8, 8))
    assert relative_box_error(x, x, 0.5) == 0.0
    assert relative_cell_average_error(2 * x, x, 4, 2, 0.99) == pytest.approx(1.0)
    assert relative_box_error(np.zeros((8, 8)), np.zeros((8, 8)), 0.5) == 0.0


def test_zero_source_study_is_all_zero(tmp_path):
    rep = run_study(_spec(source=SourceSpec("zero", 0.3), out_dir=str(tmp_path)))
    assert rep.errors == [0.0] * 4
    assert rep.passed
    rows = io.read_csv(str(tmp_path / "report.csv"))
    assert list(rows[0]) == list(COLUMNS)


def test_study_is_deterministic(tmp_path):
    a = run_study(_spec(out_dir=str(tmp_path / "a")))
    b = run_study(_spec(out_dir=str(tmp_path / "b")))
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    assert a.errors == b.errors
    text = (tmp_path / "a" / "report.csv").read_text()
    assert text.startswith("#") and "slope error_vs_eps" in text


def test_strict_raises_on_non_monotone(monkeypatch):
    from perfhom import converge

    errs = iter([0.5, 0.3, 0.4, 0.1])
    monkeypatch.setattr(converge, "regime_errors", lambda *a: (next(errs), 0.0))
    with pytest.raises(NonDecreasingError) as info:
        run_study(_spec(strict=True))
    assert not info.value.report.verdicts["monotone"]


def test_strong_check_trivial_cases():
    cfg = PerforationConfig(2, 0.25, 0.25 * 0.3, m=4, n=16, min_hole_cells=0)
    zero = SourceSpec("zero").build("stokes", 2, cfg.N, cfg.L)
    sols = [solve_perforated_stokes(cfg, zero)] * 4
    v = strong_convergence_check(sols)
    assert v.passed and v.gaps == (0.0,) * 4
    # hole-free micro problem: the gap is only the Nyquist content the macro solver drops
    g = SourceSpec("swirl", 0.3).build("stokes", 2, cfg.N, cfg.L)
    free = solve_perforated_stokes(cfg, g, masks=hole_free_masks(cfg))
    v = strong_convergence_check([free] * 4)
    assert max(v.gaps) < 1e-8 and v.passed


@pytest.mark.parametrize("prob", ["poisson", "stokes"])
def test_corrector_identity_zero_field(prob):
    cfg = PerforationConfig(2, 0.25, 0.25 * 0.4, m=4, n=16, min_hole_cells=0)
    cor = rescale_corrector(solve_cell(prob, cfg), cfg)
    src = SourceSpec("zero").build(prob, 2, cfg.N, cfg.L)
    sol = solve_micro(prob, cfg, src)
    rec = corrector_test_identity(sol, cor, Bump(0.375))
    assert rec.residual == 0.0 and rec.direct == 0.0


@pytest.mark.parametrize("prob", ["poisson", "stokes"])
def test_corrector_identity_second_order(prob):
    rel, direct = [], []
    for n in (16, 32):
        cfg = PerforationConfig(2, 0.25, 0.25 * 0.4, m=4, n=n, min_hole_cells=0)
        cor = rescale_corrector(solve_cell(prob, cfg), cfg)
        sol = solve_micro(prob, cfg, SourceSpec("bump", 0.3).build(prob, 2, cfg.N, cfg.L))
        rec = corrector_test_identity(sol, cor, Bump(0.375))
        rel.append(rec.relative)
        direct.append(rec.direct / rec.scale)
    assert max(direct) < 1e-10
    assert np.log2(rel[0] / rel[1]) > 1.7


def test_bump_gradient():
    phi = Bump(0.5)
    x = [np.array([0.1, 0.2]), np.array([-0.15, 0.05])]
    step = 1e-6
    for a in range(2):
        xp = [c + (step if k == a else 0) for k, c in enumerate(x)]
        xm = [c - (step if k == a else 0) for k, c in enumerate(x)]
        np.testing.assert_allclose(phi.grad(x, a), (phi.value(xp) - phi.value(xm)) / (2 * step), rtol=1e-7)


def test_read_study(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("problem = poisson\nd = 2\nregime = supercritical\neta = 0.25\n"
                    "eps = 0.25 0.125 0.0625 0.03125\nn = 16\nsource.radius = 0.3\n")
    spec = read_study(str(path))
    assert spec.rungs == RUNGS2 and spec.schedule(0.5) == pytest.approx(0.125)
    path.write_text("problem = poisson\nd = 2\nregime = supercritical\neta = 0.25\nalpha = 2\n"
                    "eps = 0.25 0.125 0.0625 0.03125\nn = 16\n")
    with pytest.raises(ConfigError):
        read_study(str(path))


# ------------------------------------------------------------------- CLI


def test_cli_cell(tmp_path, capsys):
    out = str(tmp_path / "cell.csv")
    assert cli.main(["cell", "--problem", "poisson", "--d", "2", "--eta", "0.4", "--n", "32",
                     "--min-hole-cells", "0", "--out", out]) == 0
    row = io.read_csv(out)[0]
    assert float(row["discrepancy"]) < 1e-8
    assert "A =" in capsys.readouterr().out


def test_cli_micro_decompose_macro(tmp_path):
    cfgp = tmp_path / "c.cfg"
    cfgp.write_text("d = 2\neps = 0.25\na_eps = 0.075\nm = 4\nn = 16\nmin_hole_cells = 0\n")
    mdir = str(tmp_path / "micro")
    assert cli.main(["micro", "--config", str(cfgp), "--radius", "0.3", "--out", mdir]) == 0
    for f in ("v0.bin", "v0.bin.hdr", "p.bin", "solid.bin", "norms.csv"):
        assert os.path.exists(os.path.join(mdir, f))
    out = str(tmp_path / "split.csv")
    assert cli.main(["decompose", "--config", str(cfgp), "--pressure-file", os.path.join(mdir, "p.bin"),
                     "--regime", "supercritical", "--min-annulus-cells", "0", "--tests", "2", "--out", out]) == 0
    row = io.read_csv(out)[0]
    assert float(row["duality_residual"]) < 1e-12
    assert cli.main(["macro", "--system", "brinkman", "--d", "2", "--N", "16", "--A", "1", "0", "0", "2",
                     "--sigma-star", "0.5", "--out", str(tmp_path / "mac")]) == 0
    assert cli.main(["poincare", "--config", str(cfgp), "--out", str(tmp_path / "cp.csv")]) == 0


def test_cli_converge_exit_codes(tmp_path, capsys):
    spec = tmp_path / "s.cfg"
    spec.write_text("problem = poisson\nd = 2\nregime = supercritical\neta = 0.25\n"
                    "eps = 0.25 0.125 0.0625 0.03125\nn = 16\nsource.radius = 0.3\nfinal_tol = 1.0\n")
    out = str(tmp_path / "run")
    assert cli.main(["converge", "--spec", str(spec), "--out", out]) == 0
    assert open(os.path.join(out, "verdict.txt")).read().splitlines()[0].endswith("PASS")
    assert os.path.exists(os.path.join(out, "report.csv"))
    spec.write_text(spec.read_text().replace("final_tol = 1.0", "final_tol = 1e-9"))
    assert cli.main(["converge", "--spec", str(spec), "--out", out]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("d = 2\n")
    assert cli.main(["converge", "--spec", str(bad), "--out", out]) == 2
    assert "error" in capsys.readouterr().err
