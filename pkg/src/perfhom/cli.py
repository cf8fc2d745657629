"""Command line entry point: ``perfhom <subcommand>``.

Subcommands
-----------
cell       cell tensor ``A(eta)`` (or ``wbar``) with its consistency checks
micro      perforated Poisson/Stokes solve; dumps fields and a norms CSV
poincare   Poincaré constant of a perforated torus
decompose  pressure extension and frequency split of a dumped pressure
macro      spectral solve of one limit system
converge   eps-ladder study; writes report.csv and verdict.txt, exit 0/1
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import io
from .errors import PerfhomError
from .geometry import Ball, HoleModel, Regime


def _hole(args) -> Optional[HoleModel]:
    if args.hole_r is None:
        return None
    r = args.hole_r
    return HoleModel(Ball(r), 0.5 * r, 0.5 * (r + 0.5))


def _source(args, problem: str, d: int, N: int, L: float):
    from .converge import SourceSpec

    return SourceSpec(args.source, args.radius, args.separation, args.direction).build(problem, d, N, L)


def _add_source(p):
    p.add_argument("--source", default="bump", choices=("bump", "dipole", "swirl", "zero"))
    p.add_argument("--radius", type=float, default=0.4)
    p.add_argument("--separation", type=float, default=0.0)
    p.add_argument("--direction", type=int, default=0)


def cmd_cell(args) -> int:
    from .cell import solve_cell_poisson, solve_cell_stokes

    solver = solve_cell_stokes if args.problem == "stokes" else solve_cell_poisson
    center = tuple(args.center) if args.center else None
    sol = solver(args.d, args.eta, _hole(args), n=args.n, center=center, min_hole_cells=args.min_hole_cells)
    A = sol.A_eta
    row = {
        "d": args.d, "eta": args.eta, "n": args.n, "c_eta": sol.c_eta,
        "discrepancy": sol.discrepancy,
        "asymmetry": float(np.linalg.norm(sol.A_mean - sol.A_mean.T) / np.linalg.norm(sol.A_mean)),
        "min_eigenvalue": float(np.linalg.eigvalsh(A).min()),
        "A": " ".join(repr(float(x)) for x in A.ravel()),
    }
    cols = list(row)
    if args.out:
        io.write_csv(args.out, [row], cols)
    for k in cols:
        print(f"{k} = {row[k]}")
    return 0


def cmd_micro(args) -> int:
    from .micro import energy_report, solve_perforated_poisson, solve_perforated_stokes

    cfg = io.read_config(args.config)
    src = _source(args, args.problem, cfg.d, cfg.N, cfg.L)
    if args.problem == "stokes":
        sol = solve_perforated_stokes(cfg, src, method=args.method)
    else:
        sol = solve_perforated_poisson(cfg, src, method=args.method)
    rep = energy_report(sol)
    row = {"eps": cfg.eps, "a_eps": cfg.a_eps, "sigma_eps": cfg.sigma, "N": cfg.N,
           "iterations": sol.iterations, "residual": sol.residual, **sol.norms, **rep.as_dict()}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        h = cfg.h
        if sol.problem == "poisson":
            io.dump_array(os.path.join(args.out, "u.bin"), sol.u.values, h)
        else:
            for a, c in enumerate(sol.v.components):
                io.dump_array(os.path.join(args.out, f"v{a}.bin"), c, h)
            io.dump_array(os.path.join(args.out, "p.bin"), sol.p.values, h)
        io.dump_array(os.path.join(args.out, "solid.bin"), sol.masks.solid, h)
        io.write_csv(os.path.join(args.out, "norms.csv"), [row], list(row))
    for k, v in row.items():
        print(f"{k} = {v}")
    return 0


def cmd_poincare(args) -> int:
    from .micro import poincare_constant

    cfg = io.read_config(args.config)
    res = poincare_constant(cfg, tol=args.tol)
    row = {"eps": cfg.eps, "a_eps": cfg.a_eps, "sigma_eps": res.sigma, "C_P": res.C_P,
           "lambda_min": res.lambda_min, "ratio": res.ratio, "iterations": res.iterations}
    if args.out:
        io.write_csv(args.out, [row], list(row))
    for k, v in row.items():
        print(f"{k} = {v}")
    return 0


def cmd_decompose(args) -> int:
    from .numerics import ScalarField
    from .pressure import cutoff_scale, duality_residual, extend_pressure, freq_split

    cfg = io.read_config(args.config)
    vals, hdr = io.read_array(args.pressure_file)
    if vals.shape != (cfg.N,) * cfg.d:
        raise PerfhomError(f"pressure shape {vals.shape} does not match the configuration grid")
    p = ScalarField(vals, cfg.h)
    pt = extend_pressure(p, cfg, args.min_annulus_cells)
    sp = freq_split(pt, cutoff_scale(args.regime, cfg.sigma))
    dual = duality_residual(p, cfg, tests=args.tests, min_annulus_cells=args.min_annulus_cells, p_ext=pt) \
        if args.tests > 0 else math.nan
    row = {
        "eps": cfg.eps, "sigma_eps": cfg.sigma, "norm_grad_p1": sp.norms["grad_p1"], "norm_p2": sp.norms["p2"],
        "sobolev_norms": " ".join(repr(sp.norms["sobolev"][m]) for m in range(4)),
        "duality_residual": dual,
    }
    io.write_csv(args.out, [row], list(row))
    for k, v in row.items():
        print(f"{k} = {v}")
    return 0


def cmd_macro(args) -> int:
    from . import macro

    L = args.L
    problem = "poisson" if args.system in ("poisson", "laplace-brinkman", "pointwise") else "stokes"
    src = _source(args, problem, args.d, args.N, L)
    A = np.array(args.A, dtype=float).reshape(args.d, args.d) if args.A else np.eye(args.d)
    s = args.system
    if s == "darcy":
        sol = macro.solve_darcy(A, src, symbol=args.symbol)
    elif s == "brinkman":
        sol = macro.solve_brinkman(A, args.sigma_star, src, symbol=args.symbol)
    elif s == "stokes":
        sol = macro.solve_stokes_macro(src, symbol=args.symbol, project_mean=args.project_mean)
    elif s == "laplace-brinkman":
        sol = macro.solve_laplace_brinkman(args.wbar, args.sigma_star, src, symbol=args.symbol)
    elif s == "poisson":
        sol = macro.solve_poisson_macro(src, symbol=args.symbol, project_mean=args.project_mean)
    else:
        sol = macro.poisson_pointwise(args.wbar, src)
    row = {"system": s, "N": args.N, "L": L, "residual": sol.residual()}
    if sol.is_vector:
        row["div_norm"] = sol.div_norm()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        h = L / args.N
        if sol.is_vector:
            for a, c in enumerate(sol.velocity().components):
                io.dump_array(os.path.join(args.out, f"v{a}.bin"), c, h)
            io.dump_array(os.path.join(args.out, "p.bin"), sol.pressure().values, h)
        else:
            io.dump_array(os.path.join(args.out, "u.bin"), sol.scalar().values, h)
        io.write_csv(os.path.join(args.out, "macro.csv"), [row], list(row))
    for k, v in row.items():
        print(f"{k} = {v}")
    return 0


def cmd_converge(args) -> int:
    from .converge import read_study, run_study

    spec = read_study(args.spec, out_dir=args.out)
    if args.dump:
        from dataclasses import replace

        spec = replace(spec, dump=True)
    report = run_study(spec)
    text = report.summary()
    with open(os.path.join(args.out, "verdict.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perfhom", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cell", help="cell tensor A(eta)")
    p.add_argument("--problem", default="stokes", choices=("stokes", "poisson"))
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--center", type=float, nargs="*")
    p.add_argument("--hole-r", type=float, default=None)
    p.add_argument("--min-hole-cells", type=float, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cell)

    p = sub.add_parser("micro", help="perforated torus solve")
    p.add_argument("--config", required=True)
    p.add_argument("--problem", default="stokes", choices=("stokes", "poisson"))
    p.add_argument("--method", default="capacitance", choices=("capacitance", "cg", "uzawa"))
    _add_source(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_micro)

    p = sub.add_parser("poincare", help="Poincaré constant")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_poincare)

    p = sub.add_parser("decompose", help="pressure extension and frequency split")
    p.add_argument("--config", required=True)
    p.add_argument("--pressure-file", required=True)
    p.add_argument("--regime", required=True, choices=[r.value for r in Regime])
    p.add_argument("--min-annulus-cells", type=float, default=8)
    p.add_argument("--tests", type=int, default=10, help="random fields for the duality check (0 skips it)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("macro", help="spectral limit system")
    p.add_argument("--system", required=True,
                   choices=("darcy", "brinkman", "stokes", "laplace-brinkman", "poisson", "pointwise"))
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--A", type=float, nargs="*", help="tensor entries, row-major (identity by default)")
    p.add_argument("--wbar", type=float, default=1.0)
    p.add_argument("--sigma-star", type=float, default=1.0)
    p.add_argument("--symbol", default="exact", choices=("exact", "mac"))
    p.add_argument("--project-mean", action="store_true")
    _add_source(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_macro)

    p = sub.add_parser("converge", help="eps-ladder convergence study")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump", action="store_true")
    p.set_defaults(func=cmd_converge)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args))
    except PerfhomError as exc:
        print(f"perfhom: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
