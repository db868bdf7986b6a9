"""Command-line front end: ``heatctl <subcommand> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 when a
solver fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence

from .forward import final_norm, solve_forward
from .linalg import FactorizationError
from .oracle import build_and_solve
from .report import (
    ALIASES, DEFAULT_INFSUP_MAX_CELLS, TABLES, ConfigError, RunConfig, _fmt, _write_text, load_config, run, table, table_names,
    validate,
)
from .solvers import SolverError
from .weights import WeightError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", metavar="PATH", help="key=value configuration file")
    p.add_argument("--out", metavar="DIR", help="directory for CSV output")
    p.add_argument("--dump-matrices", action="store_true", help="write A, B, J in coordinate format")
    p.add_argument("--quad-order", type=int, metavar="Q", help="Gauss points per direction")
    p.add_argument("--dirichlet", choices=["eliminate", "keep"], help="boundary treatment of phi")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration entry (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatctl", description="Space-time mixed FEM for heat-equation controls")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve the configured problem over its mesh family")
    _common(p)
    p = sub.add_parser("infsup", help="discrete inf-sup constants for the configured meshes")
    _common(p)
    p = sub.add_parser("cg", help="conjugate gradient on the dual problem")
    _common(p)
    p = sub.add_parser("converge", help="run a mesh family and print fitted convergence rates")
    _common(p)

    p = sub.add_parser("table", help="reproduce a published table")
    p.add_argument("name", nargs="?", help="table name (see --list)")
    p.add_argument("--list", action="store_true", help="list available tables")
    p.add_argument("--meshes", metavar="NxM,...", help="restrict to a subset such as 10x5,20x10")
    p.add_argument("--workers", type=int, help="concurrent mesh solves")
    p.add_argument("--reference", metavar="PATH", help="stored eps = 0 reference (.npz)")
    p.add_argument("--reference-mesh", default="640x320", metavar="NxM", help="mesh of a computed reference")
    p.add_argument("--infsup-max-cells", type=int, default=DEFAULT_INFSUP_MAX_CELLS, metavar="N",
                   help="skip inf-sup estimates inside eps = 0 tables above N cells (default %(default)s)")
    _common(p)

    p = sub.add_parser("oracle", help="Fourier reference solution for eps > 0")
    p.add_argument("--modes", type=int, help="number of sine modes (default from config)")
    _common(p)

    p = sub.add_parser("forward", help="forward heat solve, optionally with a computed control")
    p.add_argument("--control", choices=["none", "solve"], default="none",
                   help="'solve' first computes the control on the configured mesh")
    p.add_argument("--nx", type=int, help="forward spatial cells (default 2 Nx)")
    p.add_argument("--nt", type=int, help="forward time steps (default 4 Nt)")
    p.add_argument("--samples", type=int, default=21, help="x samples per trajectory row")
    _common(p)
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value)
    if args.quad_order is not None:
        cfg.solver.quad_order = args.quad_order
    if args.dirichlet is not None:
        cfg.solver.dirichlet = args.dirichlet
    if args.out is not None:
        cfg.output.dir = args.out
    if args.dump_matrices:
        cfg.output.dump_matrices = True
    validate(cfg)
    return cfg


def _meshes(text: str):
    out = []
    for item in text.split(","):
        a, sep, b = item.strip().lower().partition("x")
        if not sep:
            raise ConfigError(f"mesh entries look like 20x10, got {item!r}")
        try:
            out.append((int(a), int(b)))
        except ValueError:
            raise ConfigError(f"mesh entries look like 20x10, got {item!r}") from None
    return out


def _print_report(rep) -> None:
    sys.stdout.write(rep.to_csv())
    if rep.slopes:
        sys.stdout.write(rep.rates_csv())


def cmd_run(args, path: str | None = None) -> int:
    cfg = _config(args)
    if path is not None:
        cfg.solver.path = path
    _print_report(run(cfg))
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _config(args)
    if len(cfg.meshes()) < 3:
        raise ConfigError("converge needs mesh.family with at least three meshes")
    rep = run(cfg)
    sys.stdout.write(rep.rates_csv())
    return EXIT_OK


def cmd_table(args) -> int:
    if args.list or not args.name:
        for n in table_names():
            print(n)
        return EXIT_OK
    if args.name not in TABLES and args.name not in ALIASES:
        raise ConfigError(f"unknown table {args.name!r}; available: {', '.join(table_names())}")
    cfg = _config(args)
    if args.workers:
        cfg.solver.workers = args.workers
    ref = None
    if args.reference:
        from .report import Reference
        ref = Reference.load(args.reference)
    rep = table(args.name, cfg, meshes=_meshes(args.meshes) if args.meshes else None,
                out_dir=cfg.output.dir or None, reference=ref,
                reference_mesh=tuple(_meshes(args.reference_mesh)[0]),
                infsup_max_cells=args.infsup_max_cells)
    _print_report(rep)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    spec = cfg.problem_spec()
    N = args.modes or cfg.oracle.N
    try:
        orc = build_and_solve(N, spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    yT = orc.y_modes(spec.T)[0]
    lines = ["# Fourier reference solution; a_p = coefficients of phi(., T), b_p of y0",
             f"# ||phi_T|| = {_fmt(orc.phi_T_norm())}, ||y(T)|| = {_fmt(float(np.sqrt(0.5 * yT @ yT)))}, "
             f"dual value = {_fmt(orc.dual_value())}",
             "p,a_p,b_p,y_p(T)"]
    lines += [f"{p},{_fmt(a)},{_fmt(b)},{_fmt(y)}" for p, a, b, y in zip(orc.modes, orc.a, orc.b0, yT)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg.output.dir:
        Path(cfg.output.dir).mkdir(parents=True, exist_ok=True)
        _write_text(Path(cfg.output.dir) / f"{cfg.output.name}_oracle.csv", text)
    return EXIT_OK


def cmd_forward(args) -> int:
    cfg = _config(args)
    spec = cfg.problem_spec()
    Nx, Nt = cfg.meshes()[-1]
    control = None
    if args.control == "solve":
        from .report import assemble
        from .solvers import cg_dual, solve_direct
        system = assemble(cfg, Nx, Nt, spec)
        control = cg_dual(system, cfg.solver.gamma, cfg.solver.maxit) if cfg.solver.path == "cg" \
            else solve_direct(system)
    nx = args.nx or cfg.forward.x_factor * Nx
    nt = args.nt or cfg.forward.t_factor * Nt
    res = solve_forward(spec, control, Nx_f=nx, Nt_f=nt, q=cfg.solver.quad_order)
    xs = np.linspace(0.0, 1.0, args.samples)
    lines = [f"# forward trajectory, {nx} cells x {nt} steps; ||y(T)|| = {_fmt(final_norm(res))}",
             "t," + ",".join(f"x={_fmt(x)}" for x in xs)]
    for k, t in enumerate(res.times):
        lines.append(_fmt(t) + "," + ",".join(_fmt(v) for v in res.sample(xs, k)))
    text = "\n".join(lines) + "\n"
    if cfg.output.dir:
        Path(cfg.output.dir).mkdir(parents=True, exist_ok=True)
        _write_text(Path(cfg.output.dir) / f"{cfg.output.name}_trajectory.csv", text)
    print(f"final_norm,{_fmt(final_norm(res))}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run, "converge": cmd_converge, "table": cmd_table, "oracle": cmd_oracle,
        "forward": cmd_forward,
        "infsup": lambda a: cmd_run(a, "infsup"), "cg": lambda a: cmd_run(a, "cg"),
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, WeightError) as exc:
        print(f"heatctl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FactorizationError, ArpackNoConvergence, MemoryError, np.linalg.LinAlgError) as exc:
        print(f"heatctl: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
