"""Command-line driver: ``dsaddle gen|solve|bench|spectrum|bounds``.

Output paths that are not given on the command line go to the directory
named by ``DSADDLE_OUT`` (or the current directory).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .bench import BenchConfig, SizeGuardError
from .krylov import tolerance_schedule
from .precond import build_approximations, parse_kind
from .problems import make_rhs, save_system
from .sparse import write_matrix_market, write_vector

ENV_OUT = "DSADDLE_OUT"


def _out_dir():
    return Path(os.environ.get(ENV_OUT, "."))


def _resolve(path, default_name):
    return _out_dir() / default_name if path is None else Path(path)


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def _add_problem(ap):
    g = ap.add_argument_group("problem")
    g.add_argument("--problem", choices=["ex1", "ex2", "file"], default="ex1",
                   help="Kronecker test problem, random dense problem, or a saved system")
    g.add_argument("--p", type=_int_list, default=(16,),
                   help="grid parameter(s) for ex1, comma separated (default 16)")
    g.add_argument("--n", type=int, default=100, help="ex2: order of A (default 100)")
    g.add_argument("--m", type=int, default=80, help="ex2: rows of B (default 80)")
    g.add_argument("--l", type=int, default=60, help="ex2: rows of C (default 60)")
    g.add_argument("--seed", type=int, default=0, help="seed for ex2 and random rhs")
    g.add_argument("--path", help="directory with A.mtx, B.mtx, C.mtx for --problem file")
    g.add_argument("--d-variant", choices=["squared", "literal"], default="squared",
                   help="reading of the D2/D3 diagonals in ex1 (default squared)")


def _add_solver(ap, multi):
    g = ap.add_argument_group("preconditioner and solver")
    g.add_argument("--precond", type=_str_list if multi else str, default=("qa",) if multi else "qa",
                   help="preconditioner name(s): pd p1 p2 p3 q1 q2 q3 qa q4 qb q5 pasb"
                        + (" (comma separated)" if multi else ""))
    g.add_argument("--mode", choices=["exact", "inexact"], default=None,
                   help="exact or approximate blocks (default: exact for ex2, inexact otherwise)")
    g.add_argument("--inner-tol", type=float, default=1e-4,
                   help="relative residual tolerance of the inner PCG (default 1e-4)")
    g.add_argument("--rhs", choices=["ones", "random"], default="ones",
                   help="exact solution of all ones or seeded uniform random")
    g.add_argument("--tol", type=float, default=None, help="outer tolerance (default 10/N^2)")
    g.add_argument("--maxit", type=int, default=None, help="outer iteration cap (default min(N, 500))")
    g.add_argument("--block11", choices=["exact", "diag"], default="exact",
                   help="solve with A exactly or with diag(A) in the leading block")
    g.add_argument("--ic-drop", choices=["relative", "absolute"], default="relative",
                   help="drop rule of the incomplete Cholesky factor")
    g.add_argument("--ic-tau", type=float, default=1e-4, help="drop tolerance (default 1e-4)")


def _config(args, precond):
    return BenchConfig(problem=args.problem, p_list=args.p, dims=(args.n, args.m, args.l),
                       path=args.path, precond=precond, mode=getattr(args, "mode", "inexact"),
                       rhs=getattr(args, "rhs", "ones"), seed=args.seed,
                       tol=getattr(args, "tol", None), inner_tol=getattr(args, "inner_tol", 1e-4),
                       maxit=getattr(args, "maxit", None),
                       block11=getattr(args, "block11", "exact"),
                       ic_tau=getattr(args, "ic_tau", 1e-4),
                       ic_drop=getattr(args, "ic_drop", "relative"), d_variant=args.d_variant)


def build_parser():
    ap = argparse.ArgumentParser(prog="dsaddle",
                                 description="Block preconditioners for double saddle-point systems.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a test system and write it as Matrix Market")
    _add_problem(g)
    g.add_argument("--rhs", choices=["ones", "random"], default="ones")
    g.add_argument("--out", help="output directory (default $DSADDLE_OUT/system)")
    g.add_argument("--dump-factors", action="store_true",
                   help="also write the factors L_S and the incomplete Cholesky factor")
    g.add_argument("--ic-drop", choices=["relative", "absolute"], default="relative")
    g.add_argument("--ic-tau", type=float, default=1e-4)

    s = sub.add_parser("solve", help="solve one system with FGMRES")
    _add_problem(s)
    _add_solver(s, multi=False)
    s.add_argument("--out", help="write the solution vector here")
    s.add_argument("--history", help="write the residual history CSV here")

    b = sub.add_parser("bench", help="sweep sizes and preconditioners, write a CSV table")
    _add_problem(b)
    _add_solver(b, multi=True)
    b.add_argument("--out", help="CSV output (default stdout)")
    b.add_argument("--history", help="directory for per-run residual histories")

    for name, helptext in (("spectrum", "eigenvalues of a preconditioned matrix"),
                           ("bounds", "gamma ranges and eigenvalue bounds with pass/fail")):
        c = sub.add_parser(name, help=helptext)
        _add_problem(c)
        c.add_argument("--precond", default="qa",
                       help="preconditioner name, or 'simplified' for the ex2 check")
        c.add_argument("--mode", choices=["exact", "inexact"], default=None,
                       help="exact or approximate blocks (default: exact for ex2, inexact otherwise)")
        c.add_argument("--block11", choices=["exact", "diag"], default="exact")
        c.add_argument("--ic-drop", choices=["relative", "absolute"], default="relative")
        c.add_argument("--ic-tau", type=float, default=1e-4)
        c.add_argument("--side", choices=["auto", "left", "right"], default="auto")
        c.add_argument("--max-order", type=int, default=bench.SPECTRUM_LIMIT,
                       help="refuse dense spectra above this order")
        if name == "spectrum":
            c.add_argument("--out", help="eigenvalue CSV (default $DSADDLE_OUT/eigs.csv)")
            c.add_argument("--report", help="report JSON (default next to the CSV)")
        else:
            c.add_argument("--out", help="report JSON (default $DSADDLE_OUT/report.json)")
            c.add_argument("--eigs", help="eigenvalue CSV from 'spectrum' to check instead of recomputing")
    return ap


def _cmd_gen(args):
    cfg = _config(args, ("qa",))
    system = bench.make_system(cfg, args.p[0])
    out = _resolve(args.out, "system")
    save_system(system, out)
    b, w = make_rhs(system, bench._rhs_spec(cfg))
    write_vector(out / "b.txt", b)
    write_vector(out / "x_true.txt", w)
    if args.dump_factors:
        ap = build_approximations(system, args.ic_tau, args.ic_drop)
        write_matrix_market(out / "L_S.mtx", ap.LS.L, symmetric=False)
        write_matrix_market(out / "L_X0.mtx", ap.M.L, symmetric=False)
    n, m, l = system.dims
    print(f"wrote {out}: n={n} m={m} l={l} N={system.size}")
    return 0


def _cmd_solve(args):
    cfg = _config(args, (args.precond,))
    p = args.p[0]
    system = bench.make_system(cfg, p)
    kind = parse_kind(args.precond, args.mode)
    b, w = make_rhs(system, bench._rhs_spec(cfg))
    data = bench._build_data(system, args.mode, cfg)
    hist = _resolve(args.history, "history.csv") if args.history else None
    out, res = bench.solve_one(system, kind, data, b, w, cfg, hist)
    tol = cfg.tol if cfg.tol is not None else tolerance_schedule(system.size)
    if args.out:
        write_vector(_resolve(args.out, "x.txt"), out.x)
    err = "" if out.rel_error is None else f" ERR={out.rel_error:.3e}"
    print(f"{kind.tag.value} {args.mode} N={system.size} ITS={out.iterations} "
          f"CPU={out.wall_time:.3f}s RES={res:.3e}{err} tol={tol:.3e} flag={out.flag}")
    return 0 if out.converged else 3


def _cmd_bench(args):
    cfg = _config(args, args.precond)
    if args.history:
        cfg.history_dir = str(_resolve(args.history, "histories"))
    rows = bench.run_bench(cfg)
    if args.out:
        path = _resolve(args.out, "bench.csv")
        path.parent.mkdir(parents=True, exist_ok=True)
        bench.write_rows(rows, path)
    else:
        bench.write_rows(rows, sys.stdout)
    return 0 if all(r.flag == "converged" for r in rows) else 3


def _cmd_spectrum(args):
    cfg = _config(args, (args.precond,))
    csv_path = _resolve(args.out, "eigs.csv")
    res = bench.run_spectrum(cfg, None, side=args.side, max_order=args.max_order)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    bench.write_eigs(csv_path, res.spectrum.values)
    rep_path = Path(args.report) if args.report else csv_path.with_name("report.json")
    rep_path.write_text(json.dumps(res.report, indent=2, default=bench._jsonable))
    rr = res.report.get("real_range")
    print(f"{len(res.spectrum.values)} eigenvalues -> {csv_path}; report -> {rep_path}; "
          f"real range {rr}")
    return 0


def _cmd_bounds(args):
    cfg = _config(args, (args.precond,))
    eigs = bench.read_eigs(args.eigs) if args.eigs else None
    res = bench.run_spectrum(cfg, None, side=args.side, max_order=args.max_order, eigs=eigs)
    path = _resolve(args.out, "report.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(res.report, indent=2, default=bench._jsonable))
    passed = res.report.get("passed")
    print(f"bounds {'PASS' if passed else 'FAIL' if passed is not None else 'n/a'}: "
          f"interval {res.report.get('real_interval')} real range {res.report.get('real_range')}"
          f" -> {path}")
    return 0 if passed in (True, None) else 4


COMMANDS = {"gen": _cmd_gen, "solve": _cmd_solve, "bench": _cmd_bench,
            "spectrum": _cmd_spectrum, "bounds": _cmd_bounds}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.problem == "file" and not args.path:
        parser.error("--problem file needs --path")
    if getattr(args, "mode", "") is None:
        args.mode = "exact" if args.problem == "ex2" else "inexact"
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"dsaddle {args.command}: error: missing file {exc}", file=sys.stderr)
        return 2
    except (ValueError, SizeGuardError, np.linalg.LinAlgError) as exc:
        print(f"dsaddle {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
