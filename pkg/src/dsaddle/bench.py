"""Benchmark sweeps and spectral reports."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .krylov import fgmres, tolerance_schedule, write_history
from .precond import (BlockPreconditioner, build_approximations, build_exact, parse_kind)
from .problems import RhsSpec, gen_example1, gen_example2, load_system, make_rhs
from .spectral import (Spectrum, gamma_ranges, preconditioned_spectrum, real_interval_general,
                       simplified_spectrum, verify_bounds)

__all__ = [
    "BENCH_FIELDS",
    "BenchConfig",
    "BenchRow",
    "SizeGuardError",
    "make_system",
    "solve_one",
    "run_bench",
    "write_rows",
    "SpectrumResult",
    "run_spectrum",
    "write_eigs",
    "read_eigs",
]

log = logging.getLogger(__name__)

BENCH_FIELDS = ["problem", "p", "N", "precond", "mode", "rhs", "tol", "its",
                "cpu", "setup", "res", "err", "flag"]

EXACT_LIMIT = 6000      # largest second block order for which dense Schur complements are built
SPECTRUM_LIMIT = 2500   # largest system order for a dense spectrum


class SizeGuardError(ValueError):
    """The requested computation exceeds a desk-scale size guard."""


@dataclass
class BenchConfig:
    problem: str = "ex1"                 # "ex1" | "ex2" | "file"
    p_list: tuple = (16,)
    dims: tuple = (100, 80, 60)
    path: str | None = None
    precond: tuple = ("qa",)
    mode: str = "inexact"
    rhs: str = "ones"
    seed: int = 0
    tol: float | None = None             # None: 10 / N^2
    inner_tol: float = 1e-4
    maxit: int | None = None
    block11: str = "exact"
    ic_tau: float = 1e-4
    ic_drop: str = "relative"
    d_variant: str = "squared"
    history_dir: str | None = None

    def __post_init__(self):
        if not self.precond:
            raise ValueError("at least one preconditioner is required")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.problem not in ("ex1", "ex2", "file"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.problem == "file" and not self.path:
            raise ValueError("problem 'file' needs a path")


@dataclass
class BenchRow:
    problem: str
    p: int | None
    N: int
    precond: str
    mode: str
    rhs: str
    tol: float
    its: int
    cpu: float
    setup: float
    res: float
    err: float | None
    flag: str


def make_system(cfg, p=None):
    if cfg.problem == "ex1":
        return gen_example1(p, cfg.d_variant)
    if cfg.problem == "ex2":
        n, m, l = cfg.dims
        return gen_example2(n, m, l, cfg.seed)
    return load_system(cfg.path)


def _rhs_spec(cfg):
    return RhsSpec("unit" if cfg.rhs in ("ones", "unit") else cfg.rhs, cfg.seed)


def _build_data(system, mode, cfg):
    if mode == "exact":
        if system.dims[1] > EXACT_LIMIT:
            raise SizeGuardError(f"exact mode needs dense Schur complements of order "
                                 f"{system.dims[1]} > {EXACT_LIMIT}")
        return build_exact(system)
    return build_approximations(system, cfg.ic_tau, cfg.ic_drop)


def solve_one(system, kind, data, b, w_true, cfg, history=None):
    """One FGMRES solve; returns ``(KrylovResult, res)`` with ``res`` recomputed from ``K``."""
    N = system.size
    tol = cfg.tol if cfg.tol is not None else tolerance_schedule(N)
    P = BlockPreconditioner(system, kind, data, inner_tol=cfg.inner_tol, block11=cfg.block11)
    out = fgmres(system.matrix, b, P, tol=tol, maxit=cfg.maxit, x_true=w_true)
    res = float(np.linalg.norm(b - system.matrix @ out.x) / np.linalg.norm(b))
    if history is not None:
        write_history(history, out)
    return out, res


def run_bench(cfg):
    """Run every (size, preconditioner) pair of ``cfg``; failures become flagged rows."""
    rows = []
    sizes = cfg.p_list if cfg.problem == "ex1" else (None,)
    for p in sizes:
        try:
            system = make_system(cfg, p)
        except Exception as exc:  # recorded, the sweep goes on
            log.error("building the system failed: %s", exc)
            for name in cfg.precond:
                rows.append(BenchRow(cfg.problem, p, 0, name, cfg.mode, cfg.rhs, float("nan"),
                                     0, 0.0, 0.0, float("nan"), None, f"error: {exc}"))
            continue
        N = system.size
        tol = cfg.tol if cfg.tol is not None else tolerance_schedule(N)
        b, w = make_rhs(system, _rhs_spec(cfg))
        data, setup, data_err = None, 0.0, None
        for name in cfg.precond:
            try:
                kind = parse_kind(name, cfg.mode)
                if data is None and data_err is None:
                    t0 = time.perf_counter()
                    try:
                        data = _build_data(system, cfg.mode, cfg)
                    except Exception as exc:
                        data_err = exc
                    setup = time.perf_counter() - t0
                if data_err is not None:
                    raise data_err
                hist = None
                if cfg.history_dir:
                    Path(cfg.history_dir).mkdir(parents=True, exist_ok=True)
                    hist = Path(cfg.history_dir) / f"history_{cfg.problem}_{p}_{name}.csv"
                out, res = solve_one(system, kind, data, b, w, cfg, hist)
                flag = out.flag
                if flag == "converged" and not res < tol:
                    flag = "unverified"
                rows.append(BenchRow(cfg.problem, p, N, name, cfg.mode, cfg.rhs, tol,
                                     out.iterations, out.wall_time + setup, setup, res,
                                     out.rel_error, flag))
            except Exception as exc:
                log.error("%s failed on N=%d: %s", name, N, exc)
                rows.append(BenchRow(cfg.problem, p, N, name, cfg.mode, cfg.rhs, tol, 0, 0.0,
                                     setup, float("nan"), None, f"error: {exc}"))
    return rows


def write_rows(rows, path_or_file):
    """Write bench rows as CSV with the columns of :data:`BENCH_FIELDS`."""
    def emit(fh):
        w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            d = asdict(r)
            d["p"] = "" if d["p"] is None else d["p"]
            d["err"] = "" if d["err"] is None else f"{d['err']:.6e}"
            d["res"] = f"{d['res']:.6e}"
            d["tol"] = f"{d['tol']:.6e}"
            d["cpu"] = f"{d['cpu']:.4f}"
            d["setup"] = f"{d['setup']:.4f}"
            w.writerow(d)
    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


# --------------------------------------------------------------------------
# spectra

def write_eigs(path, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im"])
        for z in np.asarray(values):
            w.writerow([repr(float(z.real)), repr(float(z.imag))])


def read_eigs(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)][1:]
    return np.array([float(a) + 1j * float(b) for a, b in rows])


@dataclass
class SpectrumResult:
    spectrum: Spectrum
    report: dict
    files: list = field(default_factory=list)


def run_spectrum(cfg, out_dir=None, side="auto", max_order=SPECTRUM_LIMIT, eigs=None):
    """Spectrum of one preconditioned system plus its bound report.

    ``cfg.precond[0]`` names the preconditioner; ``"simplified"`` selects the
    dense preconditioner with identity leading block and exact Schur
    complements of ``B B^T``.  Writes ``eigs.csv`` and ``report.json`` to
    ``out_dir`` when given.  ``eigs`` supplies precomputed eigenvalues.
    """
    p = cfg.p_list[0] if cfg.problem == "ex1" else None
    system = make_system(cfg, p)
    N = system.size
    if N > max_order:
        raise SizeGuardError(f"dense spectrum of order {N} exceeds the guard {max_order}")
    name = cfg.precond[0]
    report = {"problem": cfg.problem, "p": p, "N": N, "precond": name, "mode": cfg.mode,
              "meta": system.meta}
    if name == "simplified":
        spec, g = simplified_spectrum(system)
        if eigs is not None:
            spec = Spectrum(np.asarray(eigs), "supplied")
        rep = verify_bounds(spec, g, "simplified")
        report.update(rep.to_dict())
    else:
        kind = parse_kind(name, cfg.mode)
        data = _build_data(system, cfg.mode, cfg)
        if eigs is not None:
            spec = Spectrum(np.asarray(eigs), "supplied")
        else:
            spec = preconditioned_spectrum(system, kind, data, side=side,
                                           inner_tol=1e-12, block11=cfg.block11)
        report.update({"source": spec.source, "inner_tol": 1e-12, "block11": cfg.block11})
        if cfg.mode == "inexact":
            g = gamma_ranges(system, data, cfg.block11)
            rep = verify_bounds(spec, g, "general")
            report.update(rep.to_dict())
            g2 = gamma_ranges(system, data, cfg.block11, x_tilde="stilde")
            report["gamma_stilde"] = g2.to_dict()
            report["real_interval_stilde"] = [float(x) for x in real_interval_general(g2)]
        else:
            real = spec.real
            report.update({"n_real": int(real.size), "n_complex": int(spec.complex.size),
                           "real_range": [float(real.min()), float(real.max())]
                           if real.size else None})
    files = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_eigs(out_dir / "eigs.csv", spec.values)
        (out_dir / "report.json").write_text(json.dumps(report, indent=2, default=_jsonable))
        files = [out_dir / "eigs.csv", out_dir / "report.json"]
    return SpectrumResult(spec, report, files)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)
