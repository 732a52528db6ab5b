"""Acceptance criteria, each checked at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line, printed in the
terminal summary; run ``python tests/test_acceptance.py`` to get the lines
without pytest.
"""
import time

import numpy as np
import pytest
import scipy.sparse as sp

from dsaddle.bench import BenchConfig, run_bench
from dsaddle.eig import eig_dense
from dsaddle.factor import chol_dense, chol_tridiag, ichol_threshold
from dsaddle.krylov import fgmres
from dsaddle.precond import BlockPreconditioner, apply_qbar, build_approximations, build_exact, parse_kind
from dsaddle.problems import gen_example1, gen_example2, make_rhs
from dsaddle.spectral import (gamma_ranges, lambda_plus, preconditioned_spectrum,
                              real_interval_general, simplified_spectrum, verify_bounds)
from dsaddle.sparse import tridiagonal_part

from oracles import charpoly_roots, dense_preconditioner

CUBE = (1 + np.sqrt(3) * 1j) / 2
PREDICTED_SETS = {
    "Q1": [1, CUBE, CUBE.conjugate()],
    "Q5": [1, CUBE, CUBE.conjugate()],
    "Q2": [1, -1, 1j, -1j],
    "Q3minus": [1, -1],
    "Q4minus": [1, -1],
    "Q3plus": [1],
    "Q4plus": [1],
}
CAPS = {"Q4plus": 2, "Q3plus": 3, "Q1": 3, "Q5": 3, "Q2": 4, "Q3minus": 4, "Q4minus": 4}
REFERENCE_ONES = {"qa": (30, 44, 46), "q5": (38, 57, 59), "pd": (79, 126, 132), "p3": (51, 83, 87),
          "q2": (66, 98, 100), "q4": (48, 81, 85)}
REFERENCE_RANDOM = {"qa": (33, 51, 54), "q5": (43, 66, 69)}
SIZES = (16, 32, 64)


def within(value, target, rel):
    return abs(value - target) <= rel * abs(target)


def criterion_1():
    t0 = time.perf_counter()
    worst = {}
    for p in (2, 4):
        s = gen_example1(p)
        es = build_exact(s)
        for tag, points in PREDICTED_SETS.items():
            spec = preconditioned_spectrum(s, parse_kind(tag), es)
            pts = np.asarray(points, dtype=complex)
            d = max(np.abs(v - pts).min() for v in spec.values)
            worst[tag] = max(worst.get(tag, 0.0), d)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-8 and elapsed < 10.0
    detail = (f"max distance to predicted sets {max(worst.values()):.1e} (limit 1e-8), "
              f"{elapsed:.1f}s (limit 10s)")
    return ok, detail


def criterion_2():
    over = []
    counts = {}
    for p in (2, 4):
        s = gen_example1(p)
        es = build_exact(s)
        b, _ = make_rhs(s)
        for tag, cap in CAPS.items():
            P = BlockPreconditioner(s, parse_kind(tag), es)
            out = fgmres(s.matrix, b, P, tol=1e-10, maxit=50)
            counts[(tag, p)] = out.iterations if out.converged else None
            if not (out.converged and out.iterations <= cap):
                its = out.iterations if out.converged else f">50 (res {out.final_rel_residual:.1e})"
                over.append(f"{tag} p={p}: {its} > {cap}")
    detail = "all within caps" if not over else "over cap: " + "; ".join(over)
    return not over, detail


def _sweep(rhs, table):
    cfg = BenchConfig(problem="ex1", p_list=SIZES, precond=tuple(table), rhs=rhs, seed=0)
    t0 = time.perf_counter()
    rows = run_bench(cfg)
    elapsed = time.perf_counter() - t0
    bad, got = [], {}
    for r in rows:
        target = table[r.precond][SIZES.index(r.p)]
        got[(r.precond, r.p)] = r.its
        if r.flag != "converged" or not within(r.its, target, 0.2):
            bad.append(f"{r.precond} p={r.p}: {r.its} vs {target} ({r.flag})")
    summary = ", ".join(f"{k} {tuple(got[(k, p)] for p in SIZES)}" for k in table)
    return bad, elapsed, summary


def criterion_3():
    bad, elapsed, summary = _sweep("ones", REFERENCE_ONES)
    ok = not bad and elapsed < 300.0
    return ok, f"ITS {summary}; {elapsed:.0f}s (limit 300s)" + (f"; off: {bad}" if bad else "")


def criterion_4():
    bad, elapsed, summary = _sweep("random", REFERENCE_RANDOM)
    return not bad, f"ITS {summary}; {elapsed:.0f}s" + (f"; off: {bad}" if bad else "")


def criterion_5():
    t0 = time.perf_counter()
    s = gen_example1(16)
    ap = build_approximations(s)
    spec = preconditioned_spectrum(s, parse_kind("qa", "inexact"), ap)
    # the reference interval is computed with X_tilde = C S_tilde^{-1} C^T
    g = gamma_ranges(s, ap, x_tilde="stilde")
    lo, hi = real_interval_general(g)
    rep = verify_bounds(spec, g)
    rmin, rmax = rep.real_range
    elapsed = time.perf_counter() - t0
    checks = {
        "complex in disc": bool(np.all(np.abs(spec.complex - 1.0) < 1.0)),
        "real range": within(rmin, 0.1982, 0.02) and within(rmax, 3.0019, 0.02),
        "interval": within(lo, 0.1342, 0.01) and within(hi, 6.2110, 0.01),
        "reals inside": bool(np.all((spec.real >= lo) & (spec.real <= hi))),
        "runtime": elapsed < 600.0,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"real range [{rmin:.4f}, {rmax:.4f}], interval [{lo:.4f}, {hi:.4f}], "
              f"max |lam-1| over complex {np.abs(spec.complex - 1).max():.3f}, {elapsed:.0f}s"
              + (f"; failed: {failed}" if failed else ""))
    return not failed, detail


def criterion_6(seeds=range(20)):
    t0 = time.perf_counter()
    bad = []
    for seed in seeds:
        spec, g = simplified_spectrum(gen_example2(100, 80, 60, seed))
        rep = verify_bounds(spec, g, "simplified")
        if not rep.passed:
            worst = min(np.real(rep.offending))
            bad.append(f"seed {seed}: real {worst:.4f} below synthetic {rep.synthetic_interval[0]:.4f}"
                       f" (sharp lower end {rep.real_interval[0]:.4f})")
    lam_one = abs(lambda_plus(1.0) - 1.0)
    elapsed = time.perf_counter() - t0
    ok = not bad and lam_one <= 1e-12 and elapsed < 120.0
    detail = (f"{len(list(seeds)) - len(bad)}/{len(list(seeds))} seeds inside both intervals, "
              f"|lambda_plus(1) - 1| = {lam_one:.1e}, {elapsed:.0f}s"
              + (f"; violations: {'; '.join(bad)}" if bad else ""))
    return ok, detail


def criterion_7():
    errors = {}
    s = gen_example1(4)
    ap = build_approximations(s)
    A, B, C = s.A.toarray(), s.B.toarray(), s.C.toarray()
    Q = dense_preconditioner("Q3plus", A, B, C, ap.S_hat.toarray(), ap.xhat_dense())
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        r = rng.standard_normal(s.size)
        ref = np.linalg.solve(Q, r)
        worst = max(worst, np.linalg.norm(apply_qbar(ap, s, r, inner_tol=1e-12) - ref)
                    / np.linalg.norm(ref))
    errors["apply_qbar"] = (worst, 1e-8)

    T = tridiagonal_part(B @ np.diag(1.0 / np.diag(A)) @ B.T)
    L = chol_tridiag(T).L.toarray()
    errors["chol_tridiag"] = (np.abs(L @ L.T - T.toarray()).max() / abs(T).max(), 1e-14)
    G = rng.standard_normal((20, 20))
    M = G.T @ G + np.eye(20)
    L = ichol_threshold(sp.csr_matrix(M), 0.0).L.toarray()
    errors["ichol tau=0"] = (np.linalg.norm(L @ L.T - M) / np.linalg.norm(M), 1e-10)
    G = rng.standard_normal((200, 200))
    M = G.T @ G + np.eye(200)
    L = chol_dense(M)
    errors["chol_dense"] = (np.linalg.norm(L @ L.T - M) / np.linalg.norm(M), 1e-12)

    from scipy.optimize import linear_sum_assignment
    worst = 0.0
    for seed in range(10):
        M = np.random.default_rng(100 + seed).standard_normal((6, 6))
        a, b = eig_dense(M), charpoly_roots(M)
        D = np.abs(a[:, None] - b[None, :])
        i, j = linear_sum_assignment(D)
        worst = max(worst, D[i, j].max())
    errors["eig_dense vs charpoly"] = (worst, 1e-6)

    failed = [k for k, (v, lim) in errors.items() if not v <= lim]
    detail = ", ".join(f"{k} {v:.1e}" for k, (v, _) in errors.items())
    return not failed, detail + (f"; failed: {failed}" if failed else "")


def _check(report_criterion, number, fn):
    ok, detail = fn()
    report_criterion(number, ok, detail)
    assert ok, detail


def test_criterion_1_exact_spectra(report_criterion):
    _check(report_criterion, 1, criterion_1)


def test_criterion_2_finite_termination(report_criterion):
    _check(report_criterion, 2, criterion_2)


@pytest.mark.slow
def test_criterion_3_ones_rhs_iterations(report_criterion):
    _check(report_criterion, 3, criterion_3)


@pytest.mark.slow
def test_criterion_4_random_rhs_iterations(report_criterion):
    _check(report_criterion, 4, criterion_4)


@pytest.mark.slow
def test_criterion_5_bound_check_p16(report_criterion):
    _check(report_criterion, 5, criterion_5)


def test_criterion_6_simplified_bounds(report_criterion):
    _check(report_criterion, 6, criterion_6)


def test_criterion_7_oracle_equivalence(report_criterion):
    _check(report_criterion, 7, criterion_7)


if __name__ == "__main__":
    for n, fn in enumerate([criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                            criterion_6, criterion_7], start=1):
        ok, detail = fn()
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
