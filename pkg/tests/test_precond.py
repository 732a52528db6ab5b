import numpy as np
import pytest
import scipy.sparse as sp

from dsaddle import bench
from dsaddle.bench import BenchConfig, run_bench
from dsaddle.krylov import fgmres, tolerance_schedule
from dsaddle.precond import (ALIASES, BlockPreconditioner, PreconditionerKind, Tag, apply_exact,
                             apply_inexact, apply_qbar, build_approximations, build_exact,
                             parse_kind)
from dsaddle.problems import BlockSaddleSystem, RhsSpec, gen_example1, gen_example2, make_rhs
from dsaddle.sparse import as_csr, tridiagonal_part

from oracles import dense_preconditioner

SCALAR = BlockSaddleSystem(as_csr([[2.0]]), as_csr([[1.0]]), as_csr([[1.0]]))


def dense_blocks(s):
    return s.A.toarray(), s.B.toarray(), s.C.toarray()


def test_parse_kind_aliases():
    assert parse_kind("qa").tag is Tag.Q3plus
    assert parse_kind("qb").tag is Tag.Q4plus
    assert parse_kind("q3").tag is Tag.Q3minus
    assert parse_kind("q4").tag is Tag.Q4minus
    assert parse_kind("PD").tag is Tag.P_D
    assert parse_kind("Q4plus", "inexact").mode == "inexact"
    assert set(ALIASES.values()) == set(Tag)
    with pytest.raises(ValueError):
        parse_kind("q9")
    with pytest.raises(ValueError):
        PreconditionerKind(Tag.Q1, "approximate")


def test_build_exact_small_cases():
    es = build_exact(SCALAR)
    assert np.allclose(es.S, [[0.5]]) and np.allclose(es.X, [[2.0]])
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 6))
    C = rng.standard_normal((2, 4))
    es = build_exact(BlockSaddleSystem(sp.identity(6), B, C))
    assert np.allclose(es.S, B @ B.T, rtol=1e-13)


def test_build_exact_matches_dense_inverse():
    s = gen_example1(2)
    A, B, C = dense_blocks(s)
    es = build_exact(s)
    S = B @ np.linalg.inv(A) @ B.T
    X = C @ np.linalg.inv(S) @ C.T
    assert np.abs(es.S - S).max() <= 1e-10 * np.abs(S).max()
    assert np.abs(es.X - X).max() <= 1e-10 * np.abs(X).max()


def test_apply_exact_scalar_back_substitution():
    w = apply_exact(parse_kind("qa"), build_exact(SCALAR), SCALAR, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(w, [0.5, 0.0, 0.0])


@pytest.mark.parametrize("tag", list(Tag))
@pytest.mark.parametrize("maker", [lambda: gen_example1(2), lambda: gen_example2(12, 8, 5, 3)])
def test_exact_application_matches_assembled_inverse(tag, maker):
    s = maker()
    A, B, C = dense_blocks(s)
    es = build_exact(s)
    Q = dense_preconditioner(tag.value, A, B, C, es.S, es.X)
    Pinv = BlockPreconditioner(s, PreconditionerKind(tag), es)(np.eye(s.size))
    ref = np.linalg.inv(Q)
    assert np.linalg.norm(Pinv - ref) <= 1e-8 * np.linalg.norm(ref)


@pytest.mark.parametrize("tag", list(Tag))
@pytest.mark.parametrize("block11", ["exact", "diag"])
def test_inexact_application_matches_assembled_inverse(tag, block11):
    s = gen_example1(3)
    A, B, C = dense_blocks(s)
    ap = build_approximations(s)
    A_used = A if block11 == "exact" else np.diag(ap.a_hat)
    Q = dense_preconditioner(tag.value, A_used, B, C, ap.S_hat.toarray(), ap.xhat_dense())
    P = BlockPreconditioner(s, PreconditionerKind(tag, "inexact"), ap, inner_tol=1e-13,
                            inner_maxit=1000, block11=block11)
    r = np.random.default_rng(1).standard_normal(s.size)
    ref = np.linalg.solve(Q, r)
    assert np.linalg.norm(P(r) - ref) <= 1e-8 * np.linalg.norm(ref)


def test_build_approximations_identity_blocks():
    rng = np.random.default_rng(2)
    C = as_csr(rng.standard_normal((3, 5)))
    ap = build_approximations(BlockSaddleSystem(sp.identity(5), sp.identity(5), C))
    assert np.allclose(ap.S_hat.toarray(), np.eye(5))
    assert np.allclose(ap.LS.L.toarray(), np.eye(5))
    assert np.allclose(ap.X0.toarray(), (C @ C.T).toarray())


def test_schur_approximation_is_tridiagonal_extraction():
    s = gen_example1(4)
    A, B, _ = dense_blocks(s)
    full = B @ np.diag(1.0 / np.diag(A)) @ B.T
    ap = build_approximations(s)
    assert np.allclose(ap.S_hat.toarray(), tridiagonal_part(full).toarray(), rtol=1e-14, atol=0)
    X0 = s.C.toarray() @ np.diag(1.0 / np.diag(full)) @ s.C.toarray().T
    assert np.allclose(ap.X0.toarray(), X0, rtol=1e-13)


def test_xhat_is_symmetric_operator():
    ap = build_approximations(gen_example1(5))
    rng = np.random.default_rng(4)
    u, v = rng.standard_normal((2, ap.X0.shape[0]))
    lhs, rhs = u @ ap.xhat(v), v @ ap.xhat(u)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_apply_qbar_zero_and_dense_oracle():
    s = gen_example1(4)
    A, B, C = dense_blocks(s)
    ap = build_approximations(s)
    assert np.array_equal(apply_qbar(ap, s, np.zeros(s.size)), np.zeros(s.size))
    Q = dense_preconditioner("Q3plus", A, B, C, ap.S_hat.toarray(), ap.xhat_dense())
    r = np.random.default_rng(5).standard_normal(s.size)
    ref = np.linalg.solve(Q, r)
    w = apply_qbar(ap, s, r, inner_tol=1e-12)
    assert np.linalg.norm(w - ref) <= 1e-8 * np.linalg.norm(ref)


def test_linearity_at_tight_inner_tolerance():
    s = gen_example1(4)
    ap = build_approximations(s)
    rng = np.random.default_rng(6)
    r1, r2 = rng.standard_normal((2, s.size))
    for name in ("qa", "q5", "pd", "p3", "q2", "q4", "pasb"):
        kind = parse_kind(name, "inexact")
        f = lambda r: apply_inexact(kind, ap, s, r, inner_tol=1e-13)
        lhs = f(2.0 * r1 - 3.0 * r2)
        rhs = 2.0 * f(r1) - 3.0 * f(r2)
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)
    es = build_exact(s)
    kind = parse_kind("q1")
    lhs = apply_exact(kind, es, s, r1 + r2)
    assert np.allclose(lhs, apply_exact(kind, es, s, r1) + apply_exact(kind, es, s, r2), rtol=1e-10)


def test_inner_tolerance_limit_is_cauchy():
    s = gen_example1(6)
    ap = build_approximations(s)
    r = np.random.default_rng(7).standard_normal(s.size)
    limit = apply_qbar(ap, s, r, inner_tol=1e-14)
    for tol in (1e-4, 1e-6, 1e-8, 1e-10):
        diff = np.linalg.norm(apply_qbar(ap, s, r, inner_tol=tol) - limit) / np.linalg.norm(limit)
        assert diff <= 1e3 * tol


def test_type_and_option_errors():
    s = gen_example1(2)
    with pytest.raises(TypeError):
        BlockPreconditioner(s, parse_kind("qa", "inexact"), build_exact(s))
    with pytest.raises(TypeError):
        BlockPreconditioner(s, parse_kind("qa", "exact"), build_approximations(s))
    with pytest.raises(ValueError):
        BlockPreconditioner(s, parse_kind("qa", "inexact"), build_approximations(s), block11="lu")


def test_approximations_built_once_per_system(monkeypatch):
    calls = []
    real = bench.build_approximations

    def counting(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(bench, "build_approximations", counting)
    rows = run_bench(BenchConfig(p_list=(16,), precond=("qa", "q5")))
    assert len(calls) == 1
    assert all(r.flag == "converged" for r in rows)


@pytest.mark.slow
@pytest.mark.parametrize("name, rhs, target", [("pd", "ones", 79), ("q5", "ones", 38),
                                               ("qa", "ones", 30), ("q4", "random", 55)])
def test_inexact_iteration_counts_p16(name, rhs, target):
    s = gen_example1(16)
    b, w = make_rhs(s, RhsSpec("unit" if rhs == "ones" else "random", 0))
    P = BlockPreconditioner(s, parse_kind(name, "inexact"), build_approximations(s))
    tol = tolerance_schedule(s.size)
    out = fgmres(s.matrix, b, P, tol=tol, x_true=w)
    assert out.converged
    assert abs(out.iterations - target) <= 0.2 * target
    assert np.linalg.norm(b - s.matrix @ out.x) / np.linalg.norm(b) < tol
