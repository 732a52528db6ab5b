import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dsaddle.factor import (NotPositiveDefiniteError, SPDSolver, chol_dense, chol_tridiag,
                            ichol_shifted, ichol_threshold)
from dsaddle.precond import build_approximations
from dsaddle.problems import gen_example1
from dsaddle.sparse import tridiagonal_part


def random_spd(n, seed):
    G = np.random.default_rng(seed).standard_normal((n, n))
    return G.T @ G + np.eye(n)


def test_chol_tridiag_small_cases():
    F = chol_tridiag(sp.csr_matrix([[4.0, 2.0], [2.0, 5.0]]))
    assert np.allclose(F.L.toarray(), [[2, 0], [1, 2]])
    assert F.kind == "bidiagonal-cholesky"
    assert np.array_equal(chol_tridiag(sp.identity(5)).L.toarray(), np.eye(5))


def test_chol_tridiag_reconstructs_schur_approximation():
    s = gen_example1(4)
    a = s.A.diagonal()
    dense = s.B.toarray() @ np.diag(1.0 / a) @ s.B.toarray().T
    T = tridiagonal_part(dense)
    L = chol_tridiag(T).L.toarray()
    assert np.abs(L @ L.T - T.toarray()).max() <= 1e-14 * np.abs(T.toarray()).max() * 10
    assert np.count_nonzero(np.tril(L, -2)) == 0


def test_chol_tridiag_errors():
    with pytest.raises(NotPositiveDefiniteError) as info:
        chol_tridiag(sp.csr_matrix([[1.0, 2.0], [2.0, 1.0]]))
    assert info.value.index == 1
    with pytest.raises(ValueError):
        chol_tridiag(sp.csr_matrix(np.ones((3, 3))))


@pytest.mark.parametrize("p", [2, 8, 16, 32, 64])
def test_chol_tridiag_never_breaks_on_example1(p):
    ap = build_approximations(gen_example1(p))
    assert ap.s_shift == 0.0
    assert np.all(ap.LS.L.diagonal() > 0)


def test_ichol_exact_limit():
    F = ichol_threshold(sp.csr_matrix([[4.0, 2.0], [2.0, 5.0]]), 0.0)
    assert np.allclose(F.L.toarray(), [[2, 0], [1, 2]])
    assert F.kind == "exact-cholesky"
    M = random_spd(20, 1)
    L = ichol_threshold(sp.csr_matrix(M), 0.0).L.toarray()
    assert np.linalg.norm(L @ L.T - M) <= 1e-10 * np.linalg.norm(M)
    assert np.allclose(L, np.linalg.cholesky(M), atol=1e-10)


def test_ichol_on_x0_of_example1():
    ap = build_approximations(gen_example1(8))
    F = ap.M
    assert F.kind == "incomplete-cholesky" and F.shift == 0.0
    assert np.all(F.L.diagonal() > 0)
    X0 = ap.X0.toarray()
    L = F.L.toarray()
    assert np.linalg.norm(L @ L.T - X0) <= 1e-2 * np.linalg.norm(X0)


def test_ichol_monotone_fill():
    s = gen_example1(6)
    X0 = build_approximations(s).X0
    counts = [ichol_threshold(X0, tau).nnz for tau in (0.0, 1e-4, 1e-3, 1e-2, 1e-1)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 25), st.floats(0.0, 0.3), st.integers(0, 10_000))
def test_ichol_defines_spd_operator(n, tau, seed):
    rng = np.random.default_rng(seed)
    R = sp.random(n, n, density=0.3, random_state=seed)
    M = sp.csr_matrix(R.T @ R + sp.identity(n))
    F = ichol_shifted(M, tau)
    L = F.L.toarray()
    assert np.allclose(L, np.tril(L))
    x = rng.standard_normal(n)
    assert x @ (L @ (L.T @ x)) > 0


def test_ichol_breakdown_and_shift():
    M = sp.csr_matrix([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        ichol_threshold(M, 0.0)
    assert info.value.index == 1
    # a positive diagonal with a weak indefinite coupling is rescued by the shift
    M = sp.csr_matrix([[1.0, 1.0005], [1.0005, 1.0]])
    F = ichol_shifted(M, 0.0)
    assert F.shift > 0
    with pytest.raises(ValueError):
        ichol_threshold(M, -1.0)
    with pytest.raises(ValueError):
        ichol_threshold(M, 0.1, drop="other")


def test_chol_dense_examples():
    assert np.allclose(chol_dense(np.diag([1.0, 4.0, 9.0])), np.diag([1.0, 2.0, 3.0]))
    assert np.array_equal(chol_dense(np.eye(4)), np.eye(4))
    M = random_spd(50, 3)
    L = chol_dense(M)
    assert np.linalg.norm(L @ L.T - M) <= 1e-12 * np.linalg.norm(M)
    b = np.random.default_rng(4).standard_normal(50)
    x = np.linalg.solve(L.T, np.linalg.solve(L, b))
    assert np.allclose(x, np.linalg.inv(M) @ b, rtol=1e-8)
    with pytest.raises(NotPositiveDefiniteError):
        chol_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_spd_solver_block_structure():
    s = gen_example1(4)
    sol = SPDSolver(s.A)
    b = np.random.default_rng(0).standard_normal((s.dims[0], 3))
    assert np.allclose(s.A @ sol.solve(b), b, atol=1e-10)
    assert sol.coupled.size < s.dims[0]
