import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from heatctl.linalg import FactorizationError, cond_estimate, extreme_eigen, factor, solve


def _spd(n, seed):
    G = np.random.default_rng(seed).standard_normal((n, n))
    return G.T @ G + np.eye(n)


def test_identity_factor():
    f = factor(sp.identity(5), "spd")
    b = np.arange(5.0)
    np.testing.assert_array_equal(solve(f, b), b)


def test_two_by_two():
    f = factor(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(f.solve(np.array([1.0, 0.0])), [2 / 3, -1 / 3], rtol=1e-14)


@pytest.mark.parametrize("kind", ["spd", "indef", "auto"])
def test_random_spd_residual(kind):
    A = _spd(50, 4)
    b = np.random.default_rng(5).standard_normal(50)
    x = factor(A, kind).solve(b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_spd_path_rejects_indefinite():
    with pytest.raises(FactorizationError):
        factor(np.diag([1.0, -1.0, 2.0]), "spd")


def test_saddle_point_solve():
    A = _spd(20, 6)
    B = np.random.default_rng(7).standard_normal((5, 20))
    K = np.block([[A, B.T], [B, np.zeros((5, 5))]])
    b = np.random.default_rng(8).standard_normal(25)
    x = factor(K, "indef").solve(b)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_factor_input_validation():
    with pytest.raises(ValueError):
        factor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        factor(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        factor(np.eye(2)).solve(np.ones(3))


def test_multiple_right_hand_sides():
    A = _spd(10, 9)
    B = np.random.default_rng(10).standard_normal((10, 3))
    for kind in ("spd", "indef"):
        np.testing.assert_allclose(A @ factor(A, kind).solve(B), B, atol=1e-10)


def test_extreme_eigen_diagonal():
    D = np.diag([1.0, 2.0, 3.0])
    big = extreme_eigen(D, which="largest", n=3)
    small = extreme_eigen(np.diag([1.0, 0.5, 1 / 3]), which="smallest", n=3)
    assert big.converged and big.value == pytest.approx(3.0, rel=1e-7)
    assert small.converged and small.value == pytest.approx(1.0, rel=1e-7)


def test_extreme_eigen_generalized():
    est = extreme_eigen(np.diag([4.0, 9.0]), J=np.diag([1.0, 9.0]), which="largest")
    assert est.value == pytest.approx(4.0, rel=1e-7)


def test_extreme_eigen_random_pencil():
    M, J = _spd(30, 11), _spd(30, 12)
    ev = sla.eigh(M, J, eigvals_only=True)
    big = extreme_eigen(M, J=J, which="largest", maxit=20000, tol=1e-12)
    Minv = np.linalg.inv(M)
    small = extreme_eigen(lambda x: Minv @ x, J=J, which="smallest", maxit=20000, tol=1e-12)
    assert big.value == pytest.approx(ev[-1], rel=1e-6)
    assert small.value == pytest.approx(ev[0], rel=1e-6)


def test_extreme_eigen_flags_non_convergence():
    M, J = _spd(30, 13), _spd(30, 14)
    est = extreme_eigen(M, J=J, which="largest", maxit=2)
    assert not est.converged and est.iterations == 2 and np.isfinite(est.value)


def test_extreme_eigen_start_vector_invariance():
    M = _spd(15, 15)
    a = extreme_eigen(M, which="largest", n=15, seed=1, tol=1e-12, maxit=20000).value
    b = extreme_eigen(M, which="largest", n=15, seed=2, tol=1e-12, maxit=20000).value
    assert a == pytest.approx(b, rel=1e-8)


def test_cond_estimate_small_cases():
    assert cond_estimate(sp.identity(4)) == pytest.approx(1.0)
    assert cond_estimate(np.diag([1.0, 100.0])) == pytest.approx(100.0)


def test_cond_estimate_dense_cross_check():
    S = np.random.default_rng(16).standard_normal((40, 40))
    S = S + S.T
    sv = np.linalg.svd(S, compute_uv=False)
    assert cond_estimate(S) == pytest.approx(sv[0] / sv[-1], rel=1e-8)


def test_cond_estimate_lanczos_path_and_scaling():
    n = 400
    d = np.linspace(-3.0, 5.0, n)
    d[np.abs(d) < 0.01] = 0.01
    M = sp.diags(d) + sp.diags([1e-3 * np.ones(n - 1)] * 2, [1, -1])
    dense = np.abs(np.linalg.eigvalsh(M.toarray()))
    ref = dense.max() / dense.min()
    assert cond_estimate(M) == pytest.approx(ref, rel=1e-6)
    assert cond_estimate(7.5 * M) == pytest.approx(cond_estimate(M), rel=1e-8)
