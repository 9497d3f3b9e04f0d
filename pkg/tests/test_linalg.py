import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regslab.linalg import (
    DimensionError,
    LsqProblem,
    SvdConvergenceError,
    column_sq_norms,
    frob_sq,
    matvec,
    min_norm_lsq,
    row_sq_norms,
    svd,
)
from regslab.testgen import MatrixSpec, build_matrix


def assert_svd_invariants(A, f, tol=1e-10):
    m, n = A.shape
    assert f.U.shape == (m, m) and f.V.shape == (n, n) and f.sigma.shape == (min(m, n),)
    assert np.abs(f.U.T @ f.U - np.eye(m)).max() <= tol
    assert np.abs(f.V.T @ f.V - np.eye(n)).max() <= tol
    assert np.linalg.norm(A - f.reconstruct()) <= tol * max(1.0, np.linalg.norm(A))
    assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)
    expected_rank = int(np.sum(f.sigma > f.rank_tol * f.sigma[0])) if f.sigma[0] > 0 else 0
    assert f.rank == expected_rank
    if f.rank:
        assert f.sigma[f.rank - 1] > 0


# -- matvec and norms -------------------------------------------------------

def test_matvec_identity():
    assert np.array_equal(matvec(np.eye(2), np.array([3.0, 4.0])), [3.0, 4.0])


def test_matvec_diagonal():
    assert np.array_equal(matvec(np.diag([2.0, 1.0]), np.ones(2)), [2.0, 1.0])


def test_matvec_matches_row_dot_products():
    rng = np.random.default_rng(0)
    A, x = rng.standard_normal((5, 3)), rng.standard_normal(3)
    rows = np.array([sum(A[i, j] * x[j] for j in range(3)) for i in range(5)])
    np.testing.assert_allclose(matvec(A, x), rows, rtol=0, atol=1e-14)


def test_matvec_dimension_mismatch():
    with pytest.raises(DimensionError):
        matvec(np.eye(3), np.ones(2))


def test_nonfinite_entries_rejected():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan]]))


def test_norms_by_hand():
    A = np.array([[1.0, 2.0], [0.0, 2.0]])
    np.testing.assert_array_equal(column_sq_norms(A), [1.0, 8.0])
    assert frob_sq(A) == 9.0


def test_zero_column_has_zero_norm():
    A = np.array([[1.0, 0.0], [2.0, 0.0]])
    assert column_sq_norms(A)[1] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31))
def test_frobenius_two_summation_orders(m, n, seed):
    A = np.random.default_rng(seed).standard_normal((m, n))
    F = frob_sq(A)
    assert abs(F - row_sq_norms(A).sum()) <= 1e-12 * F
    assert abs(F - column_sq_norms(A).sum()) <= 1e-12 * F


# -- svd --------------------------------------------------------------------

def test_svd_diagonal():
    f = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(f.sigma, [3.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(np.abs(f.U), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(np.abs(f.V), np.eye(2), atol=1e-15)


def test_svd_zero_matrix():
    f = svd(np.zeros((2, 2)))
    np.testing.assert_array_equal(f.sigma, [0.0, 0.0])
    assert f.rank == 0
    assert_svd_invariants(np.zeros((2, 2)), f)


def test_svd_recovers_small_designed_singular_value():
    # near-singular spectrum shaped like the direction experiments
    spectrum = tuple(np.linspace(1.5, 0.6, 29)) + (1e-4,)
    A = build_matrix(MatrixSpec("explicit_spectrum", 36, 30, seed=3, spectrum=spectrum))
    f = svd(A)
    assert abs(f.sigma[-1] / 1e-4 - 1) <= 1e-8
    np.testing.assert_allclose(f.sigma, spectrum, rtol=1e-8)


def test_svd_sweep_limit_is_explicit():
    A = np.random.default_rng(1).standard_normal((8, 6))
    with pytest.raises(SvdConvergenceError):
        svd(A, max_sweeps=1)


def test_svd_accessors_are_one_based():
    f = svd(np.diag([3.0, 1.0, 0.0]))
    assert f.rank == 2 and f.sigma_at(1) == 3.0 and f.sigma_r == 1.0
    with pytest.raises(IndexError):
        f.u(3)
    with pytest.raises(IndexError):
        f.v(0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 15), st.integers(1, 15), st.integers(0, 2**31), st.booleans())
def test_svd_invariants_property(m, n, seed, deficient):
    rng = np.random.default_rng(seed)
    if deficient and min(m, n) > 1:
        k = int(rng.integers(1, min(m, n)))
        A = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
    else:
        A = rng.standard_normal((m, n))
    f = svd(A)
    assert_svd_invariants(A, f)
    x = rng.standard_normal(n)
    assert np.linalg.norm(A @ x) <= f.sigma[0] * np.linalg.norm(x) * (1 + 1e-10)
    if deficient and min(m, n) > 1:
        assert f.rank == k


def test_svd_matches_reference_singular_values():
    rng = np.random.default_rng(5)
    for shape in [(9, 4), (4, 9), (13, 13)]:
        A = rng.standard_normal(shape)
        np.testing.assert_allclose(svd(A).sigma, np.linalg.svd(A, compute_uv=False), rtol=1e-12)


# -- minimum-norm least squares --------------------------------------------

def test_min_norm_rank_one_diagonal():
    np.testing.assert_allclose(min_norm_lsq(np.diag([1.0, 0.0]), np.array([2.0, 5.0])), [2.0, 0.0])


def test_min_norm_identity():
    np.testing.assert_allclose(min_norm_lsq(np.eye(3), np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_min_norm_rank_zero_returns_zero():
    np.testing.assert_array_equal(min_norm_lsq(np.zeros((3, 2)), np.ones(3)), np.zeros(2))


def test_min_norm_against_normal_equations_in_row_space():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 5))
    b = rng.standard_normal(8)
    # independent oracle: solve normal equations in an orthonormal basis of R(A^T)
    Q, _ = np.linalg.qr(A.T)
    Q = Q[:, :3]
    B = A @ Q
    y = np.linalg.solve(B.T @ B, B.T @ b)
    np.testing.assert_allclose(min_norm_lsq(A, b), Q @ y, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**31))
def test_lsq_problem_invariants(m, n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, min(m, n) + 1))
    A = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
    b = rng.standard_normal(m)
    P = LsqProblem.from_system(A, b)
    assert P.normal_equation_residual() <= 1e-8 * np.linalg.norm(A) * np.linalg.norm(b)
    Vr = P.svd.Vr
    off = P.x_star - Vr @ (Vr.T @ P.x_star)
    assert np.linalg.norm(off) <= 1e-8 * max(1.0, np.linalg.norm(P.x_star))
    np.testing.assert_allclose(P.Ax_star, A @ P.x_star)
