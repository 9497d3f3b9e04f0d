import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regslab import oracle
from regslab.linalg import LsqProblem
from regslab.solvers import RgsState
from regslab.testgen import MatrixSpec, build_matrix, make_rhs, random_problem_matrix
from regslab.verification import identity_checks


def problem(A, b):
    return LsqProblem.from_system(np.asarray(A, float), np.asarray(b, float))


def random_instance(seed, m=10, n=6, rank=None):
    A = random_problem_matrix(seed, m, n, rank) if rank else build_matrix(MatrixSpec("gaussian", m, n, seed=seed))
    b, _ = make_rhs(A, seed, "gaussian_inconsistent", noise=0.5)
    P = LsqProblem.from_system(A, b)
    rng = np.random.default_rng(seed)
    return P, rng.standard_normal(n), P.svd.Vr @ rng.standard_normal(P.rank)


DIAG = problem(np.diag([2.0, 1.0]), [0.0, 0.0])


# -- single-step RGS identities ---------------------------------------------

def test_projection_step_zero_at_solution():
    P, _, _ = random_instance(1)
    r = oracle.enum_rgs_projection_step(P, P.x_star, 1)
    assert abs(r.enumerated) < 1e-13 and r.closed_form == 0.0


def test_projection_step_hand_example():
    r = oracle.enum_rgs_projection_step(DIAG, np.ones(2), 1)
    assert r.enumerated == pytest.approx(0.4, abs=1e-15)
    assert r.closed_form == pytest.approx((1 - 4 / 5) * 2, abs=1e-15)


def test_projection_step_out_of_range():
    with pytest.raises(IndexError):
        oracle.enum_rgs_projection_step(DIAG, np.ones(2), 3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([None, 4]))
def test_projection_step_random(seed, rank):
    P, x, _ = random_instance(seed, rank=rank)
    scale = np.linalg.norm(P.A @ x - P.Ax_star)
    for ell in range(1, P.rank + 1):
        assert oracle.enum_rgs_projection_step(P, x, ell).rel_dev(scale) <= 1e-10


def test_closed_form_k0_and_identity_matrix():
    P = problem(np.eye(4), [1.0, 2.0, 3.0, 4.0])
    x0 = np.zeros(4)
    for ell in range(1, 5):
        init = float((P.A @ x0 - P.Ax_star) @ P.svd.u(ell))
        assert oracle.closed_form_rgs_projection(P, x0, ell, 0).value == init
        assert oracle.closed_form_rgs_projection(P, x0, ell, 7).value == pytest.approx(0.75 ** 7 * init, rel=1e-14)


def test_residual_projection_sign_convention():
    P, x0, _ = random_instance(2)
    r0 = P.b - P.A @ x0
    for k in (0, 3, 30):
        for ell in (1, P.rank):
            a = oracle.closed_form_rgs_residual_projection(P, r0, ell, k).value
            b = oracle.closed_form_rgs_projection(P, x0, ell, k).value
            assert a == pytest.approx(-b, rel=1e-12, abs=1e-14)
    assert oracle.closed_form_rgs_residual_projection(P, P.r_star, 1, 5).value == 0.0


def test_rk_projection_examples():
    P, _, _ = random_instance(3)
    assert oracle.closed_form_rk_projection(P, P.x_star, 1, 10).value == 0.0
    single = problem([[3.0, 4.0]], [2.0])
    assert oracle.closed_form_rk_projection(single, np.array([1.0, -1.0]), 1, 1).value == pytest.approx(0.0, abs=1e-15)


def test_sq_error_factor_along_extreme_directions():
    P, _, _ = random_instance(4)
    F2 = P.frob_sq
    for ell in (1, P.rank):
        x = P.x_star + P.svd.v(ell)  # error sigma_ell * u_ell
        r = oracle.enum_rgs_sq_error_step(P, x)
        e2 = P.svd.sigma_at(ell) ** 2
        assert r.closed_form / e2 == pytest.approx(1 - e2 / F2, rel=1e-12)
        assert r.rel_dev() <= 1e-10


def test_sq_error_zero_error_raises():
    P, _, _ = random_instance(5)
    with pytest.raises(oracle.DegenerateInstanceError):
        oracle.enum_rgs_sq_error_step(P, P.x_star)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([None, 4]))
def test_sq_error_and_fluctuation_random(seed, rank):
    P, x, _ = random_instance(seed, rank=rank)
    assert oracle.enum_rgs_sq_error_step(P, x).rel_dev() <= 1e-10
    assert oracle.enum_rgs_fluctuation_step(P, x).rel_dev() <= 1e-10


def test_fluctuation_hand_example():
    r = oracle.enum_rgs_fluctuation_step(DIAG, np.ones(2))
    assert r.enumerated == pytest.approx(0.8 * 0.2 + 0.2 * 0.8, abs=1e-15)
    assert r.closed_form == pytest.approx(1 - (17 / 5) / 5, abs=1e-15)


def test_fluctuation_nearly_frozen_along_small_direction():
    A = random_problem_matrix(6, 12, 8, smin=0.01, smax=2.0)
    P = problem(A, np.zeros(12))
    r = oracle.enum_rgs_fluctuation_step(P, P.svd.v(P.rank))
    assert r.closed_form == pytest.approx(1 - P.svd.sigma_r ** 2 / P.frob_sq, rel=1e-12)
    assert r.enumerated > 0.9999


def test_fluctuation_flags_degenerate_column():
    P = problem(np.eye(2), [1.0, 0.0])
    with pytest.raises(oracle.DegenerateInstanceError) as info:
        oracle.enum_rgs_fluctuation_step(P, np.zeros(2))
    assert info.value.index == 0


# -- REGS -------------------------------------------------------------------

def test_regs_projection_step_at_solution():
    P, _, _ = random_instance(7)
    r = oracle.enum_regs_projection_step(P, P.x_star, P.x_star, 1)
    assert abs(r.enumerated) < 1e-13 and abs(r.closed_form) < 1e-13


def test_regs_projection_step_identity_matrix():
    P = problem(np.eye(2), [1.0, -1.0])
    z, xn = np.array([3.0, 0.5]), np.array([-2.0, 4.0])
    for ell in (1, 2):
        e = P.svd.v(ell)
        expect = 0.5 * (z - P.x_star) @ e + 0.5 * (xn - P.x_star) @ e
        r = oracle.enum_regs_projection_step(P, xn, z, ell)
        assert r.closed_form == pytest.approx(expect, abs=1e-15)
        assert r.enumerated == pytest.approx(expect, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([None, 4]))
def test_regs_projection_step_random(seed, rank):
    P, x, z = random_instance(seed, rank=rank)
    scale = np.linalg.norm(z - P.x_star) + np.linalg.norm(x - P.x_star)
    for ell in range(1, P.rank + 1):
        assert oracle.enum_regs_projection_step(P, x, z, ell).rel_dev(scale) <= 1e-10


def test_regs_closed_form_examples():
    P, x0, z0 = random_instance(8)
    assert oracle.closed_form_regs_projection(P, P.x_star, P.x_star, 2, 9).value == 0.0
    assert oracle.closed_form_regs_A_projection(P, P.x_star, P.x_star, 2, 9).value == pytest.approx(0.0, abs=1e-14)
    v = P.svd.v(3)
    assert oracle.closed_form_regs_projection(P, x0, z0, 3, 0).value == pytest.approx((z0 - P.x_star) @ v, rel=1e-14)


@pytest.mark.parametrize("k", [0, 1, 10, 100])
def test_regs_A_projection_is_sigma_times_right_projection(k):
    P, x0, z0 = random_instance(9)
    for ell in range(1, P.rank + 1):
        a = oracle.closed_form_regs_A_projection(P, x0, z0, ell, k).value
        r = oracle.closed_form_regs_projection(P, x0, z0, ell, k).value
        assert a == pytest.approx(P.svd.sigma_at(ell) * r, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("k", [1, 7, 50])
def test_multistep_forms_equal_composed_recursions(k):
    P, x0, z0 = random_instance(10, rank=4)
    for ell in range(1, P.rank + 1):
        a = oracle.closed_form_rgs_projection(P, x0, ell, k).value
        assert oracle.rel_deviation(oracle.compose_rgs_projection(P, x0, ell, k), a, 1.0) <= 1e-12
        a = oracle.closed_form_regs_projection(P, x0, z0, ell, k).value
        assert oracle.rel_deviation(oracle.compose_regs_projection(P, x0, z0, ell, k), a, 1.0) <= 1e-12


# -- bounds -----------------------------------------------------------------

def test_bounds_at_k0():
    P, x0, z0 = random_instance(11)
    e = P.A @ x0 - P.Ax_star
    assert oracle.bound_rgs(P, x0, 0) == pytest.approx(e @ e, rel=1e-14)
    d = z0 - P.x_star
    assert oracle.bound_regs(P, x0, z0, 0) == pytest.approx(d @ d, rel=1e-14)


def test_bound_grows_as_smallest_singular_value_shrinks():
    def bound_for(smallest):
        A = build_matrix(MatrixSpec("explicit_spectrum", 6, 4, seed=12, spectrum=(2.0, 1.5, 1.0, smallest)))
        P = LsqProblem.from_system(A, np.zeros(6))
        b = P.svd.u(1)  # same U for both spectra, so |A x0 - A x*| = 1 at x0 = 0
        P = LsqProblem.from_system(A, b)
        return oracle.bound_rgs(P, np.zeros(4), 20), oracle.bound_regs(P, np.zeros(4), np.zeros(4), 20)

    big, small = bound_for(0.5), bound_for(0.2)
    assert small[0] > big[0] and small[1] > big[1]


def test_step_bound_special_cases():
    P, x0, _ = random_instance(13)
    z = P.x_star + 0.7 * P.svd.v(P.rank)
    q = 1 - P.svd.sigma_r ** 2 / P.frob_sq
    assert oracle.bound_regs_step(P, z, P.x_star, 3) == pytest.approx(q * 0.49, rel=1e-12)
    e = P.A @ x0 - P.Ax_star
    assert oracle.bound_regs_step(P, P.x_star, x0, 0) == pytest.approx(e @ e / P.frob_sq, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([None, 4]))
def test_pair_enumeration_respects_step_bound(seed, rank):
    P, x, z = random_instance(seed, rank=rank)
    exact = oracle.enum_regs_sq_error_step(P, x, z)
    assert exact <= oracle.bound_regs_step(P, z, x, 1) * (1 + 1e-10)


def test_corrupted_update_is_flagged():
    def sloppy(state, A, b, j, col_sq=None):
        col = A[:, j]
        step = 0.9 * float(col @ (state.w - b)) / float(col @ col)
        x = state.x.copy()
        x[j] -= step
        return RgsState(x=x, w=state.w - step * col, k=state.k + 1)

    checks = {c.name: c for c in identity_checks(42, rgs_update=sloppy)}
    assert not checks["rgs_projection_step"].passed
    assert identity_checks(42)[0].passed
