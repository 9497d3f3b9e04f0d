"""Exact one-step expectations by enumeration, and closed-form multi-step
predictions for the singular-direction behaviour of RGS, RK and REGS.

Every ``enum_*`` function sums over all possible sampled indices, weighted
by their selection probabilities, so it computes a conditional expectation
exactly (up to rounding). The matching closed form is returned alongside
where one exists, which is what the identity checks compare.

Notation: ``F2 = |A|_F^2`` and ``q_ell = 1 - sigma_ell^2 / F2``. Singular
indices ``ell`` are 1-based and must not exceed the numerical rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import LsqProblem
from .solvers import RgsState, rgs_step, rk_step

RgsUpdate = Callable[..., RgsState]


class DegenerateInstanceError(ValueError):
    """A sampled update zeroes the error, so a normalized direction is undefined."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class TheoryPrediction:
    ell: int
    k: int
    value: float


@dataclass(frozen=True)
class StepIdentity:
    """Enumerated expectation next to its closed form."""

    enumerated: float
    closed_form: float

    def rel_dev(self, scale: float = 0.0) -> float:
        return rel_deviation(self.enumerated, self.closed_form, scale)


def rel_deviation(value: float, reference: float, scale: float = 0.0) -> float:
    """``|value - reference| / max(|reference|, 1e-6 * scale)``.

    The floor keeps near-zero references from inflating the ratio; ``scale``
    should be the magnitude of the quantities the reference was formed from.
    """
    denom = max(abs(reference), 1e-6 * abs(scale))
    if denom == 0.0:
        return 0.0 if value == 0.0 else float("inf")
    return abs(value - reference) / denom


def _check_ell(problem: LsqProblem, ell: int) -> None:
    if not 1 <= ell <= problem.rank:
        raise IndexError(f"singular index {ell} outside 1..{problem.rank}")


def state_at(problem: LsqProblem, x: np.ndarray) -> RgsState:
    x = np.asarray(x, dtype=np.float64)
    return RgsState(x=x, w=problem.A @ x)


def _column_successors(problem: LsqProblem, x: np.ndarray, update: RgsUpdate):
    """(probability, A x^+(j)) for every column with positive norm."""
    state = state_at(problem, x)
    for j in np.flatnonzero(problem.col_sq > 0):
        nxt = update(state, problem.A, problem.b, int(j))
        yield j, problem.col_sq[j] / problem.frob_sq, nxt


def enum_rgs_projection_step(problem: LsqProblem, x, ell: int,
                             update: RgsUpdate = rgs_step) -> StepIdentity:
    """``E_j <A x^+ - A x*, u_ell>`` against ``q_ell <A x - A x*, u_ell>``."""
    _check_ell(problem, ell)
    u = problem.svd.u(ell)
    total = 0.0
    for _, p, nxt in _column_successors(problem, x, update):
        total += p * float((problem.A @ nxt.x - problem.Ax_star) @ u)
    err = problem.A @ np.asarray(x) - problem.Ax_star
    return StepIdentity(total, problem.decay_factor(ell) * float(err @ u))


def closed_form_rgs_projection(problem: LsqProblem, x0, ell: int, k: int) -> TheoryPrediction:
    _check_ell(problem, ell)
    proj = float((problem.A @ np.asarray(x0) - problem.Ax_star) @ problem.svd.u(ell))
    return TheoryPrediction(ell, k, problem.decay_factor(ell) ** k * proj)


def closed_form_rgs_residual_projection(problem: LsqProblem, r0, ell: int, k: int) -> TheoryPrediction:
    """Same decay applied to ``<r_0 - r*, u_ell>`` with ``r = b - A x``."""
    _check_ell(problem, ell)
    proj = float((np.asarray(r0) - problem.r_star) @ problem.svd.u(ell))
    return TheoryPrediction(ell, k, problem.decay_factor(ell) ** k * proj)


def closed_form_rk_projection(problem: LsqProblem, x0, ell: int, k: int) -> TheoryPrediction:
    _check_ell(problem, ell)
    proj = float((np.asarray(x0) - problem.x_star) @ problem.svd.v(ell))
    return TheoryPrediction(ell, k, problem.decay_factor(ell) ** k * proj)


def _sq_error_terms(problem: LsqProblem, x):
    err = problem.A @ np.asarray(x) - problem.Ax_star
    nrm2 = float(err @ err)
    if nrm2 == 0.0:
        raise DegenerateInstanceError("A x equals A x*; the error direction is undefined", -1)
    what = err / np.sqrt(nrm2)
    atw = problem.A.T @ what
    factor = 1.0 - float(atw @ atw) / problem.frob_sq
    return err, nrm2, factor


def enum_rgs_sq_error_step(problem: LsqProblem, x, update: RgsUpdate = rgs_step) -> StepIdentity:
    """``E_j |A x^+ - A x*|^2`` against ``(1 - |A^T w|^2 / F2) |A x - A x*|^2``
    with ``w`` the normalized image-space error."""
    _, nrm2, factor = _sq_error_terms(problem, x)
    total = 0.0
    for _, p, nxt in _column_successors(problem, x, update):
        e = problem.A @ nxt.x - problem.Ax_star
        total += p * float(e @ e)
    return StepIdentity(total, factor * nrm2)


def enum_rgs_fluctuation_step(problem: LsqProblem, x, update: RgsUpdate = rgs_step,
                              zero_tol: float = 1e-13) -> StepIdentity:
    """``E_j <w, w^+(j)>^2`` for consecutive normalized errors, against
    ``1 - |A^T w|^2 / F2``.

    Raises :class:`DegenerateInstanceError` naming the first column whose
    update (numerically) zeroes the error.
    """
    err, nrm2, factor = _sq_error_terms(problem, x)
    what = err / np.sqrt(nrm2)
    total = 0.0
    for j, p, nxt in _column_successors(problem, x, update):
        e = problem.A @ nxt.x - problem.Ax_star
        en = float(np.linalg.norm(e))
        if en <= zero_tol * np.sqrt(nrm2):
            raise DegenerateInstanceError(f"column {j} zeroes the error", int(j))
        total += p * float(what @ (e / en)) ** 2
    return StepIdentity(total, factor)


def enum_regs_projection_step(problem: LsqProblem, x_next, z, ell: int) -> StepIdentity:
    """``E_i <z^+ - x*, v_ell>`` with ``z^+ = rk_step(z, A, x_next, i)``,
    against ``q_ell <z - x*, v_ell> + <A(x_next - x*), A v_ell> / F2``."""
    _check_ell(problem, ell)
    x_next = np.asarray(x_next, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    A = problem.A
    v = problem.svd.v(ell)
    total = 0.0
    for i in np.flatnonzero(problem.row_sq > 0):
        zp = rk_step(z, A, x_next, int(i), problem.row_sq[i])
        total += problem.row_sq[i] / problem.frob_sq * float((zp - problem.x_star) @ v)
    closed = (problem.decay_factor(ell) * float((z - problem.x_star) @ v)
              + float((A @ (x_next - problem.x_star)) @ (A @ v)) / problem.frob_sq)
    return StepIdentity(total, closed)


def closed_form_regs_projection(problem: LsqProblem, x0, z0, ell: int, k: int) -> TheoryPrediction:
    """``E <z_k - x*, v_ell>``."""
    _check_ell(problem, ell)
    v = problem.svd.v(ell)
    q = problem.decay_factor(ell) ** k
    first = float((np.asarray(z0) - problem.x_star) @ v)
    second = float((problem.A.T @ (problem.A @ np.asarray(x0) - problem.Ax_star)) @ v)
    return TheoryPrediction(ell, k, q * first + k / problem.frob_sq * q * second)


def closed_form_regs_A_projection(problem: LsqProblem, x0, z0, ell: int, k: int) -> TheoryPrediction:
    """``E <A z_k - A x*, u_ell>``.

    The leading term projects ``A z_0 - A x*`` (an m-vector) on the left
    singular vector ``u_ell``.
    """
    _check_ell(problem, ell)
    A = problem.A
    u = problem.svd.u(ell)
    q = problem.decay_factor(ell) ** k
    first = float((A @ np.asarray(z0) - problem.Ax_star) @ u)
    second = float((A @ (A.T @ (A @ np.asarray(x0) - problem.Ax_star))) @ u)
    return TheoryPrediction(ell, k, q * first + k / problem.frob_sq * q * second)


def _qr(problem: LsqProblem) -> float:
    return 1.0 - problem.svd.sigma_r ** 2 / problem.frob_sq


def bound_rgs(problem: LsqProblem, x0, k: int) -> float:
    """Upper bound on ``E |A x_k - A x*|^2``."""
    e = problem.A @ np.asarray(x0) - problem.Ax_star
    return _qr(problem) ** k * float(e @ e)


def bound_regs(problem: LsqProblem, x0, z0, k: int) -> float:
    """Upper bound on ``E |z_k - x*|^2``."""
    q = _qr(problem) ** k
    dz = np.asarray(z0) - problem.x_star
    e = problem.A @ np.asarray(x0) - problem.Ax_star
    return q * float(dz @ dz) + k / problem.frob_sq * q * float(e @ e)


def bound_regs_step(problem: LsqProblem, z_prev, x0, k: int) -> float:
    """One-step bound on ``E |z_k - x*|^2`` given ``z_{k-1}``.

    ``x0`` and ``k`` enter only through the x-error term
    ``q_r^k |A x0 - A x*|^2 / F2``. When ``z_prev = x*`` the first term is
    taken as 0 (the normalized direction is undefined there).
    """
    dz = np.asarray(z_prev) - problem.x_star
    nz2 = float(dz @ dz)
    first = 0.0
    if nz2 > 0.0:
        Az = problem.A @ (dz / np.sqrt(nz2))
        first = (1.0 - float(Az @ Az) / problem.frob_sq) * nz2
    e = problem.A @ np.asarray(x0) - problem.Ax_star
    return first + _qr(problem) ** k * float(e @ e) / problem.frob_sq


def enum_regs_sq_error_step(problem: LsqProblem, x_prev, z_prev,
                            update: RgsUpdate = rgs_step) -> float:
    """``E_{j,i} |z^+ - x*|^2`` over every (column, row) pair."""
    A, b = problem.A, problem.b
    state = state_at(problem, x_prev)
    z_prev = np.asarray(z_prev, dtype=np.float64)
    rows = np.flatnonzero(problem.row_sq > 0)
    pr = problem.row_sq[rows] / problem.frob_sq
    total = 0.0
    for j in np.flatnonzero(problem.col_sq > 0):
        xn = update(state, A, b, int(j)).x
        pj = problem.col_sq[j] / problem.frob_sq
        for i, pi in zip(rows, pr):
            d = rk_step(z_prev, A, xn, int(i), problem.row_sq[i]) - problem.x_star
            total += pj * pi * float(d @ d)
    return total


def compose_rgs_projection(problem: LsqProblem, x0, ell: int, k: int) -> float:
    """``k``-fold application of the one-step projection recursion."""
    val = float((problem.A @ np.asarray(x0) - problem.Ax_star) @ problem.svd.u(ell))
    q = problem.decay_factor(ell)
    for _ in range(k):
        val *= q
    return val


def compose_regs_projection(problem: LsqProblem, x0, z0, ell: int, k: int) -> float:
    """Iterate ``e_t = q e_{t-1} + (sigma/F2) q^t c`` where ``c`` is the
    initial image-space projection, i.e. the z-recursion driven by the
    expected x-projection."""
    sig = problem.svd.sigma_at(ell)
    q = problem.decay_factor(ell)
    c = float((problem.A @ np.asarray(x0) - problem.Ax_star) @ problem.svd.u(ell))
    e = float((np.asarray(z0) - problem.x_star) @ problem.svd.v(ell))
    xproj = c
    for _ in range(k):
        xproj *= q
        e = q * e + sig / problem.frob_sq * xproj
    return e
