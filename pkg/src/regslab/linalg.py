"""Dense linear algebra: SVD by one-sided Jacobi, numerical rank, and the
minimum-norm least-squares solution.

Matrices and vectors are plain ``float64`` numpy arrays. Singular indices
passed to accessors (``u``, ``v``, ``sigma_at``) are 1-based to match the
usual ``sigma_1 >= sigma_2 >= ...`` numbering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

EPS = np.finfo(np.float64).eps


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class SvdConvergenceError(RuntimeError):
    """Jacobi sweeps did not converge within the sweep limit."""


def as_matrix(A) -> np.ndarray:
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def as_vector(x, length: int | None = None) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {x.shape}")
    if length is not None and x.size != length:
        raise DimensionError(f"expected length {length}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    return x


def matvec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {x.shape}")
    return A @ x


def column_sq_norms(A: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->j", A, A)


def row_sq_norms(A: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", A, A)


def frob_sq(A: np.ndarray) -> float:
    return float(np.sum(column_sq_norms(A)))


@dataclass(frozen=True)
class SvdFactorization:
    """Full SVD ``A = U diag(sigma) V^T`` with ``U`` m x m and ``V`` n x n."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    rank: int
    rank_tol: float
    sweeps: int = 0

    def _check_ell(self, ell: int) -> None:
        if not 1 <= ell <= self.rank:
            raise IndexError(f"singular index {ell} outside 1..{self.rank}")

    def u(self, ell: int) -> np.ndarray:
        self._check_ell(ell)
        return self.U[:, ell - 1]

    def v(self, ell: int) -> np.ndarray:
        self._check_ell(ell)
        return self.V[:, ell - 1]

    def sigma_at(self, ell: int) -> float:
        self._check_ell(ell)
        return float(self.sigma[ell - 1])

    @property
    def sigma_r(self) -> float:
        """Smallest nonzero singular value (0.0 for the zero matrix)."""
        return float(self.sigma[self.rank - 1]) if self.rank else 0.0

    @property
    def Ur(self) -> np.ndarray:
        return self.U[:, : self.rank]

    @property
    def Vr(self) -> np.ndarray:
        return self.V[:, : self.rank]

    def reconstruct(self) -> np.ndarray:
        m, n = self.U.shape[0], self.V.shape[0]
        k = self.sigma.size
        return (self.U[:, :k] * self.sigma) @ self.V[:, :k].T if k else np.zeros((m, n))


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: each round is a set of disjoint column pairs and
    every pair (p, q) appears exactly once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for a in range(size // 2):
            p, q = players[a], players[size - 1 - a]
            if p >= 0 and q >= 0:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_basis(Q1: np.ndarray, dim: int) -> np.ndarray:
    """Extend orthonormal columns ``Q1`` (dim x k) to an orthonormal basis."""
    k = Q1.shape[1]
    if k == dim:
        return Q1.copy()
    if k == 0:
        return np.eye(dim)
    Q, _ = np.linalg.qr(Q1, mode="complete")
    Q[:, :k] = Q1
    # one reorthogonalization pass against Q1 for the completed block
    tail = Q[:, k:]
    tail -= Q1 @ (Q1.T @ tail)
    tail, _ = np.linalg.qr(tail)
    Q[:, k:] = tail
    return Q


def _jacobi_tall(A: np.ndarray, max_sweeps: int):
    """One-sided Jacobi on a tall matrix (m >= n). Returns W = A V, V, sweeps."""
    m, n = A.shape
    W = A.copy()
    V = np.eye(n)
    normA = np.sqrt(np.sum(A * A))
    if normA == 0.0 or n == 1:
        return W, V, 0
    tol = max(m, 8) * EPS
    floor = (EPS * normA) ** 2
    rounds = _round_robin(n)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for P, Q in rounds:
            if P.size == 0:
                continue
            Wp, Wq = W[:, P], W[:, Q]
            alpha = np.einsum("ij,ij->j", Wp, Wp)
            beta = np.einsum("ij,ij->j", Wq, Wq)
            gamma = np.einsum("ij,ij->j", Wp, Wq)
            act = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (alpha * beta > floor * floor)
            if not np.any(act):
                continue
            rotated = True
            P, Q = P[act], Q[act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            sgn = np.where(zeta >= 0.0, 1.0, -1.0)
            t = sgn / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            Wp, Wq = W[:, P], W[:, Q]
            W[:, P] = c * Wp - s * Wq
            W[:, Q] = s * Wp + c * Wq
            Vp, Vq = V[:, P], V[:, Q]
            V[:, P] = c * Vp - s * Vq
            V[:, Q] = s * Vp + c * Vq
        if not rotated:
            return W, V, sweep
    raise SvdConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")


def svd(A, rank_tol: float = 1e-10, max_sweeps: int = 60) -> SvdFactorization:
    """Full singular value decomposition by one-sided (Hestenes) Jacobi.

    Column pairs are rotated in a round-robin order, so each round is a
    batch of disjoint rotations. A pair counts as converged once
    ``|a_p . a_q| <= max(m, 8) * eps * |a_p| |a_q|``. Columns whose norm is
    at rounding level get their left singular vectors from a basis
    completion instead of normalization.

    Raises
    ------
    SvdConvergenceError
        If a sweep still performs rotations after ``max_sweeps`` sweeps.
    """
    A = as_matrix(A)
    m, n = A.shape
    flip = m < n
    M = A.T if flip else A
    p, q = M.shape  # p >= q

    W, Vt, sweeps = _jacobi_tall(M, max_sweeps)
    norms = np.sqrt(np.einsum("ij,ij->j", W, W))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    W = W[:, order]
    Vt = Vt[:, order]

    normM = np.sqrt(np.sum(M * M))
    keep = norms > max(p, q) * EPS * normM
    k = int(np.count_nonzero(keep))
    Ut = _complete_basis(W[:, :k] / norms[:k], p)

    sigma = norms
    if flip:
        U, V = Vt, Ut
    else:
        U, V = Ut, Vt
    top = sigma[0] if sigma.size else 0.0
    rank = int(np.count_nonzero(sigma > rank_tol * top)) if top > 0 else 0
    return SvdFactorization(U=U, sigma=sigma, V=V, rank=rank, rank_tol=rank_tol, sweeps=sweeps)


def min_norm_lsq(A, b, factorization: SvdFactorization | None = None) -> np.ndarray:
    """``A^+ b`` from the leading ``rank`` singular triplets; zero if rank is 0."""
    A = as_matrix(A)
    b = as_vector(b, A.shape[0])
    f = factorization if factorization is not None else svd(A)
    r = f.rank
    if r == 0:
        return np.zeros(A.shape[1])
    coef = (f.U[:, :r].T @ b) / f.sigma[:r]
    return f.V[:, :r] @ coef


def row_space_residual(f: SvdFactorization, x: np.ndarray) -> float:
    """``|(I - V_r V_r^T) x|_2``: distance of ``x`` from the row space."""
    Vr = f.Vr
    return float(np.linalg.norm(x - Vr @ (Vr.T @ x)))


@dataclass(frozen=True)
class LsqProblem:
    """A least-squares instance with its SVD and minimum-norm solution cached."""

    A: np.ndarray
    b: np.ndarray
    svd: SvdFactorization
    x_star: np.ndarray
    Ax_star: np.ndarray
    col_sq: np.ndarray = field(repr=False)
    row_sq: np.ndarray = field(repr=False)
    frob_sq: float = 0.0

    @classmethod
    def from_system(cls, A, b, factorization: SvdFactorization | None = None) -> "LsqProblem":
        A = as_matrix(A)
        b = as_vector(b, A.shape[0])
        f = factorization if factorization is not None else svd(A)
        x_star = min_norm_lsq(A, b, f)
        for arr in (A, b, x_star):
            arr.setflags(write=False)
        Ax_star = A @ x_star
        Ax_star.setflags(write=False)
        col_sq = column_sq_norms(A)
        row_sq = row_sq_norms(A)
        return cls(A=A, b=b, svd=f, x_star=x_star, Ax_star=Ax_star,
                   col_sq=col_sq, row_sq=row_sq, frob_sq=float(np.sum(col_sq)))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def rank(self) -> int:
        return self.svd.rank

    @cached_property
    def A_T(self) -> np.ndarray:
        """Row-major copy of ``A^T`` (fast column gathers)."""
        At = np.ascontiguousarray(self.A.T)
        At.setflags(write=False)
        return At

    @property
    def r_star(self) -> np.ndarray:
        return self.b - self.Ax_star

    def decay_factor(self, ell: int) -> float:
        """Per-step contraction ``1 - sigma_ell^2 / |A|_F^2``."""
        return 1.0 - self.svd.sigma_at(ell) ** 2 / self.frob_sq

    def normal_equation_residual(self) -> float:
        return float(np.linalg.norm(self.A.T @ (self.b - self.Ax_star)))
