"""Test matrices and right-hand sides.

``scaled_paper`` reproduces the near-singular construction used for the
direction experiments at any size. With ``k = min(m, n)``:

1. ``G = N(0, 1)^{k x k} + shift * I``;
2. the last row is replaced by the second-to-last row plus ``perturb`` in
   every entry (perturb first, then normalize);
3. every row is scaled to unit 2-norm;
4. ``m - k`` zero rows (tall case) or ``n - k`` zero columns (wide case)
   are appended.

``paper_a1`` and ``paper_a2`` are the full-size instances: 600 x 500 and
500 x 600 with shift 100 and perturbation 0.01.

All Gaussian draws come from :class:`regslab.sampling.RngStream` through
Box-Muller, so a spec and its seed pin the matrix bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SvdFactorization, as_matrix, svd
from .sampling import RngStream

KINDS = ("gaussian", "paper_a1", "paper_a2", "scaled_paper", "explicit_spectrum")
RHS_MODES = ("consistent", "nullspace_inconsistent", "gaussian_inconsistent")

# stream ids separating the uses of one seed
_MATRIX_STREAM = 0
_LEFT_STREAM = 1
_RIGHT_STREAM = 2
_RHS_X_STREAM = 10
_RHS_NOISE_STREAM = 11

FULL_SHIFT = 100.0
FULL_PERTURB = 0.01
FULL_SIZE = 500
FULL_PAD = 100


@dataclass(frozen=True)
class MatrixSpec:
    kind: str
    m: int
    n: int
    seed: int = 0
    shift: float = 20.0
    perturb: float = 0.01
    spectrum: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}; expected one of {KINDS}")
        if self.m < 1 or self.n < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.kind in ("paper_a1", "paper_a2") and (self.m, self.n) != _full_shape(self.kind):
            raise ValueError(f"{self.kind} is {_full_shape(self.kind)}, got {(self.m, self.n)}")
        if self.spectrum is not None:
            s = tuple(float(v) for v in self.spectrum)
            if any(v < 0 for v in s) or any(a < b for a, b in zip(s, s[1:])):
                raise ValueError("spectrum must be nonnegative and nonincreasing")
            if len(s) > min(self.m, self.n):
                raise ValueError("spectrum longer than min(m, n)")
            object.__setattr__(self, "spectrum", s)
        elif self.kind == "explicit_spectrum":
            raise ValueError("explicit_spectrum needs a spectrum")

    @classmethod
    def full_size(cls, kind: str, seed: int = 0) -> "MatrixSpec":
        m, n = _full_shape(kind)
        return cls(kind=kind, m=m, n=n, seed=seed, shift=FULL_SHIFT, perturb=FULL_PERTURB)


def _full_shape(kind: str) -> tuple[int, int]:
    full = FULL_SIZE + FULL_PAD
    return (full, FULL_SIZE) if kind == "paper_a1" else (FULL_SIZE, full)


def gaussian_matrix(rng: RngStream, m: int, n: int) -> np.ndarray:
    return rng.normals(m * n).reshape(m, n)


def random_orthonormal(rng: RngStream, dim: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, signs fixed)."""
    Q, R = np.linalg.qr(gaussian_matrix(rng, dim, dim))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


def near_singular_block(rng: RngStream, k: int, shift: float, perturb: float) -> np.ndarray:
    G = gaussian_matrix(rng, k, k) + shift * np.eye(k)
    if k >= 2:
        G[-1] = G[-2] + perturb
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def build_matrix(spec: MatrixSpec) -> np.ndarray:
    m, n = spec.m, spec.n
    if spec.kind == "gaussian":
        return gaussian_matrix(RngStream(spec.seed, _MATRIX_STREAM), m, n)
    if spec.kind == "explicit_spectrum":
        s = np.zeros(min(m, n))
        s[: len(spec.spectrum)] = spec.spectrum
        U = random_orthonormal(RngStream(spec.seed, _LEFT_STREAM), m)
        V = random_orthonormal(RngStream(spec.seed, _RIGHT_STREAM), n)
        k = s.size
        return (U[:, :k] * s) @ V[:, :k].T
    if spec.kind in ("paper_a1", "paper_a2"):
        spec = MatrixSpec.full_size(spec.kind, spec.seed)
    k = min(m, n)
    G = near_singular_block(RngStream(spec.seed, _MATRIX_STREAM), k, spec.shift, spec.perturb)
    A = np.zeros((m, n))
    A[:k, :k] = G
    return A


def make_rhs(A, x_seed: int, mode: str, factorization: SvdFactorization | None = None,
             noise: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side ``b`` and the planted ``x`` it was built from.

    ``nullspace_inconsistent`` adds ``z = (I - U_r U_r^T) g`` scaled to
    ``noise * |A x|``; ``A^T z = 0`` so the least-squares solution is the
    same as for ``b = A x``. ``gaussian_inconsistent`` adds Gaussian noise
    of the same relative size without the projection.
    """
    A = as_matrix(A)
    m, n = A.shape
    if mode not in RHS_MODES:
        raise ValueError(f"unknown rhs mode {mode!r}; expected one of {RHS_MODES}")
    x = RngStream(x_seed, _RHS_X_STREAM).normals(n)
    Ax = A @ x
    if mode == "consistent":
        return Ax, x
    g = RngStream(x_seed, _RHS_NOISE_STREAM).normals(m)
    if mode == "nullspace_inconsistent":
        f = factorization if factorization is not None else svd(A)
        if f.rank >= m:
            raise ValueError("A has full row rank; the null space of A^T is trivial")
        Ur = f.Ur
        g = g - Ur @ (Ur.T @ g)
        g = g - Ur @ (Ur.T @ g)
    scale = noise * np.linalg.norm(Ax) / np.linalg.norm(g)
    return Ax + scale * g, x


def random_problem_matrix(seed: int, m: int, n: int, rank: int | None = None,
                          smin: float = 0.5, smax: float = 2.0) -> np.ndarray:
    """Random matrix with ``rank`` singular values spread over ``[smin, smax]``."""
    rank = min(m, n) if rank is None else rank
    if rank == 0:
        return np.zeros((m, n))
    spectrum = tuple(np.linspace(smax, smin, rank))
    return build_matrix(MatrixSpec("explicit_spectrum", m, n, seed=seed, spectrum=spectrum))
