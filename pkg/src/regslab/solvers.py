"""Randomized Gauss-Seidel (RGS), randomized Kaczmarz (RK) and randomized
extended Gauss-Seidel (REGS) kernels and run loops.

RGS updates one coordinate of ``x`` per step, picking column ``j`` with
probability ``|A_j|^2 / |A|_F^2``. REGS follows each RGS step with one
Kaczmarz projection of an auxiliary iterate ``z`` onto the hyperplane
``A_i z = A_i x``; ``z`` converges to the minimum-norm solution even when
``A`` lacks full column rank.

Two drivers are provided. :func:`run` follows one trajectory through the
single-step kernels. :func:`run_trials` advances many independent trials
as one batch; trial ``t`` draws from ``derive_stream(master_seed, t)`` with
the same counter layout as :func:`run`, so both drivers make identical
index choices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .linalg import LsqProblem, row_space_residual
from .sampling import (
    build_distribution,
    derive_stream,
    sample_index,
    sample_indices,
    stream_keys,
    uniforms_at,
)


class Mode(str, enum.Enum):
    RGS = "RGS"
    REGS = "REGS"
    RK = "RK"


class ContractViolation(ValueError):
    """A kernel was called outside its precondition."""


@dataclass(frozen=True)
class RgsState:
    x: np.ndarray
    w: np.ndarray  # cached A @ x
    k: int = 0


@dataclass(frozen=True)
class RegsState:
    x: np.ndarray
    w: np.ndarray
    z: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int
    master_seed: int = 0
    trace_every: int = 10
    refresh_every: int = 1000
    mode: Mode = Mode.RGS

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.trace_every < 1 or self.refresh_every < 1:
            raise ValueError("trace_every and refresh_every must be positive")

    @property
    def draws_per_step(self) -> int:
        return 2 if self.mode is Mode.REGS else 1


def rgs_step(state: RgsState, A: np.ndarray, b: np.ndarray, j: int,
             col_sq: float | None = None) -> RgsState:
    """Exact minimization of ``|Ax - b|^2`` along coordinate ``j``."""
    col = A[:, j]
    nrm = float(col @ col) if col_sq is None else col_sq
    if nrm <= 0.0:
        raise ContractViolation(f"column {j} is zero")
    step = float(col @ (state.w - b)) / nrm
    x = state.x.copy()
    x[j] -= step
    return RgsState(x=x, w=state.w - step * col, k=state.k + 1)


def _project_row(z: np.ndarray, row: np.ndarray, rhs: float, nrm: float) -> np.ndarray:
    return z - ((float(row @ z) - rhs) / nrm) * row


def rk_step(z: np.ndarray, A: np.ndarray, target: np.ndarray, i: int,
            row_sq: float | None = None) -> np.ndarray:
    """Project ``z`` onto ``{y : A_i y = A_i target}``."""
    row = A[i]
    nrm = float(row @ row) if row_sq is None else row_sq
    if nrm <= 0.0:
        raise ContractViolation(f"row {i} is zero")
    return z - (float(row @ (z - target)) / nrm) * row


def rk_solve_step(x: np.ndarray, A: np.ndarray, b: np.ndarray, i: int,
                  row_sq: float | None = None) -> np.ndarray:
    """Kaczmarz projection of ``x`` onto the hyperplane of equation ``i``."""
    row = A[i]
    nrm = float(row @ row) if row_sq is None else row_sq
    if nrm <= 0.0:
        raise ContractViolation(f"row {i} is zero")
    return _project_row(x, row, float(b[i]), nrm)


def regs_step(state: RegsState, A: np.ndarray, b: np.ndarray, j: int, i: int,
              col_sq: float | None = None, row_sq: float | None = None) -> RegsState:
    inner = rgs_step(RgsState(state.x, state.w, state.k), A, b, j, col_sq)
    z = rk_step(state.z, A, inner.x, i, row_sq)
    return RegsState(x=inner.x, w=inner.w, z=z, k=inner.k)


@dataclass
class RunTrace:
    """Snapshots of one trajectory at the traced iteration counts."""

    mode: Mode
    trial_id: int
    ks: list[int] = field(default_factory=list)
    xs: list[np.ndarray] = field(default_factory=list)
    zs: list[np.ndarray] = field(default_factory=list)
    final: RgsState | RegsState | None = None

    def iterate(self, idx: int) -> np.ndarray:
        """The tracked iterate: ``z`` for REGS, ``x`` otherwise."""
        return self.zs[idx] if self.mode is Mode.REGS else self.xs[idx]


Hook = Callable[[int, "RgsState | RegsState"], None]


def check_row_space(problem: LsqProblem, z0: np.ndarray, tol: float = 1e-8) -> None:
    dist = row_space_residual(problem.svd, z0)
    if dist > tol * max(1.0, float(np.linalg.norm(z0))):
        raise ContractViolation(f"z0 is not in the row space of A (distance {dist:.3e})")


def _initial(problem: LsqProblem, x0, z0):
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=np.float64)
    z = np.zeros(problem.n) if z0 is None else np.array(z0, dtype=np.float64)
    if x.shape != (problem.n,) or z.shape != (problem.n,):
        raise ContractViolation("initial iterates must have length n")
    return x, z


def run(problem: LsqProblem, config: SolverConfig, hook: Hook | None = None,
        trial_id: int = 0, x0=None, z0=None) -> RunTrace:
    """Run one trajectory for ``config.max_iters`` steps.

    The state is traced at ``k = 0``, every ``trace_every`` steps and at the
    final step. ``w = A x`` is rebuilt from scratch every ``refresh_every``
    steps to bound the drift of the rank-one updates.
    """
    A, b = problem.A, problem.b
    mode = config.mode
    x, z = _initial(problem, x0, z0)
    if mode is Mode.REGS:
        check_row_space(problem, z)
    cols = build_distribution(problem.col_sq)
    rows = build_distribution(problem.row_sq)
    rng = derive_stream(config.master_seed, trial_id)

    if mode is Mode.REGS:
        state = RegsState(x=x, w=A @ x, z=z)
    else:
        state = RgsState(x=x, w=A @ x)

    trace = RunTrace(mode=mode, trial_id=trial_id)

    def record(s):
        trace.ks.append(s.k)
        trace.xs.append(s.x.copy())
        if mode is Mode.REGS:
            trace.zs.append(s.z.copy())
        if hook is not None:
            hook(s.k, s)

    record(state)
    for k in range(1, config.max_iters + 1):
        if mode is Mode.RGS:
            j = sample_index(cols, rng.uniform())
            state = rgs_step(state, A, b, j, problem.col_sq[j])
        elif mode is Mode.REGS:
            j = sample_index(cols, rng.uniform())
            i = sample_index(rows, rng.uniform())
            state = regs_step(state, A, b, j, i, problem.col_sq[j], problem.row_sq[i])
        else:
            i = sample_index(rows, rng.uniform())
            xn = rk_solve_step(state.x, A, b, i, problem.row_sq[i])
            state = RgsState(x=xn, w=state.w, k=k)
        if mode is Mode.RK or k % config.refresh_every == 0:
            state = replace(state, w=A @ state.x)
        if k % config.trace_every == 0 or k == config.max_iters:
            record(state)
    trace.final = state
    return trace


@dataclass
class BatchState:
    """Iterates of all trials, one row per trial."""

    X: np.ndarray
    W: np.ndarray
    Z: np.ndarray | None
    k: int = 0

    @property
    def iterate(self) -> np.ndarray:
        return self.Z if self.Z is not None else self.X


BatchHook = Callable[[int, BatchState], None]


def run_trials(problem: LsqProblem, config: SolverConfig, trial_ids: Iterable[int],
               record_at: Iterable[int], hook: BatchHook, x0=None, z0=None) -> BatchState:
    """Advance independent trials together, calling ``hook(k, state)`` for
    every ``k`` in ``record_at`` (``k = 0`` means the initial state).

    Runs to ``max(record_at)`` steps; ``config.max_iters`` is not consulted.
    """
    A, b = problem.A, problem.b
    At = problem.A_T
    mode = config.mode
    trial_ids = np.asarray(list(trial_ids), dtype=np.int64)
    T = trial_ids.size
    x, z = _initial(problem, x0, z0)
    if mode is Mode.REGS:
        check_row_space(problem, z)
    cols = build_distribution(problem.col_sq)
    rows = build_distribution(problem.row_sq)
    keys = stream_keys(config.master_seed, trial_ids.astype(np.uint64))
    record_at = sorted(set(int(k) for k in record_at))
    if not record_at or record_at[0] < 0:
        raise ValueError("record_at must hold nonnegative iteration counts")
    last = record_at[-1]
    wanted = set(record_at)

    X = np.tile(x, (T, 1))
    W = np.tile(A @ x, (T, 1))
    Z = np.tile(z, (T, 1)) if mode is Mode.REGS else None
    state = BatchState(X=X, W=W, Z=Z)
    tr = np.arange(T)
    col_sq, row_sq = problem.col_sq, problem.row_sq
    draws = config.draws_per_step

    if 0 in wanted:
        hook(0, state)
    for k in range(1, last + 1):
        c0 = (k - 1) * draws
        if mode is Mode.RK:
            i = sample_indices(rows, uniforms_at(keys, c0))
            R = A[i]
            t = (np.einsum("tn,tn->t", R, X) - b[i]) / row_sq[i]
            X -= t[:, None] * R
        else:
            j = sample_indices(cols, uniforms_at(keys, c0))
            C = At[j]
            s = np.einsum("tm,tm->t", C, W - b) / col_sq[j]
            X[tr, j] -= s
            W -= s[:, None] * C
            if mode is Mode.REGS:
                i = sample_indices(rows, uniforms_at(keys, c0 + 1))
                R = A[i]
                t = np.einsum("tn,tn->t", R, Z - X) / row_sq[i]
                Z -= t[:, None] * R
        if k % config.refresh_every == 0 or (mode is Mode.RK and k in wanted):
            W[:] = np.einsum("tn,nm->tm", X, At)
        state.k = k
        if k in wanted:
            hook(k, state)
    return state
