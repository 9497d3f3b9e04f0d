"""Direction metrics along solver trajectories and Monte Carlo aggregation.

The tracked iterate is ``x_k`` for RGS and RK and ``z_k`` for REGS. Metric
names:

``direction_projection``
    ``|<(A it - A x*) / |A it - A x*|, u_ell>|``, in [0, 1].
``projection_signed``
    ``<A it - A x*, u_ell>``.
``projection_signed_right``
    ``<it - x*, v_ell>``.
``rayleigh_ratio``
    ``|A (it - x*)| / |it - x*|``.
``sq_error``
    ``|A it - A x*|^2``.
``sq_error_solution``
    ``|it - x*|^2``.

Metrics that divide by a vanished error are recorded as NaN with status
``undefined`` and are skipped by the aggregates, never counted as zeros.
Signed projections feed the expectation checks; absolute ones feed the
figures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .linalg import LsqProblem
from .solvers import BatchState, SolverConfig, run_trials

UNDEFINED = float("nan")

QUANTITIES = (
    "direction_projection",
    "projection_signed",
    "projection_signed_right",
    "rayleigh_ratio",
    "sq_error",
    "sq_error_solution",
)
NEEDS_ELL = {"direction_projection", "projection_signed", "projection_signed_right"}


def direction_projection(problem: LsqProblem, y, ell: int) -> float:
    """Alignment of the image-space error ``y - A x*`` with ``u_ell``.

    ``ell`` may run over all ``m`` left singular vectors, including those
    outside the range of ``A``.
    """
    if not 1 <= ell <= problem.m:
        raise IndexError(f"singular index {ell} outside 1..{problem.m}")
    e = np.asarray(y, dtype=np.float64) - problem.Ax_star
    nrm = float(np.linalg.norm(e))
    if nrm == 0.0:
        return UNDEFINED
    return min(1.0, abs(float(e @ problem.svd.U[:, ell - 1])) / nrm)


def rayleigh_ratio(problem: LsqProblem, x) -> float:
    d = np.asarray(x, dtype=np.float64) - problem.x_star
    nrm = float(np.linalg.norm(d))
    if nrm == 0.0:
        return UNDEFINED
    return float(np.linalg.norm(problem.A @ d)) / nrm


@dataclass(frozen=True)
class TraceRecord:
    trial_id: int
    k: int
    quantity: str
    ell: int | None
    value: float
    status: str = "ok"


@dataclass(frozen=True)
class RunSummary:
    quantity: str
    ell: int | None
    ks: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    median: np.ndarray
    count: np.ndarray  # defined samples per k
    trials: int
    n_failed: int = 0


def _resolve_ell(problem: LsqProblem, ell) -> int | None:
    if ell is None:
        return None
    if ell == "r":
        return problem.rank
    return int(ell)


def evaluate(problem: LsqProblem, quantity: str, ell: int | None,
             it: np.ndarray, A_it: np.ndarray) -> np.ndarray:
    """Vectorized metric over trial rows of ``it`` (iterates) and ``A_it``."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}")
    if quantity in NEEDS_ELL:
        if ell is None or not 1 <= ell <= (problem.m if quantity != "projection_signed_right" else problem.n):
            raise IndexError(f"{quantity} needs a valid singular index, got {ell}")
    E = A_it - problem.Ax_star
    if quantity == "projection_signed":
        return np.einsum("tm,m->t", E, problem.svd.U[:, ell - 1])
    if quantity == "sq_error":
        return np.einsum("tm,tm->t", E, E)
    D = it - problem.x_star
    if quantity == "projection_signed_right":
        return np.einsum("tn,n->t", D, problem.svd.V[:, ell - 1])
    if quantity == "sq_error_solution":
        return np.einsum("tn,tn->t", D, D)
    ne = np.sqrt(np.einsum("tm,tm->t", E, E))
    with np.errstate(divide="ignore", invalid="ignore"):
        if quantity == "direction_projection":
            out = np.minimum(1.0, np.abs(np.einsum("tm,m->t", E, problem.svd.U[:, ell - 1])) / ne)
            out[ne == 0.0] = UNDEFINED
            return out
        nd = np.sqrt(np.einsum("tn,tn->t", D, D))
        out = ne / nd
        out[nd == 0.0] = UNDEFINED
        return out


@dataclass
class TrialTable:
    """Metric values indexed ``[quantity, trial, k]``."""

    quantities: list[tuple[str, int | None]]
    trial_ids: np.ndarray
    ks: np.ndarray
    values: np.ndarray
    failed: np.ndarray = field(default=None)  # bool per trial

    def status(self, q: int, t: int, kk: int) -> str:
        if self.failed[t]:
            return "error"
        return "undefined" if np.isnan(self.values[q, t, kk]) else "ok"

    def records(self) -> Iterable[TraceRecord]:
        """Rows in (trial, k, quantity) order."""
        for t, tid in enumerate(self.trial_ids):
            for kk, k in enumerate(self.ks):
                for q, (name, ell) in enumerate(self.quantities):
                    st = self.status(q, t, kk)
                    val = self.values[q, t, kk] if st == "ok" else UNDEFINED
                    yield TraceRecord(int(tid), int(k), name, ell, float(val), st)

    def summary(self, q: int) -> RunSummary:
        name, ell = self.quantities[q]
        vals = self.values[q][~self.failed]
        ok = ~np.isnan(vals)
        count = ok.sum(axis=0)
        mean = np.full(self.ks.size, np.nan)
        stderr = np.full(self.ks.size, np.nan)
        median = np.full(self.ks.size, np.nan)
        for kk in range(self.ks.size):
            col = vals[ok[:, kk], kk]
            if col.size:
                mean[kk] = col.mean()
                median[kk] = np.median(col)
            if col.size >= 2:
                # shift by one sample so identical values give exactly zero spread
                stderr[kk] = (col - col[0]).std(ddof=1) / np.sqrt(col.size)
        return RunSummary(quantity=name, ell=ell, ks=self.ks.copy(), mean=mean, stderr=stderr,
                          median=median, count=count, trials=int(self.trial_ids.size),
                          n_failed=int(self.failed.sum()))


def collect(problem: LsqProblem, config: SolverConfig,
            quantities: Sequence[tuple[str, int | str | None]], k_grid: Iterable[int],
            trials: int | Sequence[int], x0=None, z0=None) -> TrialTable:
    """Run independent trials and evaluate every metric at every ``k``.

    ``trials`` is a count (trial ids ``0..trials-1``) or explicit ids. A
    trial whose iterate turns non-finite is marked failed and excluded from
    the summaries.
    """
    trial_ids = np.arange(trials) if np.isscalar(trials) else np.asarray(list(trials))
    if trial_ids.size < 1:
        raise ValueError("need at least one trial")
    qs = [(name, _resolve_ell(problem, ell)) for name, ell in quantities]
    for name, ell in qs:
        if name not in QUANTITIES:
            raise ValueError(f"unknown quantity {name!r}")
    ks = np.array(sorted(set(int(k) for k in k_grid)), dtype=np.int64)
    slot = {int(k): i for i, k in enumerate(ks)}
    values = np.full((len(qs), trial_ids.size, ks.size), np.nan)
    failed = np.zeros(trial_ids.size, dtype=bool)
    At = problem.A_T

    def hook(k: int, st: BatchState) -> None:
        it = st.iterate
        # fixed per-row summation order: a trial's value must not depend on the batch
        A_it = np.einsum("tn,nm->tm", it, At)
        bad = ~np.all(np.isfinite(it), axis=1)
        failed[bad] = True
        for q, (name, ell) in enumerate(qs):
            values[q, :, slot[k]] = evaluate(problem, name, ell, it, A_it)

    run_trials(problem, config, trial_ids, ks, hook, x0=x0, z0=z0)
    return TrialTable(quantities=qs, trial_ids=trial_ids, ks=ks, values=values, failed=failed)


def monte_carlo(problem: LsqProblem, config: SolverConfig, quantity: str, ell,
                k_grid: Iterable[int], trials: int, x0=None, z0=None) -> RunSummary:
    if np.isscalar(trials) and trials < 2:
        raise ValueError("monte_carlo needs at least two trials")
    return collect(problem, config, [(quantity, ell)], k_grid, trials, x0, z0).summary(0)


@dataclass(frozen=True)
class ExpectationCheck:
    quantity: str
    ell: int | None
    ks: np.ndarray
    predicted: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    n_se: float
    reran: bool

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.mean - self.predicted) / self.stderr

    @property
    def passed(self) -> bool:
        return bool(np.all(within_se(self.mean, self.stderr, self.predicted, self.n_se)))


def within_se(mean, stderr, predicted, n_se: float) -> np.ndarray:
    """``|mean - predicted| <= n_se * stderr``, plus a rounding-level floor so
    deterministic points (zero spread, e.g. ``k = 0``) compare exactly."""
    mean, stderr, predicted = map(np.asarray, (mean, stderr, predicted))
    floor = 1e-10 * np.maximum(1.0, np.abs(predicted))
    return np.abs(mean - predicted) <= n_se * np.nan_to_num(stderr) + floor


def check_expectation(problem: LsqProblem, config: SolverConfig, quantity: str, ell,
                      k_grid: Sequence[int], trials: int, predict: Callable[[int], float],
                      n_se: float = 4.0, x0=None, z0=None) -> ExpectationCheck:
    """Compare Monte Carlo means with ``predict(k)``.

    A failing comparison is rerun once on 4x as many fresh trials (ids
    following the first batch); the rerun result is final.
    """
    ell = _resolve_ell(problem, ell)
    ks = np.array(sorted(set(int(k) for k in k_grid)))
    predicted = np.array([predict(int(k)) for k in ks])

    def attempt(ids):
        return collect(problem, config, [(quantity, ell)], ks, ids, x0, z0).summary(0)

    s = attempt(range(trials))
    reran = False
    if not np.all(within_se(s.mean, s.stderr, predicted, n_se)):
        reran = True
        s = attempt(range(trials, 5 * trials))
    return ExpectationCheck(quantity=quantity, ell=ell, ks=ks, predicted=predicted,
                            mean=s.mean, stderr=s.stderr, trials=int(s.count.min()),
                            n_se=n_se, reran=reran)


def default_k_grid(max_iters: int, trace_every: int) -> list[int]:
    ks = list(range(0, max_iters + 1, trace_every))
    if ks[-1] != max_iters:
        ks.append(max_iters)
    return ks
