"""Identity and Monte Carlo check suite over a seeded corpus.

The enumeration checks run on small random problems (at most 12 x 8, one
rank-deficient) at random iterates. The Monte Carlo checks run on one
20 x 10 problem. Each check reports its worst deviation and a pass flag.
The whole suite is a deterministic function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import oracle
from .diagnostics import check_expectation, collect, within_se
from .linalg import LsqProblem
from .sampling import RngStream
from .solvers import Mode, SolverConfig, rgs_step
from .testgen import MatrixSpec, build_matrix, make_rhs, random_problem_matrix

STEP_TOL = 1e-10
COMPOSE_TOL = 1e-12
MC_SE = 4.0
BOUND_SLACK = 1.5

# (m, n, rank or None for full)
CORPUS_SHAPES = ((10, 6, None), (12, 8, None), (12, 8, 5), (7, 5, None), (9, 4, None))
STATES_PER_PROBLEM = 20


@dataclass
class CheckResult:
    name: str
    tolerance: float
    max_dev: float = 0.0
    checked: int = 0
    flagged: int = 0
    passed: bool = True
    note: str = ""

    def add(self, dev: float, ok: bool | None = None) -> None:
        self.checked += 1
        self.max_dev = max(self.max_dev, dev)
        if not (dev <= self.tolerance if ok is None else ok):
            self.passed = False

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.note}" if self.note else ""
        return (f"{status} {self.name}: checked={self.checked} flagged={self.flagged} "
                f"max_dev={self.max_dev:.3e} tol={self.tolerance:.1e}{extra}")


@dataclass
class Report:
    seed: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        lines = [f"verification report (seed {self.seed})"]
        lines += [c.line() for c in self.checks]
        lines.append("ALL PASS" if self.passed else "FAILURES PRESENT")
        return "\n".join(lines) + "\n"

    def get(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)


def corpus(seed: int) -> list[LsqProblem]:
    """Five small problems; gaussian-inconsistent right-hand sides."""
    problems = []
    for idx, (m, n, rank) in enumerate(CORPUS_SHAPES):
        s = seed * 1000 + idx
        if rank is None:
            A = build_matrix(MatrixSpec("gaussian", m, n, seed=s))
        else:
            A = random_problem_matrix(s, m, n, rank)
        b, _ = make_rhs(A, s, "gaussian_inconsistent", noise=0.5)
        problems.append(LsqProblem.from_system(A, b))
    return problems


def corpus_states(problem: LsqProblem, seed: int, idx: int):
    """Random (x, z) pairs; ``z`` is drawn inside the row space."""
    rng = RngStream(seed, 500 + idx)
    for _ in range(STATES_PER_PROBLEM):
        x = 2.0 * rng.normals(problem.n)
        z = problem.svd.Vr @ rng.normals(problem.rank)
        yield x, z


def identity_checks(seed: int, rgs_update: Callable = rgs_step) -> list[CheckResult]:
    t1 = CheckResult("rgs_projection_step", STEP_TOL)
    t2 = CheckResult("rgs_sq_error_step", STEP_TOL)
    t3 = CheckResult("rgs_fluctuation_step", STEP_TOL)
    t6 = CheckResult("regs_projection_step", STEP_TOL)
    t7 = CheckResult("regs_step_bound", STEP_TOL)
    comp = CheckResult("closed_form_composition", COMPOSE_TOL)
    for idx, P in enumerate(corpus(seed)):
        for x, z in corpus_states(P, seed, idx):
            scale_img = float(np.linalg.norm(P.A @ x - P.Ax_star))
            for ell in range(1, P.rank + 1):
                t1.add(oracle.enum_rgs_projection_step(P, x, ell, rgs_update).rel_dev(scale_img))
            t2.add(oracle.enum_rgs_sq_error_step(P, x, rgs_update).rel_dev())
            try:
                t3.add(oracle.enum_rgs_fluctuation_step(P, x, rgs_update).rel_dev())
            except oracle.DegenerateInstanceError:
                t3.flagged += 1
            # one RGS step taken by a fixed column gives the x_k paired with z
            j = int(np.argmax(P.col_sq))
            x_next = rgs_update(oracle.state_at(P, x), P.A, P.b, j).x
            scale_z = float(np.linalg.norm(z - P.x_star) + np.linalg.norm(x_next - P.x_star))
            for ell in range(1, P.rank + 1):
                t6.add(oracle.enum_regs_projection_step(P, x_next, z, ell).rel_dev(scale_z))
            exact = oracle.enum_regs_sq_error_step(P, x, z, rgs_update)
            bound = oracle.bound_regs_step(P, z, x, 1)
            t7.add(max(0.0, exact - bound) / bound, ok=exact <= bound * (1 + STEP_TOL))
        x0, z0 = np.zeros(P.n), np.zeros(P.n)
        for ell in (1, P.rank):
            for k in (1, 7, 50):
                a = oracle.closed_form_rgs_projection(P, x0, ell, k).value
                comp.add(oracle.rel_deviation(oracle.compose_rgs_projection(P, x0, ell, k), a, 1.0))
                a = oracle.closed_form_regs_projection(P, x0, z0, ell, k).value
                comp.add(oracle.rel_deviation(oracle.compose_regs_projection(P, x0, z0, ell, k), a, 1.0))
    return [t1, t2, t3, t6, t7, comp]


def mc_problem(seed: int, rhs_mode: str = "gaussian_inconsistent") -> LsqProblem:
    A = build_matrix(MatrixSpec("gaussian", 20, 10, seed=seed))
    b, _ = make_rhs(A, seed, rhs_mode, noise=0.5)
    return LsqProblem.from_system(A, b)


def expectation_checks(seed: int, rgs_trials: int = 10_000, regs_trials: int = 20_000,
                       rk_trials: int = 10_000, ks=(10, 50, 100),
                       names: Sequence[str] | None = None) -> list[CheckResult]:
    """Monte Carlo means against closed forms; ``names`` selects a subset."""
    P = mc_problem(seed)
    Pc = mc_problem(seed, "consistent")
    x0 = z0 = np.zeros(P.n)
    ells = (1, P.rank)
    specs = [
        ("rgs_projection_mc", Mode.RGS, P, "projection_signed", rgs_trials,
         lambda ell, k: oracle.closed_form_rgs_projection(P, x0, ell, k).value),
        ("regs_projection_mc", Mode.REGS, P, "projection_signed_right", regs_trials,
         lambda ell, k: oracle.closed_form_regs_projection(P, x0, z0, ell, k).value),
        ("regs_A_projection_mc", Mode.REGS, P, "projection_signed", regs_trials,
         lambda ell, k: oracle.closed_form_regs_A_projection(P, x0, z0, ell, k).value),
        ("rk_projection_mc", Mode.RK, Pc, "projection_signed_right", rk_trials,
         lambda ell, k: oracle.closed_form_rk_projection(Pc, x0, ell, k).value),
    ]
    out = []
    for name, mode, prob, quantity, trials, predict in specs:
        if names is not None and name not in names:
            continue
        res = CheckResult(name, MC_SE)
        cfg = SolverConfig(max_iters=max(ks), master_seed=seed, mode=mode)
        for ell in ells:
            chk = check_expectation(prob, cfg, quantity, ell, ks, trials,
                                    lambda k, ell=ell: predict(ell, k), n_se=MC_SE, x0=x0, z0=z0)
            oks = within_se(chk.mean, chk.stderr, chk.predicted, chk.n_se)
            for z, ok in zip(chk.z_scores, oks):
                res.add(float(np.nan_to_num(z)), ok=bool(ok))
            if chk.reran:
                res.note = "(rerun with 4x trials)"
        out.append(res)
    return out


def bound_checks(seed: int, trials: int = 200, kmax: int = 200) -> list[CheckResult]:
    P = mc_problem(seed)
    x0 = z0 = np.zeros(P.n)
    ks = list(range(kmax + 1))
    out = []
    for name, mode, quantity, bound in (
        ("rgs_bound", Mode.RGS, "sq_error", lambda k: oracle.bound_rgs(P, x0, k)),
        ("regs_bound", Mode.REGS, "sq_error_solution", lambda k: oracle.bound_regs(P, x0, z0, k)),
    ):
        res = CheckResult(name, BOUND_SLACK)
        cfg = SolverConfig(max_iters=kmax, master_seed=seed, mode=mode)
        s = collect(P, cfg, [(quantity, None)], ks, trials, x0, z0).summary(0)
        for k, mean in zip(s.ks, s.mean):
            b = bound(int(k))
            res.add(mean / b, ok=mean <= BOUND_SLACK * b)
        out.append(res)
    return out


def run_suite(seed: int, rgs_update: Callable = rgs_step, monte_carlo: bool = True,
              rgs_trials: int = 10_000, regs_trials: int = 20_000, rk_trials: int = 10_000) -> Report:
    report = Report(seed=seed)
    report.checks += identity_checks(seed, rgs_update)
    if monte_carlo:
        report.checks += expectation_checks(seed, rgs_trials, regs_trials, rk_trials)
        report.checks += bound_checks(seed)
    return report
