"""Command line entry point: ``regslab {gen,run,verify,plot}``.

Every subcommand except ``plot`` reads one JSON experiment config::

    {
      "experiment_id": "fig1",
      "matrix": {"kind": "scaled_paper", "m": 120, "n": 100, "seed": 42,
                 "shift": 20.0, "perturb": 0.01},
      "rhs_mode": "nullspace_inconsistent",
      "rhs_seed": 7,
      "solver": {"mode": "RGS", "max_iters": 20000, "master_seed": 42,
                 "trace_every": 500, "refresh_every": 1000},
      "quantities": [{"quantity": "direction_projection", "ell": "r"},
                     {"quantity": "rayleigh_ratio"}],
      "k_grid": null,
      "trials": 16,
      "output_dir": "out/fig1"
    }

``ell`` may be an integer or ``"r"`` (the numerical rank). A null
``k_grid`` means every ``trace_every`` steps plus the last step. A relative
``output_dir`` is resolved against the config file's directory. Unknown
keys are rejected.

Exit codes: 0 success, 1 usage or config error, 2 verification failure,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .diagnostics import QUANTITIES, collect, default_k_grid
from .linalg import LsqProblem, svd
from .solvers import SolverConfig
from .testgen import RHS_MODES, MatrixSpec, build_matrix, make_rhs
from .verification import run_suite

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3

CSV_HEADER = ["experiment_id", "method", "trial", "k", "quantity", "ell", "value", "status"]
MATRIX_FILE = "matrix.txt"
RHS_FILE = "rhs.txt"
META_FILE = "problem.json"
TRACE_FILE = "trace.csv"
REPORT_FILE = "verify_report.txt"


class ConfigError(ValueError):
    pass


def _take(d: dict, allowed: set[str], required: set[str], where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    return d


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    matrix: MatrixSpec
    rhs_mode: str
    rhs_seed: int
    solver: SolverConfig
    quantities: tuple[tuple[str, int | str | None], ...]
    k_grid: tuple[int, ...] | None
    trials: int
    output_dir: Path
    verify_trials: int | None = None

    @classmethod
    def from_dict(cls, raw: dict, base: Path = Path(".")) -> "ExperimentConfig":
        top = {"experiment_id", "matrix", "rhs_mode", "rhs_seed", "solver", "quantities",
               "k_grid", "trials", "output_dir", "verify_trials"}
        raw = _take(raw, top, {"matrix", "solver", "output_dir"}, "config")
        mraw = _take(raw["matrix"], {"kind", "m", "n", "seed", "shift", "perturb", "spectrum"},
                     {"kind", "m", "n"}, "matrix")
        sraw = _take(raw["solver"], {"mode", "max_iters", "master_seed", "trace_every", "refresh_every"},
                     {"max_iters"}, "solver")
        try:
            matrix = MatrixSpec(**mraw)
            solver = SolverConfig(**sraw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        rhs_mode = raw.get("rhs_mode", "consistent")
        if rhs_mode not in RHS_MODES:
            raise ConfigError(f"rhs_mode must be one of {RHS_MODES}")
        quantities = []
        for i, q in enumerate(raw.get("quantities", [])):
            q = _take(q, {"quantity", "ell"}, {"quantity"}, f"quantities[{i}]")
            if q["quantity"] not in QUANTITIES:
                raise ConfigError(f"unknown quantity {q['quantity']!r}")
            ell = q.get("ell")
            if not (ell is None or ell == "r" or (isinstance(ell, int) and ell >= 1)):
                raise ConfigError(f"quantities[{i}].ell must be a positive integer or 'r'")
            quantities.append((q["quantity"], ell))
        trials = raw.get("trials", 10)
        if not isinstance(trials, int) or trials < 1:
            raise ConfigError("trials must be a positive integer")
        k_grid = raw.get("k_grid")
        if k_grid is not None:
            if not all(isinstance(k, int) and 0 <= k for k in k_grid):
                raise ConfigError("k_grid entries must be nonnegative integers")
            k_grid = tuple(k_grid)
        out = Path(raw["output_dir"])
        return cls(
            experiment_id=str(raw.get("experiment_id", "experiment")),
            matrix=matrix, rhs_mode=rhs_mode, rhs_seed=int(raw.get("rhs_seed", 0)),
            solver=solver, quantities=tuple(quantities), k_grid=k_grid, trials=trials,
            output_dir=out if out.is_absolute() else base / out,
            verify_trials=raw.get("verify_trials"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(raw, path.parent)

    def grid(self) -> list[int]:
        if self.k_grid is not None:
            return sorted(set(self.k_grid))
        return default_k_grid(self.solver.max_iters, self.solver.trace_every)


def full_scale(spec: MatrixSpec) -> MatrixSpec:
    """The full-size counterpart of a desk-scale spec."""
    if spec.kind in ("paper_a1", "paper_a2"):
        return MatrixSpec.full_size(spec.kind, spec.seed)
    if spec.kind == "scaled_paper":
        return MatrixSpec.full_size("paper_a1" if spec.m >= spec.n else "paper_a2", spec.seed)
    raise ConfigError(f"--full applies to the near-singular matrix kinds, not {spec.kind!r}")


def _resolve_spec(cfg: ExperimentConfig, full: bool) -> MatrixSpec:
    if full:
        return full_scale(cfg.matrix)
    if cfg.matrix.kind in ("paper_a1", "paper_a2"):
        raise ConfigError(f"{cfg.matrix.kind} is full scale; pass --full to build it")
    return cfg.matrix


# -- text formats -----------------------------------------------------------

def fmt(v: float) -> str:
    return f"{v:.16e}"


def write_matrix(path: Path, A: np.ndarray) -> None:
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(fmt(v) for v in row) for row in A]
    path.write_text("\n".join(lines) + "\n")


def read_matrix(path: Path) -> np.ndarray:
    lines = path.read_text().splitlines()
    rows, cols = (int(t) for t in lines[0].split())
    A = np.array([[float(t) for t in line.split()] for line in lines[1:1 + rows]])
    if A.shape != (rows, cols):
        raise ValueError(f"{path}: header says {rows}x{cols}, body is {A.shape}")
    return A


def write_vector(path: Path, x: np.ndarray) -> None:
    path.write_text("\n".join([str(x.size)] + [fmt(v) for v in x]) + "\n")


def read_vector(path: Path) -> np.ndarray:
    lines = path.read_text().splitlines()
    n = int(lines[0])
    x = np.array([float(t) for t in lines[1:1 + n]])
    if x.size != n:
        raise ValueError(f"{path}: expected {n} entries, got {x.size}")
    return x


def vector_digest(x: np.ndarray) -> str:
    return hashlib.sha256("\n".join(fmt(v) for v in x).encode()).hexdigest()


def build_problem(cfg: ExperimentConfig, full: bool = False) -> LsqProblem:
    spec = _resolve_spec(cfg, full)
    A = build_matrix(spec)
    f = svd(A)
    b, _ = make_rhs(A, cfg.rhs_seed, cfg.rhs_mode, factorization=f)
    return LsqProblem.from_system(A, b, f)


def load_problem(cfg: ExperimentConfig, full: bool = False) -> LsqProblem:
    """Problem from files written by ``gen``, or built from the config."""
    mpath, bpath = cfg.output_dir / MATRIX_FILE, cfg.output_dir / RHS_FILE
    if mpath.exists() and bpath.exists():
        return LsqProblem.from_system(read_matrix(mpath), read_vector(bpath))
    return build_problem(cfg, full)


# -- subcommands ------------------------------------------------------------

def cmd_gen(config_path, full: bool = False) -> int:
    cfg = ExperimentConfig.load(config_path)
    problem = build_problem(cfg, full)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / MATRIX_FILE, problem.A)
    write_vector(out / RHS_FILE, problem.b)
    spec = _resolve_spec(cfg, full)
    meta = {
        "experiment_id": cfg.experiment_id,
        "matrix_spec": asdict(spec),
        "rows": problem.m,
        "cols": problem.n,
        "rank": problem.rank,
        "rank_tol": problem.svd.rank_tol,
        "frob_sq": problem.frob_sq,
        "sigma_r": problem.svd.sigma_r,
        "spectrum": [float(s) for s in problem.svd.sigma],
        "rhs_mode": cfg.rhs_mode,
        "rhs_seed": cfg.rhs_seed,
        "x_star_sha256": vector_digest(problem.x_star),
    }
    (out / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {problem.m}x{problem.n} problem (rank {problem.rank}) to {out}")
    return EXIT_OK


def write_trace_csv(path: Path, experiment_id: str, method: str, table) -> int:
    rows = 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in table.records():
            value = fmt(rec.value) if rec.status == "ok" else ""
            ell = "" if rec.ell is None else rec.ell
            w.writerow([experiment_id, method, rec.trial_id, rec.k, rec.quantity, ell, value, rec.status])
            rows += 1
    return rows


def cmd_run(config_path, full: bool = False) -> int:
    cfg = ExperimentConfig.load(config_path)
    if not cfg.quantities:
        raise ConfigError("run needs at least one entry in quantities")
    problem = load_problem(cfg, full)
    start = time.perf_counter()
    table = collect(problem, cfg.solver, cfg.quantities, cfg.grid(), cfg.trials)
    wall = time.perf_counter() - start
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    rows = write_trace_csv(cfg.output_dir / TRACE_FILE, cfg.experiment_id, cfg.solver.mode.value, table)
    print(f"{cfg.experiment_id}: method={cfg.solver.mode.value} trials={cfg.trials} "
          f"seed={cfg.solver.master_seed} failed={int(table.failed.sum())} rows={rows} wall={wall:.2f}s")
    return EXIT_OK


def cmd_verify(config_path, rgs_update=None) -> int:
    """Run the identity suite; ``rgs_update`` replaces the RGS kernel (test hook)."""
    cfg = ExperimentConfig.load(config_path)
    kwargs = {}
    if rgs_update is not None:
        kwargs["rgs_update"] = rgs_update
    if cfg.verify_trials is not None:
        t = int(cfg.verify_trials)
        kwargs.update(rgs_trials=t, regs_trials=2 * t, rk_trials=t)
    report = run_suite(cfg.solver.master_seed, **kwargs)
    text = report.render()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / REPORT_FILE).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_VERIFY


# -- plotting ---------------------------------------------------------------

def read_trace_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ValueError(f"{path}:{n}: expected {len(CSV_HEADER)} fields")
            row = dict(zip(CSV_HEADER, rec))
            row["trial"] = int(row["trial"])
            row["k"] = int(row["k"])
            row["value"] = float(row["value"]) if row["status"] == "ok" else math.nan
            rows.append(row)
    return rows


def series_from_rows(rows: list[dict], quantity: str, ell: str | None, mean: bool):
    picked = [r for r in rows if r["quantity"] == quantity and (ell is None or r["ell"] == ell)]
    if not picked:
        raise ValueError(f"no rows for quantity {quantity!r}")
    by_trial: dict[int, list[tuple[int, float]]] = {}
    for r in picked:
        by_trial.setdefault(r["trial"], []).append((r["k"], r["value"]))
    if not mean:
        return [(f"trial {t}", sorted(pts)) for t, pts in sorted(by_trial.items())]
    acc: dict[int, list[float]] = {}
    for pts in by_trial.values():
        for k, v in pts:
            if not math.isnan(v):
                acc.setdefault(k, []).append(v)
    return [("mean", [(k, math.fsum(vs) / len(vs)) for k, vs in sorted(acc.items())])]


def render_svg(series, title: str, log_y: bool = False, width: int = 640, height: int = 400):
    """Polyline chart; returns (svg text, number of points dropped)."""
    dropped = 0
    cleaned = []
    for label, pts in series:
        keep = []
        for k, v in pts:
            if math.isnan(v) or (log_y and v <= 0):
                dropped += 1
                continue
            keep.append((k, math.log10(v) if log_y else v))
        cleaned.append((label, keep))
    allpts = [p for _, pts in cleaned for p in pts]
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    if allpts:
        x0, x1 = min(p[0] for p in allpts), max(p[0] for p in allpts)
        y0, y1 = min(p[1] for p in allpts), max(p[1] for p in allpts)
    else:
        x0 = x1 = y0 = y1 = 0.0
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(k):
        return left + (k - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{_esc(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in range(5):
        fx = x0 + (x1 - x0) * t / 4
        fy = y0 + (y1 - y0) * t / 4
        ylab = f"{10.0 ** fy:.3g}" if log_y else f"{fy:.4g}"
        out.append(f'<text x="{sx(fx):.2f}" y="{top + ph + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{fx:.6g}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(fy) + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{ylab}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">k</text>')
    for idx, (label, pts) in enumerate(cleaned):
        if not pts:
            continue
        coords = " ".join(f"{sx(k):.2f},{sy(v):.2f}" for k, v in pts)
        color = palette[idx % len(palette)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{coords}">'
                   f'<title>{_esc(label)}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n", dropped


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def cmd_plot(csv_path, quantity: str, output, ell: str | None = None,
             log_y: bool = False, mean: bool = False) -> int:
    rows = read_trace_csv(Path(csv_path))
    series = series_from_rows(rows, quantity, ell, mean)
    title = quantity + (f" (ell={ell})" if ell else "") + (" mean" if mean else "")
    svg, dropped = render_svg(series, title, log_y=log_y)
    if dropped:
        print(f"warning: dropped {dropped} undefined or nonpositive points", file=sys.stderr)
    Path(output).write_text(svg)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regslab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("gen", "build the matrix and right-hand side"),
                           ("run", "run the Monte Carlo experiment and write trace.csv"),
                           ("verify", "run the identity and Monte Carlo check suite")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="experiment config (JSON)")
        if name != "verify":
            sp.add_argument("--full", action="store_true",
                            help="use the full 600x500 / 500x600 matrices")
    sp = sub.add_parser("plot", help="render a trace CSV as SVG")
    sp.add_argument("csv", help="trace CSV written by run")
    sp.add_argument("--quantity", required=True, choices=QUANTITIES)
    sp.add_argument("--ell", default=None, help="singular index column value to select")
    sp.add_argument("--output", required=True, help="SVG file to write")
    sp.add_argument("--log", action="store_true", help="log10 y axis")
    sp.add_argument("--mean", action="store_true", help="plot the trial mean instead of every trial")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "gen":
            return cmd_gen(args.config, args.full)
        if args.command == "run":
            return cmd_run(args.config, args.full)
        if args.command == "verify":
            return cmd_verify(args.config)
        return cmd_plot(args.csv, args.quantity, args.output, args.ell, args.log, args.mean)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command == "plot" else EXIT_RUNTIME
    except (OSError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
