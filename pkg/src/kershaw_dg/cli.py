"""Command line front end: benchmark runs, convergence sweeps and moment checks.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Numbers in every CSV are written with 17 significant digits so that reruns
can be compared byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .benchmarks import add_orders, build_problem, error_norms, limiter_reconstruction
from .moments import NotRealizable, bounds_arrays, is_realizable, kershaw_closure
from .solver import SolverConfig, run

log = logging.getLogger("kershaw_dg")

PROBLEMS = ("manufactured", "plane-source", "source-beam")
DEFAULT_NZ = {"manufactured": (10, 20, 40, 80, 160), "plane-source": (100,), "source-beam": (102,)}
LIMITER_TEST_NZ = (10, 20, 40, 80, 160)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "plane-source"
    N: int = 1
    k: int = 4
    nz: tuple = ()
    time_order: Optional[int] = None
    tvb_M: Optional[float] = None  # None: the problem's default
    cfl_safety: float = 0.95
    tf: Optional[float] = None
    characteristic: bool = True
    psd_tol: float = 1e-10
    gamma: float = 1e-3
    seed: int = 0
    plots: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}, got {self.problem!r}")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if any(n < 1 for n in self.nz):
            raise ConfigError("nz must be at least 1")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.time_order is not None and self.time_order not in (1, 2, 3, 4):
            raise ConfigError("time_order must be 1, 2, 3 or 4")
        if self.tf is not None and self.tf < 0:
            raise ConfigError("tf must be nonnegative")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.problem == "source-beam" and any(n % 6 for n in self.nz):
            raise ConfigError("source-beam needs nz divisible by 6")

    def nz_list(self, fallback) -> tuple:
        return tuple(sorted(self.nz)) if self.nz else tuple(fallback)

    def solver_config(self, problem_default_M: float) -> SolverConfig:
        M = problem_default_M if self.tvb_M is None else self.tvb_M
        return SolverConfig(k=self.k, time_order=self.time_order, tvb_M=M, cfl_safety=self.cfl_safety,
                            characteristic=self.characteristic, psd_tol=self.psd_tol)


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    if text.lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return float(text)


def _parse_nz(text: str) -> tuple:
    return tuple(int(p) for p in text.replace(" ", "").split(",") if p)


PARSERS = {
    "problem": str, "N": int, "k": int, "nz": _parse_nz, "time_order": int,
    "tvb_M": _parse_float, "cfl_safety": float, "tf": float, "characteristic": _parse_bool,
    "psd_tol": float, "gamma": float, "seed": int, "plots": _parse_bool,
}


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r} (known: {', '.join(PARSERS)})")
        if value.lower() in ("", "default", "none") and key in ("time_order", "tvb_M", "tf"):
            values[key] = None
            continue
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


# --- CSV helpers ------------------------------------------------------------------

def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def resolve_threads(arg: Optional[int]) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("KERSHAW_THREADS", "")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"KERSHAW_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("thread count must be at least 1")
    return n


def _fan_out(fn, jobs, threads: int) -> list:
    """Map ``fn`` over ``jobs``; results come back in job order whatever the worker count."""
    if threads == 1 or len(jobs) < 2:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


# --- subcommands --------------------------------------------------------------------

def _problem_and_solver(cfg: RunConfig, nz: int):
    problem = build_problem(cfg.problem, nz, cfg.N, cfg.k)
    return problem, cfg.solver_config(problem.tvb_M)


def cmd_run(cfg: RunConfig, out: Path) -> int:
    nzs = cfg.nz_list(DEFAULT_NZ[cfg.problem][-1:])
    if len(nzs) != 1:
        raise ConfigError("run needs a single nz")
    problem, scfg = _problem_and_solver(cfg, nzs[0])
    result = run(problem, scfg, tf=cfg.tf)
    out.mkdir(parents=True, exist_ok=True)
    means = result.U[:, 0, :]
    N = problem.N
    write_csv(out / "solution.csv", ["z"] + [f"u{i}" for i in range(N + 1)],
              ([z, *m] for z, m in zip(problem.grid.centers, means)))
    write_csv(out / "diagnostics.csv", ["step", "t", "dt", "mass", "min_realizability_margin"],
              ([s.step, s.t, s.dt, s.mass, s.min_realizability_margin] for s in result.steps))
    write_csv(out / "theta.csv", ["t", "z", "theta"], result.theta_records)
    if result.bypass_events:
        log.info("realizability limiter bypassed in %d sign-indefinite cell stages", result.bypass_events)
    if cfg.plots:
        from .plotting import plot_solution, plot_theta

        label = f"{problem.name}, N={N}, k={cfg.k}, nz={nzs[0]}, t={result.t:.4g}"
        plot_solution(problem.grid.centers, means, out / "solution.png", label)
        plot_theta(result.theta_records, out / "theta.png", label)
    print(f"{problem.name}: t={result.t:.6g} after {len(result.steps)} steps, "
          f"mass {result.initial_mass:.12g} -> {result.steps[-1].mass if result.steps else result.initial_mass:.12g}")
    return 0


def _converge_job(cfg_dict: dict, nz: int):
    cfg = RunConfig(**cfg_dict)
    problem, scfg = _problem_and_solver(cfg, nz)
    if problem.exact_u0 is None:
        raise ConfigError(f"problem {cfg.problem!r} has no exact solution to converge against")
    t0 = time.perf_counter()
    result = run(problem, scfg, tf=cfg.tf)
    elapsed = time.perf_counter() - t0
    err = error_norms(result.U, lambda z: problem.exact_u0(result.t, z), problem.grid)
    return nz, problem.grid.dz, err, elapsed, []


def _limiter_job(cfg_dict: dict, nz: int):
    cfg = RunConfig(**cfg_dict)
    t0 = time.perf_counter()
    res = limiter_reconstruction(cfg.gamma, nz, cfg.k, cfg.N)
    return nz, 2.0 / nz, res.errors, time.perf_counter() - t0, [res.theta_max]


def _write_table(out: Path, rows, extra_header=(), plots=True, order=None, title=""):
    """rows: (nz, dz, ErrorReport, seconds, extra columns) sorted by nz."""
    reports = add_orders([r[2] for r in rows], [r[1] for r in rows])
    header = ["nz", "L1", "order_L1", "Linf", "order_Linf", *extra_header]
    table = [[r[0], rep.L1, rep.order_L1, rep.Linf, rep.order_Linf, *r[4]] for r, rep in zip(rows, reports)]
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "convergence.csv", header, table)
    # wall-clock times are informational and kept out of the deterministic table
    write_csv(out / "timing.csv", ["nz", "seconds"], ([r[0], r[3]] for r in rows))
    if plots:
        from .plotting import plot_convergence

        plot_convergence([r[0] for r in rows], [r.L1 for r in reports], [r.Linf for r in reports],
                         out / "convergence.png", order=order, title=title)
    for row in table:
        print(",".join(fmt(v) for v in row))
    return table


def cmd_converge(cfg: RunConfig, out: Path, threads: int) -> int:
    nzs = cfg.nz_list(DEFAULT_NZ["manufactured"])
    if len(nzs) < 2:
        log.warning("a single resolution gives no observed order")
    rows = _fan_out(_converge_job, [(asdict(cfg), nz) for nz in nzs], threads)
    _write_table(out, rows, plots=cfg.plots, order=min(cfg.k, 4),
                 title=f"{cfg.problem}, N={cfg.N}, k={cfg.k}")
    return 0


def cmd_limiter_test(cfg: RunConfig, out: Path, threads: int) -> int:
    nzs = cfg.nz_list(LIMITER_TEST_NZ)
    rows = _fan_out(_limiter_job, [(asdict(cfg), nz) for nz in nzs], threads)
    _write_table(out, rows, extra_header=("theta_max",), plots=cfg.plots, order=cfg.k,
                 title=f"limited reconstruction, gamma={cfg.gamma:g}, N={cfg.N}, k={cfg.k}")
    return 0


def check_rows(lines) -> list:
    """Parse moment vectors (one per line) and report realizability, bounds and closure."""
    out = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            u = np.array([float(p) for p in line.split(",")])
        except ValueError:
            raise ConfigError(f"line {lineno}: not a comma-separated list of numbers: {raw.strip()!r}") from None
        if u.size < 2 or not np.all(np.isfinite(u)):
            raise ConfigError(f"line {lineno}: need at least two finite moments")
        if is_realizable(u):
            lower, upper = bounds_arrays(u)
            out.append([lineno, "yes", float(lower), float(upper), kershaw_closure(u)])
        else:
            out.append([lineno, "no", None, None, None])
    return out


def cmd_check(path: str, out: Optional[Path]) -> int:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    rows = check_rows(lines)
    header = ["row", "realizable", "flow", "fup", "closure"]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[0], r[1], *(fmt(v) for v in r[2:])])
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "check.csv", header, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kershaw-dg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("run", "integrate one benchmark and write its final state"),
                           ("converge", "convergence sweep of the manufactured solution"),
                           ("limiter-test", "realizability-limited reconstruction study")]:
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--threads", type=int, help="worker processes (default: $KERSHAW_THREADS or 1)")
        s.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    c = sub.add_parser("check", help="realizability, bounds and closure for moment vectors in a CSV file")
    c.add_argument("file")
    c.add_argument("--out", help="also write check.csv to this directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "check":
            return cmd_check(args.file, Path(args.out) if args.out else None)
        cfg = load_config(args.config)
        if args.no_plots:
            cfg.plots = False
        threads = resolve_threads(args.threads)
        out = Path(args.out)
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "converge":
            return cmd_converge(cfg, out, threads)
        return cmd_limiter_test(cfg, out, threads)
    except NotRealizable as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:  # ConfigError and invalid problem/solver settings
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
