"""Command-line entry point: run registered problems and write CSV/JSON output.

Example::

    python -m switchocp run example1_alt --out runs/ex1 --emit-trajectory
    python -m switchocp run example2 --on-indefinite continue --max-iters 100
    python -m switchocp run example1 --bench-scaling 200,400,800,1600 --out runs/bench
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kkt_oracle
from .problems import REGISTRY, get_problem
from .riccati import backward_pass, forward_pass
from .solver import ON_INDEFINITE, Solution, SolverConfig, solve
from .transcription import Iterate, build_grid, linearize

log = logging.getLogger("switchocp")

SCHEMA_VERSION = 1
ORACLE_MAX_N = 64
DENSE_BENCH_MAX_N = 400


@dataclass
class RunConfig:
    """Everything one ``run`` invocation needs; ``None`` keeps problem defaults."""

    problem: str = "example1"
    N: int | None = None
    tol: float = 1e-8
    max_iters: int = 200
    gamma: float = 0.995
    t_init: list[float] | None = None
    bounds: list[list[float]] | None = None
    on_indefinite: str = "abort"
    out: str = "out"
    oracle_check: bool = False
    bench_scaling: list[int] | None = None
    bench_reps: int = 100
    emit_trajectory: bool = False
    verbose: bool = False

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        """Read a JSON config and apply non-``None`` overrides on top."""
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def validate(self) -> None:
        if self.problem not in REGISTRY:
            raise ValueError(f"unknown problem {self.problem!r}; known: {sorted(REGISTRY)}")
        if self.on_indefinite not in ON_INDEFINITE:
            raise ValueError(f"on_indefinite must be one of {ON_INDEFINITE}")
        if self.bench_reps < 1:
            raise ValueError("bench_reps must be positive")
        if self.bench_scaling is not None and min(self.bench_scaling) < 1:
            raise ValueError("bench N values must be positive")

    def solver_config(self) -> SolverConfig:
        bounds = [tuple(b) for b in self.bounds] if self.bounds is not None else None
        return SolverConfig(tol=self.tol, max_iters=self.max_iters, gamma=self.gamma,
                            switch_bounds=bounds, on_indefinite=self.on_indefinite, verbose=self.verbose)


def _flat(d) -> np.ndarray:
    return np.concatenate([np.ravel(getattr(d, n)) for n in ("x", "u", "lam", "xs", "us", "lams", "ts")])


def _oracle_callback(k, sd, rf, d):
    """Max-norm deviation of the Riccati direction from the dense solve."""
    dense = _flat(kkt_oracle.solve_dense(kkt_oracle.assemble(sd)))
    return {"oracle_dev": float(np.max(np.abs(_flat(d) - dense)) / max(1.0, float(np.max(np.abs(dense)))))}


def trajectory_rows(sol: Solution, sigma: Sequence[int]) -> tuple[list[str], list[list]]:
    """Node-by-node table in time order; switch nodes are tagged ``switch``.

    ``mode`` is the subsystem active on the segment that starts at the node.
    """
    it, grid = sol.iterate, sol.grid
    nx, nu = it.x.shape[1], it.u.shape[1]
    header = ["t", "kind", "index", "mode"] + [f"x{i + 1}" for i in range(nx)] + [f"u{i + 1}" for i in range(nu)]
    offsets = grid.effective_offsets(it.ts)
    phase = list(grid.stage_phase) + [grid.n_switches]
    sw = grid.switch_of_stage
    rows = []
    for i in range(grid.N + 1):
        u = [repr(float(v)) for v in it.u[i]] if i < grid.N else [""] * nu
        rows.append([repr(grid.t0 + i * grid.dtau), "stage", i, sigma[phase[i]]]
                    + [repr(float(v)) for v in it.x[i]] + u)
        if i < grid.N and sw[i] >= 0:
            j = int(sw[i])
            rows.append([repr(float(grid.t0 + i * grid.dtau + offsets[j])), "switch", j, sigma[j + 1]]
                        + [repr(float(v)) for v in it.xs[j]] + [repr(float(v)) for v in it.us[j]])
    return header, rows


def summary(cfg: RunConfig, sol: Solution, wall_s: float) -> dict:
    recs = sol.log.records
    return {
        "schema_version": SCHEMA_VERSION,
        "problem": cfg.problem,
        "status": sol.status.value,
        "detail": sol.detail,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "opt_error": sol.opt_error,
        "t_s": [float(t) for t in sol.iterate.ts],
        "i_s": [int(i) for i in sol.grid.stages],
        "indefinite_iterations": sol.log.n_indefinite,
        "timings": {
            "wall_s": wall_s,
            "per_iteration_ms": 1e3 * wall_s / max(1, len(recs)),
            "median_backward_ns": statistics.median(r.t_backward_ns for r in recs) if recs else None,
            "median_forward_ns": statistics.median(r.t_forward_ns for r in recs) if recs else None,
        },
        "config": dataclasses.asdict(cfg),
    }


def bench_scaling(problem: str, Ns: Sequence[int], reps: int = 100,
                  dense_max_N: int = DENSE_BENCH_MAX_N) -> tuple[list[dict], float]:
    """Median backward+forward time per ``N`` and the fitted log-log slope.

    The Newton system is formed once per ``N`` at the default initial guess;
    only the two passes are timed. A dense-solve timing is added for
    ``N <= dense_max_N`` as a contrast.
    """
    table = []
    for N in Ns:
        spec, t_init = get_problem(problem, N=N)
        it = Iterate.initial(spec, t_init)
        sd = linearize(spec, build_grid(spec, t_init), it)
        times = []
        for _ in range(reps):
            t0 = time.perf_counter_ns()
            forward_pass(sd, backward_pass(sd, check=False))
            times.append(time.perf_counter_ns() - t0)
        row = {"N": N, "median_pass_ns": int(statistics.median(times)), "reps": reps, "dense_ns": ""}
        if N <= dense_max_N:
            dense = []
            for _ in range(max(1, min(reps, 5))):
                t0 = time.perf_counter_ns()
                kkt_oracle.solve_dense(kkt_oracle.assemble(sd))
                dense.append(time.perf_counter_ns() - t0)
            row["dense_ns"] = int(statistics.median(dense))
        table.append(row)
    slope = float("nan")
    if len(table) > 1:
        slope = float(np.polyfit(np.log([r["N"] for r in table]),
                                 np.log([r["median_pass_ns"] for r in table]), 1)[0])
    return table, slope


def write_scaling(path, table, slope) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "median_pass_ns", "reps", "dense_ns", "fitted_slope"])
        for r in table:
            w.writerow([r["N"], r["median_pass_ns"], r["reps"], r["dense_ns"], repr(slope)])


def run(cfg: RunConfig) -> int:
    """Execute one configured run; returns the process exit status."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.bench_scaling:
        table, slope = bench_scaling(cfg.problem, cfg.bench_scaling, cfg.bench_reps)
        write_scaling(out / "scaling.csv", table, slope)
        for r in table:
            print(f"N={r['N']:5d}  median pass {r['median_pass_ns'] / 1e6:8.3f} ms")
        print(f"fitted slope {slope:.3f}")
        return 0

    spec, t_default = get_problem(cfg.problem, N=cfg.N)
    if cfg.oracle_check and spec.N > ORACLE_MAX_N:
        raise ValueError(f"oracle check needs N <= {ORACLE_MAX_N} (got {spec.N})")
    t_init = cfg.t_init if cfg.t_init is not None else t_default
    guess = Iterate.initial(spec, t_init)
    t0 = time.perf_counter()
    sol = solve(spec, guess, cfg.solver_config(), callback=_oracle_callback if cfg.oracle_check else None)
    wall = time.perf_counter() - t0

    sol.log.to_csv(out / "convergence.csv")
    if cfg.emit_trajectory:
        header, rows = trajectory_rows(sol, spec.sigma)
        with open(out / "trajectory.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    info = summary(cfg, sol, wall)
    with open(out / "summary.json", "w") as fh:
        json.dump(info, fh, indent=2)
    print(f"{cfg.problem}: {sol.status.value} after {sol.iterations} iterations, "
          f"opt error {sol.opt_error:.3e}, t_s = {np.array2string(sol.iterate.ts, precision=6)}")
    if sol.detail:
        print(f"  {sol.detail}")
    return 0 if sol.converged else 1


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _bounds(text: str) -> list[list[float]]:
    """``"lo:hi,lo:hi"`` -> ``[[lo, hi], [lo, hi]]``."""
    return [[float(a) for a in pair.split(":")] for pair in text.split(",") if pair.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchocp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="solve a registered problem")
    p.add_argument("name", nargs="?", help="registered problem name (same as --problem)")
    p.add_argument("--problem", help=f"one of {', '.join(sorted(REGISTRY))}")
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--N", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--t-init", type=_floats, help="comma separated switching-time guess")
    p.add_argument("--bounds", type=_bounds, help="per-switch bounds as lo:hi,lo:hi")
    p.add_argument("--on-indefinite", choices=ON_INDEFINITE)
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--oracle-check", action="store_true", default=None,
                   help=f"compare every direction with the dense solve (N <= {ORACLE_MAX_N})")
    p.add_argument("--bench-scaling", type=_ints, help="comma separated N list; writes scaling.csv")
    p.add_argument("--bench-reps", type=int)
    p.add_argument("--emit-trajectory", action="store_true", default=None)
    p.add_argument("-v", "--verbose", action="store_true", default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.name and args.problem and args.name != args.problem:
        raise ValueError("problem given twice with different values")
    overrides = {
        "problem": args.problem or args.name, "N": args.N, "tol": args.tol,
        "max_iters": args.max_iters, "gamma": args.gamma, "t_init": args.t_init,
        "bounds": args.bounds, "on_indefinite": args.on_indefinite, "out": args.out,
        "oracle_check": args.oracle_check, "bench_scaling": args.bench_scaling,
        "bench_reps": args.bench_reps, "emit_trajectory": args.emit_trajectory, "verbose": args.verbose,
    }
    if args.config:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s")
        return run(cfg)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
