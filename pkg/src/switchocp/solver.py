"""Newton iteration with fraction-to-boundary step selection on switching times."""
from __future__ import annotations

import csv
import enum
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ProblemSpec
from .riccati import AssumptionViolation, Direction, RiccatiFactors, backward_pass, forward_pass
from .transcription import (GridError, GridLayout, Iterate, StageData, _layout, build_grid,
                            linearize, opt_error)

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    ASSUMPTION_VIOLATED = "AssumptionViolated"
    GRID_COLLISION = "GridCollision"
    DIVERGED = "Diverged"


ON_INDEFINITE = ("abort", "continue")


@dataclass
class SolverConfig:
    """Outer-loop settings.

    Attributes:
        tol: Termination threshold on the optimality error.
        max_iters: Maximum number of Newton iterations.
        gamma: Fraction-to-boundary parameter.
        switch_bounds: Per-switch ``(lo, hi)``; ``None`` uses ``ProblemSpec.bounds()``.
        shift: Levenberg shift added to every input Hessian (0 disables it).
        on_indefinite: ``"abort"`` stops with ``AssumptionViolated`` as soon as a
            backward pass meets a non positive definite ``G`` or ``xi_tilde <= 0``;
            ``"continue"`` takes the (non-descent) Newton step anyway and only
            flags the iteration, which is the plain fraction-to-boundary method.
        verbose: Log one line per iteration.
    """

    tol: float = 1e-8
    max_iters: int = 200
    gamma: float = 0.995
    switch_bounds: Sequence[tuple[float, float]] | None = None
    shift: float = 0.0
    on_indefinite: str = "abort"
    verbose: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.shift < 0:
            raise ValueError("regularization shift must be non-negative")
        if self.on_indefinite not in ON_INDEFINITE:
            raise ValueError(f"on_indefinite must be one of {ON_INDEFINITE}")


@dataclass
class IterationRecord:
    iter: int
    opt_error: float
    alpha: float
    ts: list[float]
    stages: list[int]
    t_backward_ns: int
    t_forward_ns: int
    min_xi_tilde: float = float("nan")
    indefinite: bool = False
    extra: dict = field(default_factory=dict)


@dataclass
class ConvergenceLog:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def errors(self) -> np.ndarray:
        return np.array([r.opt_error for r in self.records])

    def switch_times(self) -> np.ndarray:
        """``(iterations, m)`` array of logged switching times."""
        return np.array([r.ts for r in self.records])

    @property
    def n_indefinite(self) -> int:
        return sum(r.indefinite for r in self.records)

    def columns(self) -> list[str]:
        m = len(self.records[0].ts) if self.records else 0
        extra = list(self.records[0].extra) if self.records else []
        return (["iter", "opt_error", "alpha"] + [f"t_s_{j + 1}" for j in range(m)]
                + [f"is_{j + 1}" for j in range(m)]
                + ["t_backward_ns", "t_forward_ns", "min_xi_tilde", "indefinite"] + extra)

    def rows(self) -> list[list]:
        return [[r.iter, repr(r.opt_error), repr(r.alpha)] + [repr(t) for t in r.ts] + list(r.stages)
                + [r.t_backward_ns, r.t_forward_ns, repr(r.min_xi_tilde), int(r.indefinite)]
                + [repr(v) if isinstance(v, float) else v for v in r.extra.values()]
                for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            w.writerows(self.rows())

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(asdict(r)) + "\n")


@dataclass
class Solution:
    iterate: Iterate
    grid: GridLayout
    status: Status
    opt_error: float
    log: ConvergenceLog
    detail: str = ""
    failed_stage_data: StageData | None = None

    @property
    def iterations(self) -> int:
        return len(self.log)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def fraction_to_boundary(ts, dts, bounds, gamma: float) -> float:
    """Largest ``alpha <= 1`` keeping each ``t`` a ``gamma`` fraction inside its bounds."""
    alpha = 1.0
    for t, dt, (lo, hi) in zip(np.atleast_1d(ts), np.atleast_1d(dts), bounds):
        if dt < 0.0:
            alpha = min(alpha, gamma * (t - lo) / -dt)
        elif dt > 0.0:
            alpha = min(alpha, gamma * (hi - t) / dt)
    return float(alpha)


def ordering_step(ts, dts, gamma: float) -> float:
    """Fraction-to-boundary cap for ``t_{j+1} - t_j > 0``."""
    alpha = 1.0
    ts, dts = np.atleast_1d(ts), np.atleast_1d(dts)
    for j in range(len(ts) - 1):
        gap, dgap = ts[j + 1] - ts[j], dts[j + 1] - dts[j]
        if dgap < 0.0:
            alpha = min(alpha, gamma * gap / -dgap)
    return float(alpha)


def _admissible(ts, bounds) -> bool:
    return (all(lo < t < hi for t, (lo, hi) in zip(ts, bounds))
            and bool(np.all(np.diff(ts) > 0.0)))


def interior_step(ts, dts, bounds, gamma: float) -> float:
    """Fraction-to-boundary step, halved while rounding still puts a ``t`` on a bound.

    Near a bound ``t + gamma * (hi - t)`` can round to ``hi`` itself; the
    returned step always leaves every switching time strictly inside.
    Returns 0 when no representable step does.
    """
    ts, dts = np.atleast_1d(ts), np.atleast_1d(dts)
    alpha = min(fraction_to_boundary(ts, dts, bounds, gamma), ordering_step(ts, dts, gamma))
    while alpha > 0.0 and not _admissible(ts + alpha * dts, bounds):
        alpha = 0.5 * alpha if alpha > 1e-12 else 0.0
    return alpha


def update_iterate(it: Iterate, d: Direction, alpha: float) -> Iterate:
    return Iterate(**{name: getattr(it, name) + alpha * getattr(d, name)
                      for name in ("x", "u", "lam", "xs", "us", "lams", "ts")})


def migrate_switch_stage(grid: GridLayout, it: Iterate) -> GridLayout:
    """Relocate switches after an update; switch-node variables are kept as they are."""
    return _layout(grid.t0, grid.dtau, grid.N, it.ts)


IterationCallback = Callable[[int, StageData, RiccatiFactors, Direction], dict | None]


def solve(spec: ProblemSpec, guess: Iterate, cfg: SolverConfig | None = None,
          callback: IterationCallback | None = None) -> Solution:
    """Run Newton iterations until the optimality error drops below ``cfg.tol``.

    ``callback(k, stage_data, factors, direction)`` is invoked after every
    direction computation; a returned dict is stored with the iteration record.
    """
    cfg = cfg or SolverConfig()
    bounds = list(cfg.switch_bounds) if cfg.switch_bounds is not None else spec.bounds()
    for t, (lo, hi) in zip(guess.ts, bounds):
        if not lo < t < hi:
            raise ValueError(f"initial switching time {t} not strictly inside [{lo}, {hi}]")
    it = guess.copy()
    grid = build_grid(spec, it.ts)
    history = ConvergenceLog()
    check = cfg.on_indefinite == "abort"

    def finish(status, err, detail="", sd=None):
        if cfg.verbose:
            log.info("%s after %d iterations, opt error %.3e %s", status.value, len(history), err, detail)
        return Solution(iterate=it, grid=grid, status=status, opt_error=err, log=history,
                        detail=detail, failed_stage_data=sd)

    for k in range(cfg.max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            sd = linearize(spec, grid, it)
        err = opt_error(sd.res)
        if not np.isfinite(err):
            return finish(Status.DIVERGED, err, f"iteration {k}: non-finite optimality error")
        if err <= cfg.tol:
            return finish(Status.CONVERGED, err)
        if k == cfg.max_iters:
            return finish(Status.MAX_ITERS, err)
        t0 = time.perf_counter_ns()
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                rf = backward_pass(sd, cfg.shift, check)
                t1 = time.perf_counter_ns()
                d = forward_pass(sd, rf)
                t2 = time.perf_counter_ns()
        except AssumptionViolation as exc:
            return finish(Status.ASSUMPTION_VIOLATED, err, f"iteration {k}: {exc}", sd)
        if not np.all(np.isfinite(d.ts)) or not np.all(np.isfinite(d.x)):
            return finish(Status.DIVERGED, err, f"iteration {k}: non-finite Newton direction", sd)
        alpha = interior_step(it.ts, d.ts, bounds, cfg.gamma)
        extra = callback(k, sd, rf, d) if callback is not None else None
        history.records.append(IterationRecord(
            iter=k, opt_error=err, alpha=alpha, ts=[float(t) for t in it.ts],
            stages=list(grid.stages), t_backward_ns=t1 - t0, t_forward_ns=t2 - t1,
            min_xi_tilde=float(rf.xi_tilde.min()) if len(rf.xi_tilde) else float("nan"),
            indefinite=not rf.convex, extra=dict(extra or {})))
        if cfg.verbose:
            log.info("iter %3d  err %.3e  alpha %.3f  t_s %s", k, err, alpha, np.round(it.ts, 6))
        new = update_iterate(it, d, alpha)
        try:
            grid = migrate_switch_stage(grid, new)
        except GridError as exc:
            # keep the last iterate that still fits the grid
            return finish(Status.GRID_COLLISION, err, f"iteration {k}: {exc}")
        it = new
    raise AssertionError("unreachable")
