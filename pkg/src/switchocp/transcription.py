"""Multiple-shooting transcription with switching instants as variables.

The horizon is split into ``N`` Euler intervals of length ``dtau``. A switch
at ``t_s`` falls into interval ``i_s`` and splits it in two: a pre-switch
part of length ``dtau_s`` (stage ``i_s``, previous subsystem) ending at the
extra node ``x_s`` and a post-switch part of length ``dtau - dtau_s`` (the
switch stage, next subsystem) ending at ``x_{i_s+1}``.

Array layout in :class:`StageData` and :class:`Residuals`: per-stage arrays
have a leading axis of length ``N``; on a switching interval entry ``i_s``
describes the pre-switch part. Post-switch blocks live in the ``*_s`` arrays
indexed by switch number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from functools import cached_property

import numpy as np

from .model import ProblemSpec

Array = np.ndarray

# relative clamp applied to dtau_s when forming stage quantities
OFFSET_EPS = 1e-8


class GridError(ValueError):
    """Switching times incompatible with the discretization grid."""


class SwitchCollision(GridError):
    """Two switches fall into the same shooting interval."""


@dataclass(frozen=True)
class GridLayout:
    """Discretization grid plus the interval index and offset of each switch."""

    N: int
    t0: float
    dtau: float
    stages: tuple[int, ...]
    offsets: tuple[float, ...]

    @property
    def n_switches(self) -> int:
        return len(self.stages)

    @property
    def tf(self) -> float:
        return self.t0 + self.N * self.dtau

    def effective_offsets(self, ts=None) -> Array:
        """Offsets clamped into ``[eps, dtau - eps]`` so neither part vanishes.

        With ``ts`` given, offsets are recomputed from those times while the
        interval indices stay fixed.
        """
        eps = OFFSET_EPS * self.dtau
        if ts is None:
            off = np.asarray(self.offsets, dtype=float)
        else:
            off = np.asarray(ts, dtype=float) - self.t0 - self.dtau * np.asarray(self.stages, dtype=float)
        return np.clip(off, eps, self.dtau - eps)

    @cached_property
    def switch_of_stage(self) -> Array:
        """``switch_of_stage[i]`` is the switch index on interval ``i`` or -1."""
        out = np.full(self.N, -1, dtype=int)
        for j, i in enumerate(self.stages):
            out[i] = j
        return out

    @cached_property
    def stage_phase(self) -> Array:
        """Phase (0-based position in sigma) active at the start of each interval."""
        return np.searchsorted(np.asarray(self.stages, dtype=int), np.arange(self.N), side="left")

    def node_times(self) -> Array:
        return self.t0 + self.dtau * np.arange(self.N + 1)


def _layout(t0: float, dtau: float, N: int, switch_times) -> GridLayout:
    times = [float(t) for t in np.atleast_1d(np.asarray(switch_times, dtype=float))]
    tf = t0 + N * dtau
    stages, offsets = [], []
    for j, t in enumerate(times):
        if not (t0 <= t <= tf) or not math.isfinite(t):
            raise GridError(f"switching time {t} outside [{t0}, {tf}]")
        if j and t <= times[j - 1]:
            raise GridError("switching times must be strictly increasing")
        rel = t - t0
        i = int(math.floor(rel / dtau))
        # guard floor against roundoff in rel / dtau
        if i * dtau > rel:
            i -= 1
        elif (i + 1) * dtau <= rel:
            i += 1
        i = min(max(i, 0), N - 1)
        if stages and i == stages[-1]:
            raise SwitchCollision(
                f"switches {j} and {j + 1} both fall into interval {i}; increase N")
        stages.append(i)
        offsets.append(rel - i * dtau)
    return GridLayout(N=N, t0=float(t0), dtau=float(dtau), stages=tuple(stages), offsets=tuple(offsets))


def build_grid(spec: ProblemSpec, switch_times) -> GridLayout:
    """Locate every switching time on the shooting grid of ``spec``."""
    times = np.atleast_1d(np.asarray(switch_times, dtype=float))
    if times.size != spec.n_switches:
        raise GridError(f"expected {spec.n_switches} switching times, got {times.size}")
    return _layout(spec.t0, spec.dtau, spec.N, times)


@dataclass
class Iterate:
    """Primal-dual point: shooting nodes plus one extra node per switch.

    ``lam[i]`` is the multiplier of the constraint that defines ``x[i]``
    (initial condition for ``i = 0``); ``lams[j]`` pairs with ``xs[j]``.
    """

    x: Array      # (N+1, n_x)
    u: Array      # (N, n_u)
    lam: Array    # (N+1, n_x)
    xs: Array     # (m, n_x)
    us: Array     # (m, n_u)
    lams: Array   # (m, n_x)
    ts: Array     # (m,)

    @classmethod
    def initial(cls, spec: ProblemSpec, switch_times, x=None, u=None, lam=None) -> "Iterate":
        """Default guess: states at ``x_init``, zero inputs and costates."""
        N, nx, nu, m = spec.N, spec.model.n_x, spec.model.n_u, spec.n_switches
        xs0 = np.broadcast_to(spec.x_init, (N + 1, nx)).copy() if x is None else np.array(x, dtype=float)
        return cls(
            x=xs0,
            u=np.zeros((N, nu)) if u is None else np.array(u, dtype=float),
            lam=np.zeros((N + 1, nx)) if lam is None else np.array(lam, dtype=float),
            xs=np.broadcast_to(spec.x_init, (m, nx)).copy(),
            us=np.zeros((m, nu)),
            lams=np.zeros((m, nx)),
            ts=np.array(switch_times, dtype=float).reshape(m),
        )

    def copy(self):
        return replace(self, **{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def axpy(self, alpha: float, d: "Iterate") -> "Iterate":
        """Return ``self + alpha * d`` as a new instance of ``type(self)``."""
        return type(self)(**{f.name: getattr(self, f.name) + alpha * getattr(d, f.name)
                             for f in fields(self)})


@dataclass
class Residuals:
    """Left-hand sides of all discrete optimality conditions.

    ``xbar0`` is ``x_0 - x(t0)``; ``xbar[i]``, ``lx[i]``, ``lu[i]`` are the
    dynamics defect and stationarity residuals of interval ``i`` (pre-switch
    part on a switching interval); ``xbar_s``, ``lx_s``, ``lu_s`` belong to the
    post-switch parts and ``hbar`` is the Hamiltonian jump at each switch.
    """

    xbar0: Array
    xbar: Array
    lx: Array
    lu: Array
    lxN: Array
    xbar_s: Array
    lx_s: Array
    lu_s: Array
    hbar: Array

    def blocks(self) -> list[Array]:
        return [getattr(self, f.name) for f in fields(self)]

    def vector(self) -> Array:
        return np.concatenate([np.ravel(b) for b in self.blocks()])

    def primal_error(self) -> float:
        return float(np.sqrt(sum(np.sum(b ** 2) for b in (self.xbar0, self.xbar, self.xbar_s))))


def opt_error(r: Residuals) -> float:
    """Euclidean norm of all residual blocks stacked together."""
    return float(np.sqrt(sum(float(np.sum(np.square(b))) for b in r.blocks())))


@dataclass
class StageData:
    """Coefficients of the Newton system, stage by stage.

    ``A`` and ``B`` are the Jacobians of the discrete transition, so ``A``
    already contains the identity: ``A = I + df/dx * dt``.
    """

    res: Residuals
    Qxx: Array
    Qxu: Array
    Quu: Array
    A: Array
    B: Array
    QxxN: Array
    stages: tuple[int, ...]
    Qxx_s: Array
    Qxu_s: Array
    Quu_s: Array
    A_s: Array
    B_s: Array
    hx_pre: Array
    hu_pre: Array
    f_pre: Array
    hx_post: Array
    hu_post: Array
    f_post: Array

    @property
    def N(self) -> int:
        return self.Qxx.shape[0]

    @property
    def n_x(self) -> int:
        return self.Qxx.shape[1]

    @property
    def n_u(self) -> int:
        return self.Quu.shape[1]

    @property
    def n_switches(self) -> int:
        return len(self.stages)

    @cached_property
    def switch_of_stage(self) -> Array:
        out = np.full(self.N, -1, dtype=int)
        for j, i in enumerate(self.stages):
            out[i] = j
        return out


def compute_residuals(spec: ProblemSpec, grid: GridLayout, it: Iterate) -> Residuals:
    """Evaluate every optimality condition at ``it``."""
    return _transcribe(spec, grid, it, second_order=False).res


def linearize(spec: ProblemSpec, grid: GridLayout, it: Iterate) -> StageData:
    """Residuals plus all coefficient blocks of the Newton system at ``it``."""
    return _transcribe(spec, grid, it, second_order=True)


def _check_dims(spec: ProblemSpec, grid: GridLayout, it: Iterate):
    N, nx, nu, m = spec.N, spec.model.n_x, spec.model.n_u, spec.n_switches
    expected = {"x": (N + 1, nx), "u": (N, nu), "lam": (N + 1, nx),
                "xs": (m, nx), "us": (m, nu), "lams": (m, nx), "ts": (m,)}
    for name, shape in expected.items():
        got = np.shape(getattr(it, name))
        if got != shape:
            raise ValueError(f"iterate field {name} has shape {got}, expected {shape}")
    if grid.N != N or grid.n_switches != m:
        raise ValueError("grid does not match the problem dimensions")


def _transcribe(spec: ProblemSpec, grid: GridLayout, it: Iterate, second_order: bool):
    _check_dims(spec, grid, it)
    model = spec.model
    N, nx, nu, m = spec.N, model.n_x, model.n_u, spec.n_switches
    dtau = grid.dtau
    stages = np.asarray(grid.stages, dtype=int)
    off = grid.effective_offsets(it.ts)

    # successor node / costate and step length of each (pre-switch) interval
    x_next = it.x[1:].copy()
    lam_next = it.lam[1:].copy()
    step = np.full(N, dtau)
    if m:
        x_next[stages] = it.xs
        lam_next[stages] = it.lams
        step[stages] = off

    xbar = np.empty((N, nx))
    lx = np.empty((N, nx))
    lu = np.empty((N, nu))
    if second_order:
        Qxx = np.empty((N, nx, nx))
        Qxu = np.empty((N, nx, nu))
        Quu = np.empty((N, nu, nu))
        A = np.empty((N, nx, nx))
        B = np.empty((N, nx, nu))
    H_pre = np.empty(m)
    hx_pre, hu_pre, f_pre = np.empty((m, nx)), np.empty((m, nu)), np.empty((m, nx))

    eye = np.eye(nx)
    phase = grid.stage_phase
    for p, q in enumerate(spec.sigma):
        idx = np.flatnonzero(phase == p)
        if idx.size == 0:
            continue
        ev = model.evaluate(q, it.x[idx], it.u[idx], lam_next[idx], second_order)
        dt = step[idx]
        xbar[idx] = it.x[idx] + ev.f * dt[:, None] - x_next[idx]
        lx[idx] = ev.Hx * dt[:, None] + lam_next[idx] - it.lam[idx]
        lu[idx] = ev.Hu * dt[:, None]
        if second_order:
            Qxx[idx] = ev.Hxx * dt[:, None, None]
            Qxu[idx] = ev.Hxu * dt[:, None, None]
            Quu[idx] = ev.Huu * dt[:, None, None]
            A[idx] = eye + ev.fx * dt[:, None, None]
            B[idx] = ev.fu * dt[:, None, None]
        # switch located at the end of phase p
        if p < m:
            k = np.searchsorted(idx, stages[p])
            H_pre[p] = ev.H[k]
            hx_pre[p], hu_pre[p], f_pre[p] = ev.Hx[k], ev.Hu[k], ev.f[k]

    xbar_s, lx_s, lu_s, hbar = np.empty((m, nx)), np.empty((m, nx)), np.empty((m, nu)), np.empty(m)
    hx_post, hu_post, f_post = np.empty((m, nx)), np.empty((m, nu)), np.empty((m, nx))
    Qxx_s, Qxu_s, Quu_s = np.empty((m, nx, nx)), np.empty((m, nx, nu)), np.empty((m, nu, nu))
    A_s, B_s = np.empty((m, nx, nx)), np.empty((m, nx, nu))
    for j in range(m):
        i = stages[j]
        rest = dtau - off[j]
        ev = model.evaluate(spec.sigma[j + 1], it.xs[j:j + 1], it.us[j:j + 1],
                            it.lam[i + 1:i + 2], second_order)
        xbar_s[j] = it.xs[j] + ev.f[0] * rest - it.x[i + 1]
        lx_s[j] = ev.Hx[0] * rest + it.lam[i + 1] - it.lams[j]
        lu_s[j] = ev.Hu[0] * rest
        hbar[j] = H_pre[j] - ev.H[0]
        hx_post[j], hu_post[j], f_post[j] = ev.Hx[0], ev.Hu[0], ev.f[0]
        if second_order:
            Qxx_s[j] = ev.Hxx[0] * rest
            Qxu_s[j] = ev.Hxu[0] * rest
            Quu_s[j] = ev.Huu[0] * rest
            A_s[j] = eye + ev.fx[0] * rest
            B_s[j] = ev.fu[0] * rest

    term = model.subsystem(spec.sigma[-1])
    xN = it.x[N]
    if model.vectorized:
        phi_x = np.asarray(term.phi_x(xN[None]))[0]
        phi_xx = np.asarray(term.phi_xx(xN[None]))[0] if second_order else None
    else:
        phi_x = np.asarray(term.phi_x(xN))
        phi_xx = np.asarray(term.phi_xx(xN)) if second_order else None

    res = Residuals(xbar0=it.x[0] - spec.x_init, xbar=xbar, lx=lx, lu=lu, lxN=phi_x - it.lam[N],
                    xbar_s=xbar_s, lx_s=lx_s, lu_s=lu_s, hbar=hbar)
    if not second_order:
        return _ResidualsOnly(res)
    return StageData(res=res, Qxx=Qxx, Qxu=Qxu, Quu=Quu, A=A, B=B, QxxN=np.array(phi_xx, dtype=float),
                     stages=tuple(int(i) for i in stages),
                     Qxx_s=Qxx_s, Qxu_s=Qxu_s, Quu_s=Quu_s, A_s=A_s, B_s=B_s,
                     hx_pre=hx_pre, hu_pre=hu_pre, f_pre=f_pre,
                     hx_post=hx_post, hu_post=hu_post, f_post=f_post)


@dataclass
class _ResidualsOnly:
    res: Residuals
