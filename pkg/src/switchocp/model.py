"""Switched-system model: subsystem dynamics, costs and their derivatives.

Subsystem indices are 1-based throughout (``q in {1, ..., M}``), matching the
usual switched-system notation. Jacobians use the ``df/dx`` layout, i.e. row
``k`` of ``f_x`` is the gradient of ``f[k]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class ModelError(ValueError):
    """Inconsistent model definition or invalid subsystem index."""


@dataclass(frozen=True)
class Subsystem:
    """Dynamics ``f``, stage cost ``L`` and terminal cost ``phi`` of one mode.

    ``fxx_lam``, ``fxu_lam`` and ``fuu_lam`` take ``(x, u, lam)`` and return the
    second derivatives of ``lam @ f(x, u)``. All callables must be pure.
    """

    f: Callable
    f_x: Callable
    f_u: Callable
    L: Callable
    L_x: Callable
    L_u: Callable
    L_xx: Callable
    L_xu: Callable
    L_uu: Callable
    fxx_lam: Callable
    fxu_lam: Callable
    fuu_lam: Callable
    phi: Callable
    phi_x: Callable
    phi_xx: Callable

    @classmethod
    def finite_difference(cls, f: Callable, L: Callable, phi: Callable,
                          step: float = 1e-5) -> "Subsystem":
        """Build a subsystem whose derivatives come from central differences.

        Intended for prototyping only; accuracy is roughly ``step**2`` for
        first derivatives and ``step`` for the Hessians (nested differences).
        """
        def jac(fun):
            return lambda *a: _fd_jacobian(fun, a, 0, step)

        def jac_u(fun):
            return lambda *a: _fd_jacobian(fun, a, 1, step)

        def grad(fun, arg):
            return lambda *a: _fd_jacobian(lambda *b: np.atleast_1d(fun(*b)), a, arg, step)[0]

        L_x = grad(L, 0)
        L_u = grad(L, 1)
        f_x = jac(f)
        f_u = jac_u(f)
        phi_x = grad(phi, 0)

        def lam_fx(x, u, lam):
            return f_x(x, u).T @ lam

        def lam_fu(x, u, lam):
            return f_u(x, u).T @ lam

        return cls(
            f=f, f_x=f_x, f_u=f_u,
            L=L, L_x=L_x, L_u=L_u,
            L_xx=lambda x, u: _fd_jacobian(L_x, (x, u), 0, step),
            L_xu=lambda x, u: _fd_jacobian(L_x, (x, u), 1, step),
            L_uu=lambda x, u: _fd_jacobian(L_u, (x, u), 1, step),
            fxx_lam=lambda x, u, lam: _fd_jacobian(lam_fx, (x, u, lam), 0, step),
            fxu_lam=lambda x, u, lam: _fd_jacobian(lam_fx, (x, u, lam), 1, step),
            fuu_lam=lambda x, u, lam: _fd_jacobian(lam_fu, (x, u, lam), 1, step),
            phi=phi, phi_x=phi_x,
            phi_xx=lambda x: _fd_jacobian(phi_x, (x,), 0, step),
        )


@dataclass
class ModeEval:
    """Batched evaluation of one subsystem's Hamiltonian quantities."""

    f: Array
    fx: Array
    fu: Array
    H: Array
    Hx: Array
    Hu: Array
    Hxx: Array | None = None
    Hxu: Array | None = None
    Huu: Array | None = None


@dataclass(frozen=True)
class SwitchedModel:
    """A set of subsystems sharing state and input dimensions.

    When ``vectorized`` is True every callable must accept arrays with a
    leading batch axis (``x.shape == (B, n_x)``) and return batched outputs;
    the transcription then evaluates whole phases in one call.
    """

    n_x: int
    n_u: int
    subsystems: tuple[Subsystem, ...]
    vectorized: bool = False

    def __post_init__(self):
        if len(self.subsystems) < 1:
            raise ModelError("a switched model needs at least one subsystem")
        if self.n_x < 1 or self.n_u < 1:
            raise ModelError("state and input dimensions must be positive")
        object.__setattr__(self, "subsystems", tuple(self.subsystems))

    @property
    def M(self) -> int:
        return len(self.subsystems)

    def subsystem(self, q: int) -> Subsystem:
        if not (1 <= q <= self.M):
            raise ModelError(f"subsystem index {q} outside 1..{self.M}")
        return self.subsystems[q - 1]

    def hamiltonian(self, q: int, x, u, lam) -> float:
        sub = self.subsystem(q)
        x, u, lam = (np.asarray(v, dtype=float) for v in (x, u, lam))
        self._check_point(x, u, lam)
        return float(sub.L(x, u) + lam @ sub.f(x, u))

    def evaluate(self, q: int, x: Array, u: Array, lam: Array,
                 second_order: bool = True) -> ModeEval:
        """Evaluate f, its Jacobians and the Hamiltonian derivatives on a batch.

        ``x``, ``u``, ``lam`` have shapes ``(B, n_x)``, ``(B, n_u)``, ``(B, n_x)``.
        """
        sub = self.subsystem(q)
        if self.vectorized:
            return _eval_batch(sub, x, u, lam, second_order)
        parts = [_eval_batch(sub, x[b], u[b], lam[b], second_order) for b in range(x.shape[0])]
        if not parts:
            return _empty_eval(self.n_x, self.n_u, second_order)
        names = ["f", "fx", "fu", "H", "Hx", "Hu"]
        if second_order:
            names += ["Hxx", "Hxu", "Huu"]
        return ModeEval(**{n: np.stack([getattr(p, n) for p in parts]) for n in names})

    def validate(self, x, u, lam, rtol: float = 1e-12) -> None:
        """Check output shapes and Hessian symmetry at one point."""
        x, u, lam = (np.asarray(v, dtype=float) for v in (x, u, lam))
        self._check_point(x, u, lam)
        nx, nu = self.n_x, self.n_u
        if self.vectorized:
            x, u, lam = x[None], u[None], lam[None]
        for q in range(1, self.M + 1):
            ev = self.evaluate(q, np.atleast_2d(x), np.atleast_2d(u), np.atleast_2d(lam))
            shapes = {"f": (nx,), "fx": (nx, nx), "fu": (nx, nu), "Hx": (nx,), "Hu": (nu,),
                      "Hxx": (nx, nx), "Hxu": (nx, nu), "Huu": (nu, nu)}
            for name, shape in shapes.items():
                got = getattr(ev, name).shape[1:]
                if got != shape:
                    raise ModelError(f"subsystem {q}: {name} has shape {got}, expected {shape}")
            for name in ("Hxx", "Huu"):
                S = getattr(ev, name)[0]
                if np.max(np.abs(S - S.T)) > rtol * max(1.0, np.max(np.abs(S))):
                    raise ModelError(f"subsystem {q}: {name} is not symmetric")
            sub = self.subsystem(q)
            Pxx = np.asarray(sub.phi_xx(x)).reshape(-1, nx, nx)[0]
            if Pxx.shape != (nx, nx) or np.max(np.abs(Pxx - Pxx.T)) > rtol * max(1.0, np.max(np.abs(Pxx))):
                raise ModelError(f"subsystem {q}: phi_xx malformed or not symmetric")

    def _check_point(self, x, u, lam):
        if x.shape[-1] != self.n_x or lam.shape[-1] != self.n_x or u.shape[-1] != self.n_u:
            raise ModelError(
                f"dimension mismatch: x{x.shape}, u{u.shape}, lam{lam.shape} "
                f"for n_x={self.n_x}, n_u={self.n_u}")


def eval_hamiltonian(model: SwitchedModel, q: int, x, u, lam) -> float:
    """Hamiltonian ``L_q(x, u) + lam @ f_q(x, u)``."""
    return model.hamiltonian(q, x, u, lam)


@dataclass
class ProblemSpec:
    """A switched optimal control problem with a fixed switching sequence.

    ``sigma`` lists the active subsystems in order; there are
    ``len(sigma) - 1`` switching instants. ``switch_bounds`` defaults to a
    slightly shrunken ``[t0, tf]`` for every switch (see ``bounds``).
    """

    model: SwitchedModel
    t0: float
    tf: float
    N: int
    sigma: tuple[int, ...]
    x_init: Array
    switch_bounds: Sequence[tuple[float, float]] | None = None

    def __post_init__(self):
        self.sigma = tuple(int(q) for q in self.sigma)
        self.x_init = np.asarray(self.x_init, dtype=float).reshape(-1)
        if not self.t0 < self.tf:
            raise ModelError("t0 must be smaller than tf")
        if len(self.sigma) < 1:
            raise ModelError("switching sequence must contain at least one subsystem")
        if self.N < len(self.sigma):
            raise ModelError("need at least one shooting interval per phase")
        for q in self.sigma:
            self.model.subsystem(q)
        if self.x_init.shape != (self.model.n_x,):
            raise ModelError("x_init has wrong dimension")
        if self.switch_bounds is not None:
            self.switch_bounds = [(float(a), float(b)) for a, b in self.switch_bounds]
            if len(self.switch_bounds) != self.n_switches:
                raise ModelError("one (t_min, t_max) pair per switch is required")
            for lo, hi in self.switch_bounds:
                if not (self.t0 <= lo < hi <= self.tf):
                    raise ModelError(f"invalid switch bounds [{lo}, {hi}]")

    @property
    def n_switches(self) -> int:
        return len(self.sigma) - 1

    @property
    def dtau(self) -> float:
        return (self.tf - self.t0) / self.N

    def bounds(self) -> list[tuple[float, float]]:
        if self.switch_bounds is not None:
            return list(self.switch_bounds)
        delta = 1e-3 * self.dtau
        return [(self.t0 + delta, self.tf - delta)] * self.n_switches


@dataclass
class DerivativeReport:
    """Max absolute discrepancy between supplied and finite-difference derivatives.

    ``errors[q][block]`` holds the error for subsystem ``q``.
    """

    step: float
    errors: dict[int, dict[str, float]] = field(default_factory=dict)

    def max_error(self) -> float:
        return max((e for blocks in self.errors.values() for e in blocks.values()), default=0.0)

    def worst(self) -> tuple[int, str, float]:
        return max(((q, b, e) for q, blocks in self.errors.items() for b, e in blocks.items()),
                   key=lambda t: t[2])


def check_derivatives(problem, x, u, lam, h: float = 1e-5,
                      subsystems: Sequence[int] | None = None) -> DerivativeReport:
    """Compare every supplied derivative against central differences.

    First derivatives are differenced from function values; Hessians are
    differenced from the supplied gradients/Jacobians, which are themselves
    checked in the same report.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    model = problem.model if isinstance(problem, ProblemSpec) else problem
    x, u, lam = (np.asarray(v, dtype=float).reshape(-1) for v in (x, u, lam))
    report = DerivativeReport(step=h)
    qs = range(1, model.M + 1) if subsystems is None else subsystems

    if model.vectorized:
        def call(fun, *a):
            return np.asarray(fun(*(v[None] for v in a)), dtype=float)[0]
    else:
        def call(fun, *a):
            return np.asarray(fun(*a), dtype=float)

    for q in qs:
        s = model.subsystem(q)

        def lam_f(x_, u_):
            return np.atleast_1d(lam @ call(s.f, x_, u_))

        def lam_fx(x_, u_):
            return call(s.f_x, x_, u_).T @ lam

        def lam_fu(x_, u_):
            return call(s.f_u, x_, u_).T @ lam

        def scalar(fun):
            return lambda *a: np.atleast_1d(call(fun, *a))

        pairs = {
            "f_x": (call(s.f_x, x, u), _fd_jacobian(lambda *a: call(s.f, *a), (x, u), 0, h)),
            "f_u": (call(s.f_u, x, u), _fd_jacobian(lambda *a: call(s.f, *a), (x, u), 1, h)),
            "L_x": (call(s.L_x, x, u), _fd_jacobian(scalar(s.L), (x, u), 0, h)[0]),
            "L_u": (call(s.L_u, x, u), _fd_jacobian(scalar(s.L), (x, u), 1, h)[0]),
            "L_xx": (call(s.L_xx, x, u), _fd_jacobian(lambda *a: call(s.L_x, *a), (x, u), 0, h)),
            "L_xu": (call(s.L_xu, x, u), _fd_jacobian(lambda *a: call(s.L_x, *a), (x, u), 1, h)),
            "L_uu": (call(s.L_uu, x, u), _fd_jacobian(lambda *a: call(s.L_u, *a), (x, u), 1, h)),
            "fxx_lam": (call(s.fxx_lam, x, u, lam), _fd_jacobian(lam_fx, (x, u), 0, h)),
            "fxu_lam": (call(s.fxu_lam, x, u, lam), _fd_jacobian(lam_fx, (x, u), 1, h)),
            "fuu_lam": (call(s.fuu_lam, x, u, lam), _fd_jacobian(lam_fu, (x, u), 1, h)),
            "phi_x": (call(s.phi_x, x), _fd_jacobian(scalar(s.phi), (x,), 0, h)[0]),
            "phi_xx": (call(s.phi_xx, x), _fd_jacobian(lambda a: call(s.phi_x, a), (x,), 0, h)),
        }
        # the lam-weighted Jacobian must itself agree with differencing lam @ f
        pairs["lam_f_x"] = (lam_fx(x, u), _fd_jacobian(lam_f, (x, u), 0, h)[0])
        report.errors[q] = {name: float(np.max(np.abs(np.reshape(a, np.shape(b)) - b)))
                            for name, (a, b) in pairs.items()}
    return report


def _fd_jacobian(fun: Callable, args: tuple, which: int, h: float) -> Array:
    """Central-difference Jacobian of ``fun(*args)`` w.r.t. ``args[which]``."""
    args = [np.asarray(a, dtype=float) for a in args]
    base = args[which]
    cols = []
    for k in range(base.size):
        e = np.zeros_like(base)
        e[k] = h
        plus = list(args)
        minus = list(args)
        plus[which] = base + e
        minus[which] = base - e
        cols.append((np.asarray(fun(*plus), dtype=float) - np.asarray(fun(*minus), dtype=float)) / (2 * h))
    return np.stack(cols, axis=-1)


def _eval_batch(sub: Subsystem, x, u, lam, second_order) -> ModeEval:
    f = np.asarray(sub.f(x, u), dtype=float)
    fx = np.asarray(sub.f_x(x, u), dtype=float)
    fu = np.asarray(sub.f_u(x, u), dtype=float)
    H = np.asarray(sub.L(x, u), dtype=float) + np.einsum("...i,...i->...", lam, f)
    Hx = np.asarray(sub.L_x(x, u), dtype=float) + np.einsum("...ji,...j->...i", fx, lam)
    Hu = np.asarray(sub.L_u(x, u), dtype=float) + np.einsum("...ji,...j->...i", fu, lam)
    ev = ModeEval(f=f, fx=fx, fu=fu, H=H, Hx=Hx, Hu=Hu)
    if second_order:
        ev.Hxx = np.asarray(sub.L_xx(x, u), dtype=float) + np.asarray(sub.fxx_lam(x, u, lam), dtype=float)
        ev.Hxu = np.asarray(sub.L_xu(x, u), dtype=float) + np.asarray(sub.fxu_lam(x, u, lam), dtype=float)
        ev.Huu = np.asarray(sub.L_uu(x, u), dtype=float) + np.asarray(sub.fuu_lam(x, u, lam), dtype=float)
    return ev


def _empty_eval(nx, nu, second_order) -> ModeEval:
    ev = ModeEval(f=np.zeros((0, nx)), fx=np.zeros((0, nx, nx)), fu=np.zeros((0, nx, nu)),
                  H=np.zeros(0), Hx=np.zeros((0, nx)), Hu=np.zeros((0, nu)))
    if second_order:
        ev.Hxx, ev.Hxu, ev.Huu = np.zeros((0, nx, nx)), np.zeros((0, nx, nu)), np.zeros((0, nu, nu))
    return ev
