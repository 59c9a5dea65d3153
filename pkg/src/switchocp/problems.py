"""Built-in benchmark problems and a name-keyed registry.

Both problems are written with ``...`` indexing so their callables work on a
single point as well as on a batch of points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ProblemSpec, Subsystem, SwitchedModel


def _bcast(M, x):
    M = np.asarray(M, dtype=float)
    return np.broadcast_to(M, x.shape[:-1] + M.shape).copy()


def _zeros(x, shape):
    return np.zeros(x.shape[:-1] + shape)


def _linear_subsystem(A, b, x_ref) -> Subsystem:
    """Linear dynamics ``A x + b u`` with the tracking costs of example 1."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1, 1)
    x_ref = np.asarray(x_ref, dtype=float)

    def L_x(x, u):
        g = np.zeros_like(x)
        g[..., 1] = x[..., 1] - x_ref[1]
        return g

    return Subsystem(
        f=lambda x, u: x @ A.T + u @ b.T,
        f_x=lambda x, u: _bcast(A, x),
        f_u=lambda x, u: _bcast(b, x),
        L=lambda x, u: 0.5 * (x[..., 1] - x_ref[1]) ** 2 + 0.5 * u[..., 0] ** 2,
        L_x=L_x,
        L_u=lambda x, u: u.copy(),
        L_xx=lambda x, u: _bcast(np.diag([0.0, 1.0]), x),
        L_xu=lambda x, u: _zeros(x, (2, 1)),
        L_uu=lambda x, u: _bcast(np.eye(1), x),
        fxx_lam=lambda x, u, lam: _zeros(x, (2, 2)),
        fxu_lam=lambda x, u, lam: _zeros(x, (2, 1)),
        fuu_lam=lambda x, u, lam: _zeros(x, (1, 1)),
        phi=lambda x: 0.5 * np.sum((x - x_ref) ** 2, axis=-1),
        phi_x=lambda x: x - x_ref,
        phi_xx=lambda x: _bcast(np.eye(2), x),
    )


def example1_model() -> SwitchedModel:
    x_ref = np.array([4.0, 2.0])
    s1 = _linear_subsystem([[0.6, 1.2], [-0.8, 3.4]], [1.0, 1.0], x_ref)
    s2 = _linear_subsystem([[4.0, 3.0], [-1.0, 0.0]], [2.0, -1.0], x_ref)
    return SwitchedModel(n_x=2, n_u=1, subsystems=(s1, s2), vectorized=True)


def _trig_subsystem(swap: bool, sign: float, x_ref, input_weight: float = 1.0) -> Subsystem:
    """Subsystems of example 2.

    With ``a, b`` the state components (``a = x1, b = x2`` unless ``swap``)
    the dynamics read ``sign * [a + u sin a, -b - u cos b]``, where for the
    swapped mode ``a = x2`` and ``b = x1``. The stage cost is
    ``0.5 |x - x_ref|^2 + input_weight * |u|^2``.
    """
    w = float(input_weight)
    ia, ib = (1, 0) if swap else (0, 1)
    x_ref = np.asarray(x_ref, dtype=float)

    def f(x, u):
        a, b, v = x[..., ia], x[..., ib], u[..., 0]
        return sign * np.stack([a + v * np.sin(a), -b - v * np.cos(b)], axis=-1)

    def f_x(x, u):
        a, b, v = x[..., ia], x[..., ib], u[..., 0]
        J = _zeros(x, (2, 2))
        J[..., 0, ia] = sign * (1 + v * np.cos(a))
        J[..., 1, ib] = sign * (-1 + v * np.sin(b))
        return J

    def f_u(x, u):
        a, b = x[..., ia], x[..., ib]
        return sign * np.stack([np.sin(a), -np.cos(b)], axis=-1)[..., None]

    def fxx_lam(x, u, lam):
        a, b, v = x[..., ia], x[..., ib], u[..., 0]
        S = _zeros(x, (2, 2))
        S[..., ia, ia] = -sign * lam[..., 0] * v * np.sin(a)
        S[..., ib, ib] = sign * lam[..., 1] * v * np.cos(b)
        return S

    def fxu_lam(x, u, lam):
        a, b = x[..., ia], x[..., ib]
        S = _zeros(x, (2, 1))
        S[..., ia, 0] = sign * lam[..., 0] * np.cos(a)
        S[..., ib, 0] = sign * lam[..., 1] * np.sin(b)
        return S

    return Subsystem(
        f=f, f_x=f_x, f_u=f_u,
        L=lambda x, u: 0.5 * np.sum((x - x_ref) ** 2, axis=-1) + w * np.sum(u ** 2, axis=-1),
        L_x=lambda x, u: x - x_ref,
        L_u=lambda x, u: 2.0 * w * u,
        L_xx=lambda x, u: _bcast(np.eye(2), x),
        L_xu=lambda x, u: _zeros(x, (2, 1)),
        L_uu=lambda x, u: _bcast(2.0 * w * np.eye(1), x),
        fxx_lam=fxx_lam, fxu_lam=fxu_lam,
        fuu_lam=lambda x, u, lam: _zeros(x, (1, 1)),
        phi=lambda x: 0.5 * np.sum((x - x_ref) ** 2, axis=-1),
        phi_x=lambda x: x - x_ref,
        phi_xx=lambda x: _bcast(np.eye(2), x),
    )


def example2_model(input_weight: float = 1.0) -> SwitchedModel:
    x_ref = np.array([1.0, -1.0])
    subs = (
        _trig_subsystem(swap=False, sign=1.0, x_ref=x_ref, input_weight=input_weight),
        _trig_subsystem(swap=True, sign=1.0, x_ref=x_ref, input_weight=input_weight),
        _trig_subsystem(swap=False, sign=-1.0, x_ref=x_ref, input_weight=input_weight),
    )
    return SwitchedModel(n_x=2, n_u=1, subsystems=subs, vectorized=True)


@dataclass(frozen=True)
class Example:
    """A registered problem: a spec factory plus the default switching guess."""

    build: Callable[..., ProblemSpec]
    t_init: tuple[float, ...]
    N: int


def example1(N: int = 175, switch_bounds=None, x_init=(2.0, 3.0)) -> ProblemSpec:
    """Two linear subsystems on ``[0, 2]`` with one switch."""
    return ProblemSpec(model=example1_model(), t0=0.0, tf=2.0, N=N, sigma=(1, 2),
                       x_init=np.array(x_init, dtype=float), switch_bounds=switch_bounds)


def example2(N: int = 220, switch_bounds=None, input_weight: float = 1.0) -> ProblemSpec:
    """Three nonlinear subsystems on ``[0, 3]`` with two switches."""
    return ProblemSpec(model=example2_model(input_weight), t0=0.0, tf=3.0, N=N, sigma=(1, 2, 3),
                       x_init=np.array([2.0, 3.0]), switch_bounds=switch_bounds)


def example1_alt(N: int = 175, switch_bounds=None) -> ProblemSpec:
    """Example 1 started from ``x(t0) = [0, 2]`` instead of ``[2, 3]``.

    The reference optimum ``t_1 = 0.1919`` belongs to this initial state; the
    printed ``[2, 3]`` gives a discrete optimum near ``t_1 = 0.388``.
    """
    return example1(N=N, switch_bounds=switch_bounds, x_init=(0.0, 2.0))


def example2_alt(N: int = 220, switch_bounds=None) -> ProblemSpec:
    """Example 2 with stage cost ``0.5 |x - x_ref|^2 + 0.5 |u|^2``.

    The reference switching instants ``[0.2335, 1.0179]`` are a stationary
    point of this weighting; with ``|u|^2`` they are not.
    """
    return example2(N=N, switch_bounds=switch_bounds, input_weight=0.5)


REGISTRY: dict[str, Example] = {
    "example1": Example(build=example1, t_init=(1.0,), N=175),
    "example2": Example(build=example2, t_init=(0.5, 1.0), N=220),
    "example1_alt": Example(build=example1_alt, t_init=(1.0,), N=175),
    "example2_alt": Example(build=example2_alt, t_init=(0.5, 1.0), N=220),
}


def get_problem(name: str, N: int | None = None, switch_bounds=None) -> tuple[ProblemSpec, tuple[float, ...]]:
    """Return ``(spec, default switching-time guess)`` for a registered problem."""
    try:
        ex = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}") from None
    return ex.build(N=ex.N if N is None else N, switch_bounds=switch_bounds), ex.t_init
