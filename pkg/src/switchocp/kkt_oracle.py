"""Dense assembly of the full Newton system, used to cross-check the recursion.

Variables are ordered chronologically: for every interval ``i`` the block
``(lam_i, x_i, u_i)`` followed on a switching interval by
``(lam_s, t_s, x_s, u_s)``; then ``(lam_N, x_N)``. The row paired with a
multiplier is the constraint it enforces and the row paired with a primal
variable is the stationarity condition of that variable, so the matrix is
the (symmetric) Lagrangian Hessian. The initial-state row is negated to keep
that symmetry.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .riccati import Direction
from .transcription import Residuals, StageData

Array = np.ndarray

_PRIMAL = ("x", "u", "t_s", "x_s", "u_s")
_DUAL = ("lam", "lam_s")


class SingularKkt(np.linalg.LinAlgError):
    """The Newton matrix is (numerically) singular."""


class RankDeficientConstraints(np.linalg.LinAlgError):
    """Constraint Jacobian without full row rank."""


@dataclass
class DenseKkt:
    matrix: Array
    rhs: Array
    index: dict[tuple[str, int], slice]
    N: int
    n_x: int
    n_u: int
    stages: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def _positions(self, kinds) -> Array:
        return np.concatenate([np.arange(s.start, s.stop) for (kind, _), s in self.index.items()
                               if kind in kinds])

    @property
    def primal(self) -> Array:
        return np.sort(self._positions(_PRIMAL))

    @property
    def dual(self) -> Array:
        return np.sort(self._positions(_DUAL))

    def unpack(self, vec: Array) -> Direction:
        N, nx, nu, m = self.N, self.n_x, self.n_u, len(self.stages)
        ix = self.index
        return Direction(
            x=np.stack([vec[ix["x", i]] for i in range(N + 1)]),
            u=np.stack([vec[ix["u", i]] for i in range(N)]).reshape(N, nu),
            lam=np.stack([vec[ix["lam", i]] for i in range(N + 1)]),
            xs=np.array([vec[ix["x_s", j]] for j in range(m)]).reshape(m, nx),
            us=np.array([vec[ix["u_s", j]] for j in range(m)]).reshape(m, nu),
            lams=np.array([vec[ix["lam_s", j]] for j in range(m)]).reshape(m, nx),
            ts=np.array([vec[ix["t_s", j]][0] for j in range(m)]).reshape(m),
        )

    def pack(self, d) -> Array:
        vec = np.empty(self.dim)
        names = {"x": "x", "u": "u", "lam": "lam", "x_s": "xs", "u_s": "us", "lam_s": "lams", "t_s": "ts"}
        for (kind, i), s in self.index.items():
            vec[s] = np.atleast_1d(getattr(d, names[kind])[i])
        return vec


def kkt_dim(N: int, n_x: int, n_u: int, n_switches: int) -> int:
    return (2 * N + 2) * n_x + N * n_u + n_switches * (2 * n_x + n_u + 1)


def index_map(N: int, n_x: int, n_u: int, stages) -> dict[tuple[str, int], slice]:
    sw = {int(i): j for j, i in enumerate(stages)}
    index = {}
    pos = 0
    for key, n in _layout_keys(N, n_x, n_u, sw):
        index[key] = slice(pos, pos + n)
        pos += n
    return index


def _layout_keys(N, nx, nu, sw):
    for i in range(N):
        yield ("lam", i), nx
        yield ("x", i), nx
        yield ("u", i), nu
        if i in sw:
            j = sw[i]
            yield ("lam_s", j), nx
            yield ("t_s", j), 1
            yield ("x_s", j), nx
            yield ("u_s", j), nu
    yield ("lam", N), nx
    yield ("x", N), nx


def assemble(sd: StageData) -> DenseKkt:
    """Stack every linearized optimality condition into one dense system."""
    N, nx, nu, m = sd.N, sd.n_x, sd.n_u, sd.n_switches
    ix = index_map(N, nx, nu, sd.stages)
    dim = kkt_dim(N, nx, nu, m)
    M = np.zeros((dim, dim))
    I = np.eye(nx)

    def put(row, col, block):
        M[ix[row], ix[col]] += np.reshape(block, (ix[row].stop - ix[row].start, ix[col].stop - ix[col].start))

    put(("lam", 0), ("x", 0), -I)
    sw = sd.switch_of_stage
    for i in range(N):
        j = sw[i]
        # pre-switch part ends at x_s on a switching interval
        nxt_lam = ("lam", i + 1) if j < 0 else ("lam_s", j)
        nxt_x = ("x", i + 1) if j < 0 else ("x_s", j)
        put(("x", i), ("x", i), sd.Qxx[i])
        put(("x", i), ("u", i), sd.Qxu[i])
        put(("x", i), nxt_lam, sd.A[i].T)
        put(("x", i), ("lam", i), -I)
        put(("u", i), ("x", i), sd.Qxu[i].T)
        put(("u", i), ("u", i), sd.Quu[i])
        put(("u", i), nxt_lam, sd.B[i].T)
        put(nxt_lam, ("x", i), sd.A[i])
        put(nxt_lam, ("u", i), sd.B[i])
        put(nxt_lam, nxt_x, -I)
        if j < 0:
            continue
        t = ("t_s", j)
        lam1 = ("lam", i + 1)
        put(("x", i), t, sd.hx_pre[j])
        put(("u", i), t, sd.hu_pre[j])
        put(("lam_s", j), t, sd.f_pre[j])
        put(t, ("x", i), sd.hx_pre[j])
        put(t, ("u", i), sd.hu_pre[j])
        put(t, ("lam_s", j), sd.f_pre[j])
        put(t, ("x_s", j), -sd.hx_post[j])
        put(t, ("u_s", j), -sd.hu_post[j])
        put(t, lam1, -sd.f_post[j])

        put(("x_s", j), ("x_s", j), sd.Qxx_s[j])
        put(("x_s", j), ("u_s", j), sd.Qxu_s[j])
        put(("x_s", j), lam1, sd.A_s[j].T)
        put(("x_s", j), ("lam_s", j), -I)
        put(("x_s", j), t, -sd.hx_post[j])
        put(("u_s", j), ("x_s", j), sd.Qxu_s[j].T)
        put(("u_s", j), ("u_s", j), sd.Quu_s[j])
        put(("u_s", j), lam1, sd.B_s[j].T)
        put(("u_s", j), t, -sd.hu_post[j])
        put(lam1, ("x_s", j), sd.A_s[j])
        put(lam1, ("u_s", j), sd.B_s[j])
        put(lam1, ("x", i + 1), -I)
        put(lam1, t, -sd.f_post[j])
    put(("x", N), ("x", N), sd.QxxN)
    put(("x", N), ("lam", N), -I)
    r = stack_residuals(sd.res, ix, sd.stages, N)
    return DenseKkt(matrix=M, rhs=-r, index=ix, N=N, n_x=nx, n_u=nu, stages=tuple(sd.stages))


def stack_residuals(res: Residuals, index: dict[tuple[str, int], slice], stages, N: int) -> Array:
    """Residual blocks in the row order of the dense matrix (initial row negated)."""
    ix = index
    sw = {int(i): j for j, i in enumerate(stages)}
    r = np.zeros(max(s.stop for s in ix.values()))
    r[ix["lam", 0]] = -res.xbar0
    for i in range(N):
        j = sw.get(i, -1)
        r[ix["x", i]] = res.lx[i]
        r[ix["u", i]] = res.lu[i]
        r[ix[("lam", i + 1) if j < 0 else ("lam_s", j)]] = res.xbar[i]
        if j >= 0:
            r[ix["t_s", j]] = res.hbar[j]
            r[ix["x_s", j]] = res.lx_s[j]
            r[ix["u_s", j]] = res.lu_s[j]
            r[ix["lam", i + 1]] = res.xbar_s[j]
    r[ix["x", N]] = res.lxN
    return r


def solve_dense(k: DenseKkt) -> Direction:
    """Solve the assembled system with a pivoted LU factorization."""
    with warnings.catch_warnings():
        # singularity is reported through SingularKkt below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(k.matrix, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.size and d.min() <= np.finfo(float).eps * k.dim * max(d.max(), 1.0):
        raise SingularKkt("dense Newton matrix is singular (LICQ violated?)")
    return k.unpack(scipy.linalg.lu_solve((lu, piv), k.rhs, check_finite=False))


def reduced_hessian_eigenvalues(k: DenseKkt) -> Array:
    """Eigenvalues of the Lagrangian Hessian projected on the constraint nullspace."""
    p, q = k.primal, k.dual
    H = k.matrix[np.ix_(p, p)]
    G = k.matrix[np.ix_(q, p)]
    s = np.linalg.svd(G, compute_uv=False)
    if s.size and s.min() <= 1e-12 * max(s.max(), 1.0):
        raise RankDeficientConstraints("constraint Jacobian is rank deficient")
    Z = scipy.linalg.null_space(G)
    Hr = Z.T @ H @ Z
    return np.linalg.eigvalsh(0.5 * (Hr + Hr.T))


def reduced_hessian_spectrum(k: DenseKkt) -> float:
    """Smallest eigenvalue of the reduced Hessian (positive iff SOSC holds)."""
    return float(reduced_hessian_eigenvalues(k).min())


def residual_of(k: DenseKkt, d) -> Array:
    """``M d - rhs``: the linearized optimality conditions evaluated at ``d``."""
    return k.matrix @ k.pack(d) - k.rhs


def random_stage_data(rng: np.random.Generator, n_x: int, n_u: int, N: int, n_switches: int,
                      mu: float = 1e-3, coupling: float = 0.3) -> StageData:
    """Random switched-LQ Newton system with SPD stage Hessians.

    Stage Hessians are drawn as ``W^T W + mu I``; transition, coupling and
    residual blocks are bounded Gaussians. Switch intervals are distinct.
    """
    m = n_switches
    stages = tuple(int(i) for i in np.sort(rng.choice(N, size=m, replace=False)))

    def hess(count):
        n = n_x + n_u
        W = rng.standard_normal((count, n, n)) / np.sqrt(n)
        S = np.einsum("kji,kjl->kil", W, W) + mu * np.eye(n)
        return S[:, :n_x, :n_x], S[:, :n_x, n_x:], S[:, n_x:, n_x:]

    def trans(count):
        A = np.eye(n_x) + 0.3 * rng.standard_normal((count, n_x, n_x)) / np.sqrt(n_x)
        B = rng.standard_normal((count, n_x, n_u)) / np.sqrt(n_x)
        return A, B

    Qxx, Qxu, Quu = hess(N)
    A, B = trans(N)
    Qxx_s, Qxu_s, Quu_s = hess(m)
    A_s, B_s = trans(m)
    WN = rng.standard_normal((n_x, n_x)) / np.sqrt(n_x)
    g = rng.standard_normal
    res = Residuals(xbar0=g(n_x), xbar=g((N, n_x)), lx=g((N, n_x)), lu=g((N, n_u)), lxN=g(n_x),
                    xbar_s=g((m, n_x)), lx_s=g((m, n_x)), lu_s=g((m, n_u)), hbar=g(m))
    return StageData(res=res, Qxx=Qxx, Qxu=Qxu, Quu=Quu, A=A, B=B, QxxN=WN.T @ WN + mu * np.eye(n_x),
                     stages=stages, Qxx_s=Qxx_s, Qxu_s=Qxu_s, Quu_s=Quu_s, A_s=A_s, B_s=B_s,
                     hx_pre=coupling * g((m, n_x)), hu_pre=coupling * g((m, n_u)), f_pre=g((m, n_x)),
                     hx_post=coupling * g((m, n_x)), hu_post=coupling * g((m, n_u)), f_post=g((m, n_x)))
