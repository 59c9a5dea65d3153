"""Riccati recursion for the Newton system of the switched problem.

Standard intervals use the usual backward recursion ``dlam_i = P_i dx_i - z_i``.
On a switching interval the post-switch part is eliminated first (giving
``P_s``, ``z_s`` and the coupling ``Gamma_s``, ``xi_s``, ``eta_s`` to the time
step), then the pre-switch part together with ``dt_s``; the latter adds the
rank-one term ``-Gamma Gamma^T / xi_tilde`` to ``P_{i_s}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .transcription import Iterate, StageData

Array = np.ndarray


class AssumptionViolation(RuntimeError):
    """The reduced Hessian is not positive definite at the current iterate."""


class CholeskyFailure(AssumptionViolation):
    def __init__(self, stage: int, part: str = "stage"):
        self.stage = stage
        self.part = part
        super().__init__(f"input Hessian G not positive definite at {part} {stage}")


class NonpositiveXi(AssumptionViolation):
    def __init__(self, switch: int, value: float):
        self.switch = switch
        self.value = value
        super().__init__(f"switching-time curvature xi_tilde = {value:.3e} <= 0 at switch {switch}")


class Direction(Iterate):
    """Newton step; same layout as :class:`Iterate`."""


@dataclass
class RiccatiFactors:
    """Backward-pass output. Per-switch arrays are indexed by switch number."""

    P: Array          # (N+1, n_x, n_x)
    z: Array          # (N+1, n_x)
    K: Array          # (N, n_u, n_x)
    k: Array          # (N, n_u)
    P_s: Array        # (m, n_x, n_x)
    z_s: Array
    K_s: Array
    k_s: Array
    T_s: Array        # (m, n_u)
    Gamma_s: Array    # (m, n_x)
    xi_s: Array       # (m,)
    eta_s: Array
    T_is: Array       # (m, n_u)
    Gamma_is: Array   # (m, n_x)
    xi_tilde: Array   # (m,)
    eta_tilde: Array
    violations: list[AssumptionViolation] = field(default_factory=list)

    @property
    def convex(self) -> bool:
        """True when every ``G`` was positive definite and every ``xi_tilde > 0``."""
        return not self.violations


def _eliminate_input(Qxx, Qxu, Quu, A, B, xbar, lx, lu, Pn, zn, shift, where, extra=None, check=True,
                     violations=None):
    """One standard Riccati step; optionally also returns ``G^{-1} extra``.

    A non positive definite ``G`` raises when ``check`` is set and is appended
    to ``violations`` otherwise.
    """
    nx, nu = B.shape
    AB = np.concatenate((A, B), axis=1)
    PAB = Pn @ AB
    W = AB.T @ PAB
    F = Qxx + W[:nx, :nx]
    H = Qxu + W[:nx, nx:]
    G = Quu + W[nx:, nx:]
    if shift:
        G = G + shift * np.eye(nu)
    w = Pn @ xbar - zn
    ATw_BTw = AB.T @ w
    rhs = np.empty((nu, nx + 1 + (extra is not None)))
    rhs[:, :nx] = H.T
    rhs[:, nx] = ATw_BTw[nx:] + lu
    if extra is not None:
        rhs[:, nx + 1] = extra
    try:
        sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G, lower=True, check_finite=False), rhs,
                                     check_finite=False)
    except np.linalg.LinAlgError:
        if check:
            raise CholeskyFailure(*where) from None
        if violations is not None:
            violations.append(CholeskyFailure(*where))
        sol = np.linalg.solve(G, rhs)
    K = -sol[:, :nx]
    k = -sol[:, nx]
    P = F + H @ K
    P = 0.5 * (P + P.T)
    z = -ATw_BTw[:nx] - lx - H @ k
    ginv_extra = sol[:, nx + 1] if extra is not None else None
    return P, z, K, k, H, ginv_extra


def backward_pass(sd: StageData, shift: float = 0.0, check: bool = True) -> RiccatiFactors:
    """Backward sweep from the terminal stage to stage 0.

    ``shift`` adds ``shift * I`` to every input Hessian ``G`` (off by default).
    Raises :class:`CholeskyFailure` or :class:`NonpositiveXi` when the
    current Newton system does not correspond to a strictly convex QP. With
    ``check=False`` the sweep carries on through indefinite blocks (``G`` is
    then solved by LU) and the violations are listed in the result.
    """
    found: list[AssumptionViolation] = []
    N, nx, nu, m = sd.N, sd.n_x, sd.n_u, sd.n_switches
    r = sd.res
    P = np.empty((N + 1, nx, nx))
    z = np.empty((N + 1, nx))
    K = np.empty((N, nu, nx))
    k = np.empty((N, nu))
    P_s, z_s = np.empty((m, nx, nx)), np.empty((m, nx))
    K_s, k_s, T_s = np.empty((m, nu, nx)), np.empty((m, nu)), np.empty((m, nu))
    Gamma_s, xi_s, eta_s = np.empty((m, nx)), np.empty(m), np.empty(m)
    T_is, Gamma_is, xi_t, eta_t = np.empty((m, nu)), np.empty((m, nx)), np.empty(m), np.empty(m)

    PN = np.array(sd.QxxN, dtype=float)
    P[N] = 0.5 * (PN + PN.T)
    z[N] = -r.lxN
    sw = sd.switch_of_stage
    Qxx, Qxu, Quu, A, B = sd.Qxx, sd.Qxu, sd.Quu, sd.A, sd.B
    for i in range(N - 1, -1, -1):
        j = sw[i]
        if j < 0:
            P[i], z[i], K[i], k[i], _, _ = _eliminate_input(
                Qxx[i], Qxu[i], Quu[i], A[i], B[i], r.xbar[i], r.lx[i], r.lu[i],
                P[i + 1], z[i + 1], shift, (i, "stage"), check=check, violations=found)
            continue

        # post-switch part (reaches x_{i+1})
        Pn, zn = P[i + 1], z[i + 1]
        As, Bs, fs = sd.A_s[j], sd.B_s[j], sd.f_post[j]
        Pf = Pn @ fs
        psi_x = sd.hx_post[j] + As.T @ Pf
        psi_u = sd.hu_post[j] + Bs.T @ Pf
        Ps, zs, Ks, ks, _, Gpsi = _eliminate_input(
            sd.Qxx_s[j], sd.Qxu_s[j], sd.Quu_s[j], As, Bs, r.xbar_s[j], r.lx_s[j], r.lu_s[j],
            Pn, zn, shift, (j, "switch"), extra=psi_u, check=check,
            violations=found)
        Ts = -Gpsi
        Gs = psi_x + Ks.T @ psi_u
        xi = fs @ Pf + psi_u @ Ts
        eta = r.hbar[j] - fs @ (Pn @ r.xbar_s[j] - zn) - psi_u @ ks

        # pre-switch part (reaches x_s) together with dt_s
        Ai, Bi, fi = A[i], B[i], sd.f_pre[j]
        Psf = Ps @ fi
        psi_ui = sd.hu_pre[j] + Bi.T @ (Psf - Gs)
        psi_xi = sd.hx_pre[j] + Ai.T @ (Psf - Gs)
        Pi, zi, Ki, ki, _, Gpsi_i = _eliminate_input(
            Qxx[i], Qxu[i], Quu[i], Ai, Bi, r.xbar[i], r.lx[i], r.lu[i],
            Ps, zs, shift, (i, "stage"), extra=psi_ui, check=check,
            violations=found)
        Ti = -Gpsi_i
        Gi = psi_xi + Ki.T @ psi_ui
        xit = xi - 2.0 * (Gs @ fi) + fi @ Psf + psi_ui @ Ti
        etat = eta - Gs @ r.xbar[i] + fi @ (Ps @ r.xbar[i] - zs) + psi_ui @ ki
        if not xit > 0.0:
            if check:
                raise NonpositiveXi(j, float(xit))
            found.append(NonpositiveXi(j, float(xit)))
        Pi = Pi - np.outer(Gi, Gi) / xit
        P[i] = 0.5 * (Pi + Pi.T)
        z[i] = zi + Gi * (etat / xit)
        K[i], k[i] = Ki, ki

        P_s[j], z_s[j], K_s[j], k_s[j], T_s[j] = Ps, zs, Ks, ks, Ts
        Gamma_s[j], xi_s[j], eta_s[j] = Gs, xi, eta
        T_is[j], Gamma_is[j], xi_t[j], eta_t[j] = Ti, Gi, xit, etat

    return RiccatiFactors(P=P, z=z, K=K, k=k, P_s=P_s, z_s=z_s, K_s=K_s, k_s=k_s, T_s=T_s,
                          Gamma_s=Gamma_s, xi_s=xi_s, eta_s=eta_s, T_is=T_is, Gamma_is=Gamma_is,
                          xi_tilde=xi_t, eta_tilde=eta_t, violations=found)


def forward_pass(sd: StageData, rf: RiccatiFactors, dx0: Array | None = None) -> Direction:
    """Forward substitution; ``dx0`` defaults to ``-xbar0``."""
    N, nx, nu, m = sd.N, sd.n_x, sd.n_u, sd.n_switches
    r = sd.res
    dx = np.empty((N + 1, nx))
    du = np.empty((N, nu))
    dlam = np.empty((N + 1, nx))
    dxs, dus, dlams, dts = np.empty((m, nx)), np.empty((m, nu)), np.empty((m, nx)), np.empty(m)

    dx[0] = -r.xbar0 if dx0 is None else np.asarray(dx0, dtype=float)
    sw = sd.switch_of_stage
    P, z, K, k, A, B = rf.P, rf.z, rf.K, rf.k, sd.A, sd.B
    for i in range(N):
        xi = dx[i]
        dlam[i] = P[i] @ xi - z[i]
        j = sw[i]
        if j < 0:
            du[i] = K[i] @ xi + k[i]
            dx[i + 1] = A[i] @ xi + B[i] @ du[i] + r.xbar[i]
            continue
        dt = -(rf.Gamma_is[j] @ xi + rf.eta_tilde[j]) / rf.xi_tilde[j]
        du[i] = K[i] @ xi + k[i] + rf.T_is[j] * dt
        dxs[j] = A[i] @ xi + B[i] @ du[i] + sd.f_pre[j] * dt + r.xbar[i]
        dus[j] = rf.K_s[j] @ dxs[j] + rf.k_s[j] - rf.T_s[j] * dt
        dlams[j] = rf.P_s[j] @ dxs[j] - rf.z_s[j] - rf.Gamma_s[j] * dt
        dx[i + 1] = sd.A_s[j] @ dxs[j] + sd.B_s[j] @ dus[j] - sd.f_post[j] * dt + r.xbar_s[j]
        dts[j] = dt
    dlam[N] = P[N] @ dx[N] - z[N]
    return Direction(x=dx, u=du, lam=dlam, xs=dxs, us=dus, lams=dlams, ts=dts)


def newton_direction(sd: StageData, shift: float = 0.0) -> tuple[Direction, RiccatiFactors]:
    rf = backward_pass(sd, shift)
    return forward_pass(sd, rf), rf
