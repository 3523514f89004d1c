"""Spectral shift function for relatively trace-class pairs.

The pair (H, H0) is mapped to X = (H + c)^{-m}, X0 = (H0 + c)^{-m} through
phi_m(l) = (l + c)^{-m}.  The SSF of (X, X0) is computed by the trace-class
pipelines and pulled back.  Because phi_m is decreasing,

    xi(l; H, H0) = xi_X(+inf) - xi_X(phi_m(l)),

where xi_X is normalised to vanish below the spectrum of X.  In the same
convention as ``ssf_trace``:
sigma_m(z) = (z + c)^{m-1} Tr((H0 + c)^{1-m} R_0(z) - (H + c)^{1-m} R_H(z)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from . import ssf_trace
from .errors import ConfigError, GmNotInvertible, SingularShift
from .operators import OperatorHandle, OperatorKind, finite_pair, resolvent
from .ssf_trace import FLAG_OK, Pipeline, SsfCurve

GM_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ChangeOfVariables:
    c: float
    m: int = 1
    theta0: Optional[float] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError("m must be a positive integer")
        th = self.sector_angle
        if not (0 < th and self.m * th < math.pi / 2):
            raise ConfigError(f"sector angle {th} violates m * theta0 < pi/2")

    @property
    def sector_angle(self) -> float:
        return self.theta0 if self.theta0 is not None else math.pi / (4 * self.m)

    def phi(self, lam):
        return (np.asarray(lam) + self.c) ** (-self.m)

    def phi_inv(self, mu):
        """Inverse of phi on (-c, inf), principal m-th root."""
        return np.asarray(mu, dtype=complex) ** (-1.0 / self.m) - self.c

    def phi_derivative(self, lam):
        return -self.m * (np.asarray(lam) + self.c) ** (-self.m - 1)

    def check_sector(self, handle: OperatorHandle) -> float:
        """Largest |arg(mu + c)| over the spectrum; raises if it leaves the sector."""
        ev = handle.eigenvalues + self.c
        if np.any(np.abs(ev) < 1e-12):
            raise SingularShift("-c is an eigenvalue")
        worst = float(np.max(np.abs(np.angle(ev))))
        if worst > self.sector_angle:
            raise GmNotInvertible(f"spectrum of H + c leaves the sector: |arg| = {worst:.3f}")
        return worst


def auto_shift(handleH: OperatorHandle, handleH0: OperatorHandle, m: int = 1) -> float:
    """c = max(1, 2 (||V|| - min spec H0)), doubled until spec(H + c) sits in
    the sector |arg| < pi/(4m)."""
    vnorm = float(np.linalg.norm(handleH.v, 2))
    c = max(1.0, 2.0 * (vnorm - float(np.min(handleH0.eigenvalues.real))))
    for _ in range(200):
        ok = True
        for h in (handleH, handleH0):
            ev = h.eigenvalues + c
            if np.min(ev.real) <= 0 or np.max(np.abs(np.angle(ev))) >= math.pi / (4 * m):
                ok = False
        if ok:
            return c
        c *= 2.0
    raise GmNotInvertible("no shift puts the spectrum in the sector")


# ---------------------------------------------------------------------------
# Geometric sums and resolvent identities
# ---------------------------------------------------------------------------

def geometric_sum(T, m: int, check: bool = True) -> np.ndarray:
    """G_m(T) = I + T + ... + T^(m-1), checked against (T^m - I) = (T - I) G_m(T)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    T = np.asarray(T, dtype=complex)
    n = T.shape[0]
    eye = np.eye(n, dtype=complex)
    G = eye.copy()
    P = eye.copy()
    for _ in range(m - 1):
        P = P @ T
        G = G + P
    if check:
        Tm = P @ T if m > 1 else T.copy()
        res = np.linalg.norm(Tm - eye - (T - eye) @ G) / max(1.0, np.linalg.norm(Tm))
        if res > 1e-12:
            raise ArithmeticError(f"geometric sum identity residual {res:.2e}")
    return G


def _gsums(T, m):
    """[G_0 .. G_m] with G_0 = 0."""
    n = T.shape[0]
    out = [np.zeros((n, n), complex), np.eye(n, dtype=complex)]
    P = np.eye(n, dtype=complex)
    for _ in range(1, m):
        P = P @ T
        out.append(out[-1] + P)
    return out


def geometric_identity_residual(T, m: int) -> float:
    """Residual of (T - I)^{-1} = m (T^m - I)^{-1} + sum_{k<m} G_k G_m^{-1}."""
    T = np.asarray(T, dtype=complex)
    n = T.shape[0]
    eye = np.eye(n)
    G = _gsums(T, m)
    Tm = np.linalg.matrix_power(T, m)
    lhs = np.linalg.inv(T - eye)
    Gm_inv = np.linalg.inv(G[m])
    rhs = m * np.linalg.inv(Tm - eye) + sum(G[k] @ Gm_inv for k in range(1, m))
    return float(np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(lhs)))


def _b_operator(L_inv, w, m):
    """B(w) = sum_{k=1}^{m-1} G_k(w L^{-1}) G_m(w L^{-1})^{-1}."""
    n = L_inv.shape[0]
    if m == 1:
        return np.zeros((n, n), complex)
    T = w * L_inv
    G = _gsums(T, m)
    lu = sla.lu_factor(G[m])
    rc = sla.lapack.zgecon(lu[0], np.linalg.norm(G[m], 1))[0]
    if rc < 1.0 / GM_COND_LIMIT:
        raise GmNotInvertible("G_m(w L^{-1}) is numerically singular")
    S = sum(G[k] for k in range(1, m))
    # S G_m^{-1} = (G_m^{-T} S^T)^T
    return sla.lu_solve(lu, S.T, trans=1).T


def resolvent_identity_check(handle: OperatorHandle, c: float, m: int, z: complex) -> float:
    """max residual of the two representations of (L - w)^{-1}, L = H + c, w = z + c:

        (L - w)^{-1} = -w^{-m} L^{-1} G_m(w L^{-1}) (L^{-m} - w^{-m})^{-1}
        (L - w)^{-1} = -w^{-1} I - m w^{-m-1} (L^{-m} - w^{-m})^{-1} - w^{-1} B(w).
    """
    n = handle.dim
    eye = np.eye(n, dtype=complex)
    L = handle.matrix + c * eye
    w = complex(z) + c
    if w == 0:
        raise SingularShift("z = -c")
    L_inv = resolvent(handle, -c)
    Lm = matrix_inverse_power(L, m)
    direct = resolvent(handle, z)
    K = np.linalg.solve(Lm - w ** (-m) * eye, eye)
    r1 = -w ** (-m) * L_inv @ geometric_sum(w * L_inv, m) @ K
    r2 = -eye / w - m * w ** (-m - 1) * K - _b_operator(L_inv, w, m) / w
    scale = max(1.0, np.linalg.norm(direct))
    return float(max(np.linalg.norm(r1 - direct), np.linalg.norm(r2 - direct)) / scale)


def matrix_inverse_power(L, m: int) -> np.ndarray:
    """L^{-m} by m dense solves (no eigendecomposition)."""
    L = np.asarray(L, dtype=complex)
    lu = sla.lu_factor(L)
    out = np.eye(L.shape[0], dtype=complex)
    for _ in range(m):
        out = sla.lu_solve(lu, out)
    return out


def transformed_pair(handleH: OperatorHandle, handleH0: OperatorHandle, cov: ChangeOfVariables):
    """Handles of (X, X0) = ((H + c)^{-m}, (H0 + c)^{-m})."""
    n = handleH.dim
    eye = np.eye(n)
    X = matrix_inverse_power(handleH.matrix + cov.c * eye, cov.m)
    X0 = matrix_inverse_power(handleH0.matrix + cov.c * eye, cov.m)
    X0 = 0.5 * (X0 + X0.conj().T)
    return finite_pair(X0, X - X0, label=f"phi(c={cov.c},m={cov.m})")


# ---------------------------------------------------------------------------
# sigma_m
# ---------------------------------------------------------------------------

def sigma_m(handleH: OperatorHandle, handleH0: OperatorHandle, z: complex,
            cov: ChangeOfVariables, check: bool = False):
    """(z + c)^{m-1} Tr((H0 + c)^{1-m} R_0(z) - (H + c)^{1-m} R_H(z)).

    With ``check`` the value is compared with the decomposition
    -m w^{-m-1} Sigma(Z) + w^{m-1} Tr(X B_H(w) - X0 B_H0(w)),  Z = w^{-m},
    where Sigma(Z) = Tr((X0 - Z)^{-1} - (X - Z)^{-1}); returns (value, residual).
    """
    n = handleH.dim
    eye = np.eye(n, dtype=complex)
    w = complex(z) + cov.c
    m = cov.m
    LH = handleH.matrix + cov.c * eye
    L0 = handleH0.matrix + cov.c * eye
    PH = np.linalg.matrix_power(LH, m - 1) if m > 1 else eye
    P0 = np.linalg.matrix_power(L0, m - 1) if m > 1 else eye
    AH = np.linalg.solve(PH, resolvent(handleH, z))
    A0 = np.linalg.solve(P0, resolvent(handleH0, z))
    val = complex(w ** (m - 1) * (np.trace(A0) - np.trace(AH)))
    if not check:
        return val
    Z = w ** (-m)
    X = matrix_inverse_power(LH, m)
    X0 = matrix_inverse_power(L0, m)
    Sig = np.trace(np.linalg.inv(X0 - Z * eye) - np.linalg.inv(X - Z * eye))
    BH = _b_operator(np.linalg.inv(LH), w, m)
    B0 = _b_operator(np.linalg.inv(L0), w, m)
    alt = -m * w ** (-m - 1) * Sig + w ** (m - 1) * np.trace(X @ BH - X0 @ B0)
    return val, float(abs(alt - val) / max(1.0, abs(val)))


def xi_prime_sigma_m(handleH, handleH0, grid, cov: ChangeOfVariables, eps_schedule=None,
                     atol: float = 1e-6) -> SsfCurve:
    """xi' from boundary values of sigma_m, eps -> 0 by Neville extrapolation."""
    grid = np.asarray(grid, dtype=float)
    eps = list(eps_schedule or ssf_trace.default_eps_schedule(handleH0, handleH=handleH))
    vals = []
    for e in eps:
        row = [(sigma_m(handleH, handleH0, l + 1j * e, cov) -
                sigma_m(handleH, handleH0, l - 1j * e, cov)) / (2j * math.pi) for l in grid]
        vals.append(np.array(row))
    est, err = ssf_trace._extrapolate_grid(eps, vals, atol)
    pts = ssf_trace.spectrum_points(handleH, handleH0)
    flags = [ssf_trace.FLAG_EXCLUDED if pts.size and np.min(np.abs(pts - l)) < max(eps)
             else (ssf_trace.FLAG_WEAK if e > atol else FLAG_OK) for l, e in zip(grid, err)]
    return SsfCurve(grid, None, est, Pipeline.BOUNDARY_VALUE,
                    {"eps_schedule": eps, "c": cov.c, "m": cov.m}, flags)


# ---------------------------------------------------------------------------
# Pullback
# ---------------------------------------------------------------------------

def ssf_change_of_variables(handleH: OperatorHandle, handleH0: OperatorHandle,
                            cov: Optional[ChangeOfVariables], grid, pipeline: str = "logdet",
                            m: int = 1) -> SsfCurve:
    """xi(l; H, H0) from the SSF of ((H + c)^{-m}, (H0 + c)^{-m}).

    ``pipeline`` is ``logdet`` or ``cumulative`` (run on the transformed pair).
    With ``cov=None`` the shift is chosen by ``auto_shift``.
    """
    if handleH.kind != OperatorKind.FINITE:
        raise ConfigError("change of variables is implemented for finite models")
    if cov is None:
        cov = ChangeOfVariables(auto_shift(handleH, handleH0, m), m)
    cov.check_sector(handleH)
    cov.check_sector(handleH0)
    grid = np.asarray(grid, dtype=float)
    inside = grid > -cov.c
    mu = cov.phi(grid[inside])
    order = np.argsort(mu)
    mu_sorted = mu[order]
    X, X0 = transformed_pair(handleH, handleH0, cov)
    top = float(np.max(np.abs(np.concatenate([X.eigenvalues, X0.eigenvalues])))) + 1.0
    if mu_sorted.size:
        top = max(top, float(mu_sorted[-1]) + 1.0)
    mu_all = np.concatenate([mu_sorted, [top]])
    if pipeline == "logdet":
        # X0 has norm (min spec H0 + c)^{-m}, often far below 1: scale the ladder to it
        e0 = min(1e-2 * X0.norm, ssf_trace.eps_clearance(X))
        cx = ssf_trace.ssf_via_logdet(X0, X, mu_all, ssf_trace.default_eps_schedule(X0, e0=e0))
    elif pipeline == "cumulative":
        width = 1e-2 * (mu_all[-1] - mu_all[0])
        cx = ssf_trace.ssf_cumulative_from_pairings(X, X0, mu_all, width=width)
    else:
        raise ConfigError(f"unknown pipeline {pipeline}")
    xi_top = cx.xi[-1]
    xi = np.zeros(grid.size, dtype=complex)
    flags = [FLAG_OK] * grid.size
    idx = np.flatnonzero(inside)[order]
    for j, i in enumerate(idx):
        xi[i] = xi_top - cx.xi[j]
        flags[i] = cx.flags[j]
    return SsfCurve(grid, xi, None, Pipeline.TRACE_PAIRING if pipeline == "cumulative"
                    else Pipeline.LOG_DETERMINANT,
                    {"c": cov.c, "m": cov.m, "transformed_pipeline": pipeline,
                     "anchor": "-inf", "inner": cx.meta}, flags)
