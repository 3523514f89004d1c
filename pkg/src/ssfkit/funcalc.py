"""Functional calculus for non-self-adjoint matrices.

f(H) = (1/pi) * integral over C of dbar f~(z) R_H(z) dx dy, evaluated by
tensor Gauss-Legendre quadrature in the coordinates (x, psi) where
y = psi * b <x> / <a>.  In these coordinates the support of the cutoff is
|psi| < 1 and its transition layer is exactly 1/2 < |psi| < 1, so a fixed
panel layout resolves it.  Below |psi| < 1/2 the panels are dyadic toward
the axis, and x-panels are graded toward real eigenvalues (poles of R_H)
and toward the edges of supp f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import aax
from .aax import AlmostAnalyticExtension, TestFunction
from .errors import (ContourHitsSpectrum, GrowthUnbounded, InadmissibleCutoff,
                     NonIdempotent, QuadratureNotConverged, SingularShift)
from .linalg import extrapolate_checked, inverse_norm, pairwise_sum
from .operators import OperatorHandle, StripRegion, resolvent

IDEMPOTENT_TOL = 1e-10
MAX_NODES = 2**22


@dataclass(frozen=True)
class QuadratureOptions:
    orders: tuple = (8, 12, 16, 24)
    transition_panels: int = 4
    base_panels: int = 8
    rtol: float = 1e-6
    truncation_tol: float = 1e-12
    growth_exponent: int = 0
    growth_constant: float = 1.0
    chunk: int = 20000


# ---------------------------------------------------------------------------
# Quadrature nodes
# ---------------------------------------------------------------------------

def _x_breaks(lo, hi, scale, poles, nbase):
    L = hi - lo
    bp = list(np.linspace(lo, hi, nbase + 1))
    coarse = L / nbase
    for e in (lo, hi):
        s = coarse / 2
        while s > L * 2e-3:
            bp += [e + s, e - s]
            s /= 2
    for lam in poles:
        if lo - scale < lam < hi + scale:
            bp.append(lam)
            s = scale
            while s < coarse:
                bp += [lam - s, lam + s]
                s *= 2
    bp = np.unique(np.clip(bp, lo, hi))
    keep = np.concatenate(([True], np.diff(bp) > 1e-13 * L))
    return bp[keep]


def psi_floor(ext: AlmostAnalyticExtension, n_growth: int, c_growth: float, tol: float) -> float:
    """Smallest |psi| kept: the discarded strip contributes less than ``tol``.

    Near the axis |dbar f~| ~ |f^(N+1)| |y|^N / (2 N!) and ||R|| <~ c |y|^(-1-n),
    so the strip |y| < y0 contributes at most
    (1/pi) L max|f^(N+1)| c y0^(N-n) / (N! (N-n)).
    """
    N, n = ext.order, n_growth
    if N - n < 1:
        raise QuadratureNotConverged(f"extension order {N} does not beat resolvent growth {n}")
    lo, hi = ext.f.support
    xs = np.linspace(lo, hi, 401)
    M = float(np.max(np.abs(ext.f.eval_derivative(N + 1, xs)))) + 1e-300
    L = hi - lo
    y0 = (tol * math.pi * math.factorial(N) * (N - n) / (L * M * c_growth)) ** (1.0 / (N - n))
    jmax = ext.cutoff.height(max(abs(lo), abs(hi)))
    return float(np.clip(y0 / jmax, 1e-12, 1e-2))


def hs_nodes(ext: AlmostAnalyticExtension, poles: Sequence[float], order: int,
             psi_min: float, transition_panels: int = 4, base_panels: int = 8):
    """Nodes z and weights w (area element included) covering supp dbar f~."""
    gx, gw = leggauss(order)
    lo, hi = ext.f.support
    nt = transition_panels
    bands = [(0.5 + 0.5 * i / nt, 0.5 + 0.5 * (i + 1) / nt) for i in range(nt)]
    s = 0.5
    while s > psi_min:
        bands.append((s / 2, s))
        s /= 2
    jmax = ext.cutoff.height(max(abs(lo), abs(hi)))
    X, P, W = [], [], []
    for p0, p1 in bands:
        bp = _x_breaks(lo, hi, p0 * jmax, poles, base_panels)
        a, b = bp[:-1], bp[1:]
        xs = ((a + b) / 2)[:, None] + ((b - a) / 2)[:, None] * gx
        wx = ((b - a) / 2)[:, None] * gw
        ps = (p0 + p1) / 2 + (p1 - p0) / 2 * gx
        wp = (p1 - p0) / 2 * gw
        X.append(np.repeat(xs.ravel(), order))
        P.append(np.tile(ps, xs.size))
        W.append(np.repeat(wx.ravel(), order) * np.tile(wp, xs.size))
    X = np.concatenate(X)
    P = np.concatenate(P)
    W = np.concatenate(W)
    J = ext.cutoff.height(X)
    Y = P * J
    W = W * J
    z = np.concatenate([X + 1j * Y, X - 1j * Y])
    return z, np.concatenate([W, W])


def hs_integrate(ext: AlmostAnalyticExtension, contract: Callable, poles: Sequence[float],
                 opts: QuadratureOptions = QuadratureOptions()):
    """(1/pi) sum_j w_j dbar f~(z_j) F(z_j), converged in the GL order.

    ``contract(z, c)`` returns sum_j c_j F(z_j) for a chunk of nodes (F may
    be scalar or matrix valued).  Returns (value, info).
    """
    psi_min = psi_floor(ext, opts.growth_exponent, opts.growth_constant, opts.truncation_tol)
    prev = None
    history = []
    for order in opts.orders:
        z, w = hs_nodes(ext, poles, order, psi_min, opts.transition_panels, opts.base_panels)
        if z.size > MAX_NODES:
            break
        coef = w * ext.dbar(z) / math.pi
        nz = np.flatnonzero(coef != 0)
        z, coef = z[nz], coef[nz]
        parts = []
        for k in range(0, z.size, opts.chunk):
            parts.append(contract(z[k:k + opts.chunk], coef[k:k + opts.chunk]))
        val = pairwise_sum(parts)
        history.append((order, int(z.size)))
        if prev is not None:
            scale = max(np.max(np.abs(val)), 1e-300)
            diff = float(np.max(np.abs(val - prev)))
            if diff <= opts.rtol * max(scale, 1.0) or diff <= 1e-13:
                return val, {"orders": history, "psi_min": psi_min, "diff": diff}
        prev = val
    raise QuadratureNotConverged(f"Helffer-Sjostrand quadrature did not converge ({history})")


# ---------------------------------------------------------------------------
# Spectral bookkeeping
# ---------------------------------------------------------------------------

def _real_tol(handle: OperatorHandle) -> float:
    return 1e-7 * max(1.0, handle.norm)


def eigen_clusters(handle: OperatorHandle, tol: Optional[float] = None):
    """Group numerically coincident eigenvalues (split Jordan blocks).

    Returns a list of (center, multiplicity, members).
    """
    ev = handle.eigenvalues
    tol = tol if tol is not None else 1e-6 * max(1.0, handle.norm)
    used = np.zeros(ev.size, bool)
    out = []
    for i in range(ev.size):
        if used[i]:
            continue
        grp = [i]
        used[i] = True
        changed = True
        while changed:
            changed = False
            for j in range(ev.size):
                if not used[j] and np.min(np.abs(ev[j] - ev[grp])) < tol:
                    grp.append(j)
                    used[j] = True
                    changed = True
        members = ev[grp]
        out.append((complex(members.mean()), len(grp), members))
    return out


def real_eigenvalues(handle: OperatorHandle) -> list:
    tol = _real_tol(handle)
    return [c.real for c, _, _ in eigen_clusters(handle) if abs(c.imag) <= tol]


def nonreal_eigenvalues(handle: OperatorHandle) -> list:
    tol = _real_tol(handle)
    return [c for c, _, _ in eigen_clusters(handle) if abs(c.imag) > tol]


# ---------------------------------------------------------------------------
# Riesz projections and the spectral split
# ---------------------------------------------------------------------------

def riesz_projection(handle: OperatorHandle, lam: complex, radius: float) -> np.ndarray:
    """(1/2 pi i) contour integral of (z - H)^{-1} over the circle C(lam, radius).

    Trapezoidal rule; nodes doubled until the idempotency defect drops below
    1e-10.
    """
    ev = handle.eigenvalues
    gap = np.min(np.abs(np.abs(ev - lam) - radius))
    if gap < 1e-8 * radius:
        raise ContourHitsSpectrum(f"eigenvalue within {gap:.1e} of the contour")
    n = handle.dim
    M = 16
    prev = None
    while M <= 2**14:
        th = 2 * np.pi * (np.arange(M) + 0.5) / M
        zs = lam + radius * np.exp(1j * th)
        R = handle.resolvent_batch(zs)              # (H - z)^{-1}
        P = -np.tensordot(radius * np.exp(1j * th) / M, R, axes=(0, 0))
        defect = np.linalg.norm(P @ P - P, 2) / max(1.0, np.linalg.norm(P, 2))
        if defect < IDEMPOTENT_TOL and prev is not None and \
                np.linalg.norm(P - prev, 2) < IDEMPOTENT_TOL * max(1.0, np.linalg.norm(P, 2)):
            return P
        prev = P
        M *= 2
    raise NonIdempotent(f"Riesz projection at {lam} did not converge (defect {defect:.1e}, dim {n})")


def _cluster_radius(handle: OperatorHandle, center: complex, members) -> float:
    ev = handle.eigenvalues
    others = np.array([e for e in ev if np.min(np.abs(e - members)) > 0])
    if others.size == 0:
        return 1.0
    return 0.5 * float(np.min(np.abs(others - center)))


@dataclass
class SpectralSplit:
    projector: np.ndarray
    h_complex: np.ndarray
    h_real: np.ndarray
    eigenvalues_complex: list = field(default_factory=list)

    def check(self, H: np.ndarray, tol: float = 1e-8) -> dict:
        P = self.projector
        return {
            "idempotency": float(np.linalg.norm(P @ P - P, 2)),
            "commutator": float(np.linalg.norm(P @ H - H @ P, 2) / max(1.0, np.linalg.norm(H, 2))),
        }


def spectral_split(handle: OperatorHandle, interval: tuple) -> SpectralSplit:
    """Pi_I = sum of Riesz projections over non-real eigenvalues with Re in I."""
    s0, s1 = interval
    n = handle.dim
    H = handle.matrix
    P = np.zeros((n, n), dtype=complex)
    cx = []
    tol = _real_tol(handle)
    for c, mult, members in eigen_clusters(handle):
        if abs(c.imag) > tol and s0 < c.real < s1:
            r = _cluster_radius(handle, c, members)
            r = min(r, 0.5 * abs(c.imag))
            P = P + riesz_projection(handle, c, r)
            cx.extend([c] * mult)
    Q = np.eye(n) - P
    return SpectralSplit(P, P @ H @ P, Q @ H @ Q, cx)


# ---------------------------------------------------------------------------
# Resolvent growth
# ---------------------------------------------------------------------------

def resolvent_norm(handle: OperatorHandle, z: complex) -> float:
    return inverse_norm(handle.matrix - z * np.eye(handle.dim))


def probe_resolvent_growth(handle: OperatorHandle, region: StripRegion, samples: int = 10,
                           return_fit: bool = False):
    """Smallest integer n with ||R_H(x+iy)|| <~ c |y|^(-1-n) on the strip.

    The maximum of ||R|| over x samples (including the real eigenvalues in
    the interval) is fitted against |y| on a geometric ladder; n comes from
    the slope at the small-|y| end with a 0.2 margin.
    """
    s0, s1 = region.interval
    xs = list(np.linspace(s0, s1, 33))
    xs += [e.real for e in handle.eigenvalues if s0 <= e.real <= s1]
    xs = np.array(sorted(xs))
    ys = region.half_height * 2.0 ** (-np.arange(samples))
    g = np.array([max(resolvent_norm(handle, x + 1j * y) for x in xs) for y in ys])
    k = max(3, samples // 2)
    slope = np.polyfit(np.log(ys[-k:]), np.log(g[-k:]), 1)[0]
    if -slope > 21:
        raise GrowthUnbounded(f"resolvent growth slope {slope:.2f} exceeds cap")
    n = max(0, int(math.ceil(-slope - 1.0 - 0.2)))
    if return_fit:
        c = float(np.max(g * ys ** (1 + n)))
        return n, StripRegion(region.interval, region.half_height, n, max(c, 1e-300)), slope
    return n


# ---------------------------------------------------------------------------
# f(H)
# ---------------------------------------------------------------------------

def default_order(n_growth: int = 0) -> int:
    return max(n_growth + 2, 4)


def extension_for(handle: OperatorHandle, f: TestFunction, N: Optional[int] = None,
                  n_growth: int = 0) -> AlmostAnalyticExtension:
    N = default_order(n_growth) if N is None else N
    return aax.build_extension(f, N, None, nonreal_eigenvalues(handle))


def _poles(handle: OperatorHandle, ext: AlmostAnalyticExtension):
    lo, hi = ext.f.support
    h = ext.cutoff.height(max(abs(lo), abs(hi)))
    return sorted({float(e.real) for e in handle.eigenvalues if abs(e.imag) < 4 * h})


def apply_function(handle: OperatorHandle, ext: AlmostAnalyticExtension,
                   interval: Optional[tuple] = None,
                   opts: QuadratureOptions = QuadratureOptions(), return_info: bool = False):
    """f(H) by the Helffer-Sjostrand quadrature."""
    lo, hi = ext.f.support
    if interval is not None and not (interval[0] <= lo and hi <= interval[1]):
        raise InadmissibleCutoff("supp f is not contained in the interval")
    aax.check_admissible(ext.cutoff, ext.f.support, nonreal_eigenvalues(handle))
    T, Q = handle.schur

    val, info = hs_integrate(ext, handle.resolvent_sum, _poles(handle, ext), opts)
    out = Q @ val @ Q.conj().T
    return (out, info) if return_info else out


def trace_apply_function(handle: OperatorHandle, ext: AlmostAnalyticExtension,
                         opts: QuadratureOptions = QuadratureOptions()) -> complex:
    """Tr f(H) by the same quadrature applied to Tr R_H(z) = sum 1/(mu_k - z)."""
    aax.check_admissible(ext.cutoff, ext.f.support, nonreal_eigenvalues(handle))
    mu = np.diag(handle.schur[0])

    def contract(zs, c):
        return complex(np.sum((1.0 / (mu[:, None] - zs[None, :])) @ c))

    val, _ = hs_integrate(ext, contract, _poles(handle, ext), opts)
    return complex(val)


def apply_function_spectral(handle: OperatorHandle, f: TestFunction) -> np.ndarray:
    """Fast path: f(H) = sum over real eigenvalues l of sum_k f^(k)(l)/k! N_l^k Pi_l.

    Non-real eigenvalues contribute nothing, as in the quadrature definition.
    """
    n = handle.dim
    H = handle.matrix
    out = np.zeros((n, n), dtype=complex)
    tol = _real_tol(handle)
    for c, mult, members in eigen_clusters(handle):
        if abs(c.imag) > tol:
            continue
        lam = c.real
        if not (f.support[0] < lam < f.support[1]):
            continue
        P = riesz_projection(handle, lam, _cluster_radius(handle, c, members))
        Nil = (H - lam * np.eye(n)) @ P
        term = P.copy()
        for k in range(mult):
            out += f.eval_derivative(k, lam) / math.factorial(k) * term
            term = Nil @ term
    return out


def trace_function_spectral(handle: OperatorHandle, f: TestFunction) -> complex:
    """Tr f(H): the nilpotent parts are traceless, so only Tr Pi_l f(l) remains."""
    tol = _real_tol(handle)
    return complex(sum(mult * f(c.real) for c, mult, _ in eigen_clusters(handle)
                       if abs(c.imag) <= tol))


# ---------------------------------------------------------------------------
# Stone formula
# ---------------------------------------------------------------------------

def _stone_breaks(lo, hi, eps, poles):
    L = hi - lo
    bp = list(np.linspace(lo, hi, 9))
    for e in (lo, hi):
        s = L / 16
        while s > L * 2e-3:
            bp += [e + s, e - s]
            s /= 2
    for lam in poles:
        if lo < lam < hi:
            bp.append(lam)
            s = eps / 2
            while s < L / 8:
                bp += [lam - s, lam + s]
                s *= 1.5
    bp = np.unique(np.clip(bp, lo, hi))
    return bp[np.concatenate(([True], np.diff(bp) > 1e-13 * L))]


def stone_integral(handle: OperatorHandle, f: TestFunction, eps: float, order: int = 20):
    """(1/2 pi i) int f(l) (R(l + i eps) - R(l - i eps)) dl in Schur coordinates."""
    lo, hi = f.support
    poles = [e.real for e in handle.eigenvalues]
    bp = _stone_breaks(lo, hi, eps, poles)
    gx, gw = leggauss(order)
    a, b = bp[:-1], bp[1:]
    xs = (((a + b) / 2)[:, None] + ((b - a) / 2)[:, None] * gx).ravel()
    ws = (((b - a) / 2)[:, None] * gw).ravel()
    coef = ws * f(xs) / (2j * math.pi)
    return handle.resolvent_sum(xs + 1j * eps, coef) - handle.resolvent_sum(xs - 1j * eps, coef)


def default_eps_schedule(handle: OperatorHandle, f: TestFunction, levels: int = 7):
    lo, hi = f.support
    e0 = f.half_width / 8
    for c in nonreal_eigenvalues(handle):
        if lo - f.half_width < c.real < hi + f.half_width:
            e0 = min(e0, abs(c.imag) / 4)
    return [e0 / 2**k for k in range(levels)]


def stone_formula(handle: OperatorHandle, f: TestFunction, eps_schedule=None,
                  return_error: bool = False):
    """Stone-type formula extrapolated to eps -> 0 along the eps ladder."""
    eps_schedule = eps_schedule or default_eps_schedule(handle, f)
    lo, hi = f.support
    for c in nonreal_eigenvalues(handle):
        if lo <= c.real <= hi and abs(c.imag) <= max(eps_schedule):
            raise SingularShift("non-real eigenvalue closer to supp f than the largest eps")
    T, Q = handle.schur
    vals = [stone_integral(handle, f, e) for e in eps_schedule]
    scale = max(1.0, float(np.max(np.abs(vals[-1]))))
    est, err = extrapolate_checked(eps_schedule, vals, 1e-3 * scale, "Stone formula")
    out = Q @ est @ Q.conj().T
    return (out, err) if return_error else out


# ---------------------------------------------------------------------------
# Resolvent through the calculus
# ---------------------------------------------------------------------------

def complex_projector(handle: OperatorHandle) -> np.ndarray:
    """Pi_complex(H): sum of Riesz projections over all non-real eigenvalues."""
    lo = min(e.real for e in handle.eigenvalues) - 1.0
    hi = max(e.real for e in handle.eigenvalues) + 1.0
    return spectral_split(handle, (lo, hi)).projector


def resolvent_via_calculus(handle: OperatorHandle, omega: complex, check: bool = True):
    """r_omega(H) = R_H(omega)(Id - Pi_complex(H)).

    With ``check`` the reconstruction R_H = r_omega + sum (l - omega)^{-1} Pi_l
    is verified to 1e-8.
    """
    R = resolvent(handle, omega)
    n = handle.dim
    tol = _real_tol(handle)
    projs = []
    H = handle.matrix
    for c, mult, members in eigen_clusters(handle):
        if abs(c.imag) > tol:
            P = riesz_projection(handle, c, min(_cluster_radius(handle, c, members),
                                                0.5 * abs(c.imag)))
            projs.append((c, P, mult))
    Pc = sum((P for _, P, _ in projs), np.zeros((n, n), complex))
    r = R @ (np.eye(n) - Pc)
    if check:
        rec = r.copy()
        for c, P, mult in projs:
            # R_H(omega) on Ran Pi_l: (l - omega)^{-1} sum_k (-(H - l)/(l - omega))^k
            Nl = (H - c * np.eye(n)) @ P
            term = P / (c - omega)
            for k in range(mult):
                rec = rec + term
                term = -Nl @ term / (c - omega)
        resid = np.linalg.norm(rec - R, 2) / max(1.0, np.linalg.norm(R, 2))
        if resid > 1e-8:
            raise NonIdempotent(f"resolvent decomposition residual {resid:.1e}")
    return r
