"""Spectral shift function pipelines for trace-class perturbations.

Conventions: xi is normalised to 0 left of the spectrum,
Tr(f(H) - f(H0)) = int xi f' = -int xi' f, and
xi' = (1/2 pi i)(sigma(l + i0) - sigma(l - i0)) with sigma = Tr(R_0 - R_H).

Pipelines:

* TracePairing: Tr(f(H) - f(H0)) through the functional calculus;
* BoundaryValue: xi' from boundary values of sigma, eps -> 0 by extrapolation;
* LogDeterminant: xi from the jump of a continuously tracked log D_V;
* cumulative reconstruction of xi from pairings with moving mollifiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from . import funcalc
from .aax import TestFunction, standard_bump
from .errors import UnresolvablePhaseJump
from .linalg import neville_to_zero
from .operators import (OperatorHandle, OperatorKind, U0Kind, build_operator, determinant_batch,
                        rank_one_inner, trace_resolvent_diff_batch)
from . import toy_models

FLAG_OK = "ok"
FLAG_EXCLUDED = "excluded"
FLAG_WEAK = "extrapolation_weak"
TOY_EPS = 1e-10
MAX_BISECT = 60


class Pipeline(str, Enum):
    TRACE_PAIRING = "TracePairing"
    BOUNDARY_VALUE = "BoundaryValue"
    LOG_DETERMINANT = "LogDeterminant"
    CUMULATIVE = "CumulativePairing"
    CLOSED_FORM = "ClosedForm"
    CHANGE_OF_VARIABLES = "ChangeOfVariables"
    SCHRODINGER = "SchrodingerBoundary"


@dataclass
class SsfCurve:
    lambdas: np.ndarray
    xi: Optional[np.ndarray]
    derivative_xi: Optional[np.ndarray] = None
    pipeline: Pipeline = Pipeline.CLOSED_FORM
    meta: dict = field(default_factory=dict)
    flags: Optional[list] = None

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if self.lambdas.size > 1 and np.any(np.diff(self.lambdas) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.flags is None:
            self.flags = [FLAG_OK] * self.lambdas.size

    def mask_ok(self) -> np.ndarray:
        return np.array([fl == FLAG_OK for fl in self.flags])


@dataclass
class PhaseTrack:
    lambdas: np.ndarray
    raw_arg_plus: np.ndarray
    raw_arg_minus: np.ndarray
    unwrapped_plus: np.ndarray
    unwrapped_minus: np.ndarray
    log_abs_plus: np.ndarray
    log_abs_minus: np.ndarray
    start: float = -np.inf
    refinements: int = 0


# ---------------------------------------------------------------------------
# Model dispatch: sigma and D on batches of z
# ---------------------------------------------------------------------------

def spectral_scale(handleH0: OperatorHandle) -> float:
    if handleH0.kind == OperatorKind.FINITE:
        return max(1.0, handleH0.norm)
    return 1.0


def sigma_batch(handleH: OperatorHandle, handleH0: OperatorHandle, zs) -> np.ndarray:
    zs = np.asarray(zs, dtype=complex)
    if handleH.kind == OperatorKind.FINITE:
        return trace_resolvent_diff_batch(handleH, handleH0, zs)
    if handleH.kind == OperatorKind.RANK_ONE:
        d = handleH.spec.v
        if d.gamma == 0:
            return np.zeros(zs.shape, complex)
        if d.u0_kind == U0Kind.INDICATOR:
            inner = np.log(1.0 - zs) - np.log(-zs)
            dinner = 1.0 / (zs - 1.0) - 1.0 / zs
        elif d.u0_kind == U0Kind.DISJOINT:
            inner, dinner = -1.0 / zs, 1.0 / zs**2
        else:
            from .operators import rank_one_inner_d
            inner = np.array([rank_one_inner(d, z) for z in zs.ravel()]).reshape(zs.shape)
            dinner = np.array([rank_one_inner_d(d, z) for z in zs.ravel()]).reshape(zs.shape)
        return d.gamma * dinner / (1.0 + d.gamma * inner)
    raise TypeError("unsupported model for sigma_batch")


def determinant_fn(handleH0: OperatorHandle, handleH: OperatorHandle) -> Callable:
    """Vectorised z -> D_V(z)."""
    if handleH.kind == OperatorKind.FINITE:
        return lambda zs: determinant_batch(handleH0, handleH, zs)
    if handleH.kind == OperatorKind.RANK_ONE:
        d = handleH.spec.v
        if d.u0_kind == U0Kind.INDICATOR:
            return lambda zs: 1.0 + d.gamma * (np.log(1.0 - np.asarray(zs, complex))
                                               - np.log(-np.asarray(zs, complex)))
        if d.u0_kind == U0Kind.DISJOINT:
            return lambda zs: 1.0 - d.gamma / np.asarray(zs, complex)

        def D(zs):
            zs = np.asarray(zs, complex)
            return np.array([1.0 + d.gamma * rank_one_inner(d, z) for z in zs.ravel()]).reshape(zs.shape)
        return D
    raise TypeError("unsupported model for determinants")


def spectrum_points(handleH: OperatorHandle, handleH0: OperatorHandle) -> np.ndarray:
    """Real points where boundary values are singular (eigenvalues, thresholds)."""
    if handleH.kind == OperatorKind.FINITE:
        ev = np.concatenate([handleH.eigenvalues, handleH0.eigenvalues])
        return np.unique(np.round(ev.real, 14))
    if handleH.kind == OperatorKind.RANK_ONE:
        return np.array([0.0, 1.0])
    return np.array([])


# ---------------------------------------------------------------------------
# Trace pairing
# ---------------------------------------------------------------------------

def ssf_pairing(handleH: OperatorHandle, handleH0: OperatorHandle, f: TestFunction,
                method: str = "quadrature", N: Optional[int] = None) -> complex:
    """Tr(f(H) - f(H0)) = int xi f'.

    method: "quadrature" (Helffer-Sjostrand on both operators, full matrices),
    "trace" (same quadrature on the scalar trace), "spectral" (Riesz fast path).
    """
    if method == "spectral":
        return funcalc.trace_function_spectral(handleH, f) - funcalc.trace_function_spectral(handleH0, f)
    vals = []
    for h in (handleH, handleH0):
        n = 0
        if not h.is_hermitian:
            lo, hi = f.support
            from .operators import StripRegion
            n = funcalc.probe_resolvent_growth(h, StripRegion((lo, hi), f.half_width / 4), 8)
        ext = funcalc.extension_for(h, f, N, n)
        opts = funcalc.QuadratureOptions(growth_exponent=n)
        if method == "trace":
            vals.append(funcalc.trace_apply_function(h, ext, opts))
        else:
            vals.append(complex(np.trace(funcalc.apply_function(h, ext, None, opts))))
    return vals[0] - vals[1]


# ---------------------------------------------------------------------------
# Boundary values
# ---------------------------------------------------------------------------

def eps_clearance(handleH: OperatorHandle, window: Optional[tuple] = None) -> float:
    """A quarter of the smallest |Im mu| over non-real eigenvalues of H
    (restricted to Re mu in ``window``); the eps ladder must start below it
    for the boundary values to be analytic in eps over the whole ladder."""
    if handleH.kind != OperatorKind.FINITE:
        return np.inf
    tol = funcalc._real_tol(handleH)
    ims = [abs(e.imag) for e in handleH.eigenvalues
           if abs(e.imag) > tol and (window is None or window[0] <= e.real <= window[1])]
    return 0.25 * min(ims) if ims else np.inf


def default_eps_schedule(handleH0: OperatorHandle, levels: int = 7, e0: Optional[float] = None,
                         handleH: Optional[OperatorHandle] = None):
    if handleH0.kind == OperatorKind.RANK_ONE:
        return [TOY_EPS]
    if e0 is None:
        e0 = 1e-2 * spectral_scale(handleH0)
        if handleH is not None:
            e0 = min(e0, eps_clearance(handleH))
    return [e0 / 2**k for k in range(levels)]


def _pairing_eps(handleH, f: TestFunction, levels: int = 7):
    lo, hi = f.support
    e0 = min(f.half_width / 8, eps_clearance(handleH, (lo - f.half_width, hi + f.half_width)))
    return [e0 / 2**k for k in range(levels)]


def _extrapolate_grid(eps, values, atol):
    """Neville extrapolation node by node; returns (estimate, error per node)."""
    if len(eps) == 1:
        return np.asarray(values[0]), np.zeros(np.shape(values[0]))
    est = np.empty(np.shape(values[0]), dtype=complex)
    err = np.empty(np.shape(values[0]))
    V = np.asarray(values)
    for i in range(V.shape[1]):
        est[i], err[i] = neville_to_zero(eps, V[:, i])
    return est, err


def ssf_derivative_bv(handleH: OperatorHandle, handleH0: OperatorHandle, grid,
                      eps_schedule: Optional[Sequence[float]] = None, atol: float = 1e-6) -> SsfCurve:
    """xi'(l) = (1/2 pi i) lim (sigma(l + i eps) - sigma(l - i eps))."""
    grid = np.asarray(grid, dtype=float)
    eps = list(eps_schedule or default_eps_schedule(handleH0, handleH=handleH))
    vals = [(sigma_batch(handleH, handleH0, grid + 1j * e) -
             sigma_batch(handleH, handleH0, grid - 1j * e)) / (2j * math.pi) for e in eps]
    est, err = _extrapolate_grid(eps, vals, atol)
    pts = spectrum_points(handleH, handleH0)
    flags = []
    for l, e in zip(grid, err):
        if pts.size and np.min(np.abs(pts - l)) < max(eps):
            flags.append(FLAG_EXCLUDED)
        elif e > atol:
            flags.append(FLAG_WEAK)
        else:
            flags.append(FLAG_OK)
    return SsfCurve(grid, None, est, Pipeline.BOUNDARY_VALUE,
                    {"eps_schedule": eps, "max_extrapolation_error": float(np.max(err, initial=0))},
                    flags)


def _stone_panels(lo, hi, eps, pts, order=16):
    L = hi - lo
    bp = list(np.linspace(lo, hi, 9))
    for e in (lo, hi):
        s = L / 16
        while s > L * 2e-3:
            bp += [e + s, e - s]
            s /= 2
    for p in pts:
        if lo < p < hi:
            bp.append(p)
            s = eps / 2
            while s < L / 8:
                bp += [p - s, p + s]
                s *= 1.5
    bp = np.unique(np.clip(bp, lo, hi))
    bp = bp[np.concatenate(([True], np.diff(bp) > 1e-13 * L))]
    gx, gw = leggauss(order)
    a, b = bp[:-1], bp[1:]
    xs = (((a + b) / 2)[:, None] + ((b - a) / 2)[:, None] * gx).ravel()
    ws = (((b - a) / 2)[:, None] * gw).ravel()
    return xs, ws


def pairing_via_boundary_values(handleH, handleH0, f: TestFunction, eps_schedule=None):
    """-int xi' f, with xi' from boundary values; equals Tr(f(H) - f(H0))."""
    lo, hi = f.support
    eps = list(eps_schedule or _pairing_eps(handleH, f))
    pts = spectrum_points(handleH, handleH0)
    vals = []
    for e in eps:
        xs, ws = _stone_panels(lo, hi, e, pts)
        d = (sigma_batch(handleH, handleH0, xs + 1j * e) -
             sigma_batch(handleH, handleH0, xs - 1j * e)) / (2j * math.pi)
        vals.append(-np.sum(ws * f(xs) * d))
    est, err = neville_to_zero(eps, vals)
    return complex(est)


# ---------------------------------------------------------------------------
# Phase tracking
# ---------------------------------------------------------------------------

def _wrap(d):
    """Principal representative in (-pi, pi]; ties go to the smaller winding."""
    w = (d + math.pi) % (2 * math.pi) - math.pi
    return math.pi if w == -math.pi else w


def _continue(D: Callable, xa, arg_a, xb, db, depth, counter):
    if db == 0:
        raise UnresolvablePhaseJump(f"D vanishes at {xb}")
    step = _wrap(math.atan2(db.imag, db.real) - arg_a)
    if abs(step) <= math.pi / 2:
        return arg_a + step
    if depth == 0 or xb - xa < 1e-15 * max(1.0, abs(xa)):
        raise UnresolvablePhaseJump(f"phase jump {step:.2f} unresolved near {xa:.6g}")
    counter[0] += 1
    xm = 0.5 * (xa + xb)
    dm = complex(D(np.array([xm]))[0])
    arg_m = _continue(D, xa, arg_a, xm, dm, depth - 1, counter)
    return _continue(D, xm, arg_m, xb, db, depth - 1, counter)


def _lead_in(D: Callable, x_first: float, scale: float):
    """A point left of x_first where |D - 1| < 0.1, so the principal argument
    is the branch normalised to 0 at -infinity."""
    x = x_first - scale
    for _ in range(200):
        d = complex(D(np.array([x]))[0])
        if abs(d - 1.0) < 0.1:
            return x, d
        x = x_first - 2 * (x_first - x)
    raise UnresolvablePhaseJump("could not find a region with D close to 1")


def _guard_nodes(grid: np.ndarray, points, eps: float) -> np.ndarray:
    """Extra tracking nodes at spacing eps/2 within 8 eps of each spectrum point.

    Near a zero or pole at distance eps from the line the phase turns by about
    pi over a few eps; a coarse output grid could otherwise step over a full
    turn without the endpoint test noticing.
    """
    if eps is None or not len(points):
        return np.empty(0)
    lo, hi = grid[0], grid[-1]
    offs = eps * np.arange(-16, 17) / 2
    extra = (np.asarray(points, dtype=float)[:, None] + offs[None, :]).ravel()
    return extra[(extra > lo) & (extra < hi)]


def track_phase(D: Callable, grid: np.ndarray, scale: float = 1.0, guard_points=(),
                eps: Optional[float] = None):
    """Continuous argument of D along the real grid, anchored at -infinity."""
    grid = np.asarray(grid, dtype=float)
    x0, d0 = _lead_in(D, grid[0], scale)
    extra = np.empty(0)
    if grid.size:
        # the stretch from the lead-in point to the first grid node is walked
        # too: a grid starting right of the spectrum must still see its winding
        span = np.array([x0, grid[-1]])
        extra = _guard_nodes(span, guard_points, eps)
        pts = np.asarray(guard_points, dtype=float)
        if pts.size > 1:
            sweep = np.linspace(pts.min(), pts.max(), 257)
            extra = np.concatenate((extra, sweep[(sweep > x0) & (sweep < grid[-1])]))
    nodes, inverse = np.unique(np.concatenate((grid, extra)), return_inverse=True)
    vals = np.asarray(D(nodes), dtype=complex)
    xs = np.concatenate(([x0], nodes))
    ds = np.concatenate(([d0], vals))
    arg = math.atan2(d0.imag, d0.real)
    out = np.empty(nodes.size)
    counter = [0]
    for i in range(1, xs.size):
        arg = _continue(D, xs[i - 1], arg, xs[i], ds[i], MAX_BISECT, counter)
        out[i - 1] = arg
    pick = inverse[:grid.size]
    return out[pick], vals[pick], counter[0], x0


def track_determinant_phase(handleH0: OperatorHandle, handleV: OperatorHandle, grid,
                            eps: float) -> PhaseTrack:
    D = determinant_fn(handleH0, handleV)
    scale = spectral_scale(handleH0)
    pts = spectrum_points(handleV, handleH0)
    up, vp, np_, x0 = track_phase(lambda x: D(np.asarray(x) + 1j * eps), grid, scale, pts, eps)
    um, vm, nm, _ = track_phase(lambda x: D(np.asarray(x) - 1j * eps), grid, scale, pts, eps)
    return PhaseTrack(np.asarray(grid, float), np.angle(vp), np.angle(vm), up, um,
                      np.log(np.abs(vp)), np.log(np.abs(vm)), x0, np_ + nm)


def _xi_from_track(tr: PhaseTrack) -> np.ndarray:
    return ((tr.log_abs_plus - tr.log_abs_minus) +
            1j * (tr.unwrapped_plus - tr.unwrapped_minus)) / (2j * math.pi)


def ssf_via_logdet(handleH0: OperatorHandle, handleV: OperatorHandle, grid,
                   eps_schedule: Optional[Sequence[float]] = None, atol: float = 1e-6,
                   exclusions: Sequence[tuple] = ()) -> SsfCurve:
    """xi(l) = (1/2 pi i) lim (ln D(l + i eps) - ln D(l - i eps)).

    ``exclusions`` are (center, half_width) windows flagged ``excluded``.
    """
    grid = np.asarray(grid, dtype=float)
    eps = list(eps_schedule or default_eps_schedule(handleH0, handleH=handleV))
    vals = []
    refinements = 0
    for e in eps:
        tr = track_determinant_phase(handleH0, handleV, grid, e)
        refinements += tr.refinements
        vals.append(_xi_from_track(tr))
    est, err = _extrapolate_grid(eps, vals, atol)
    pts = spectrum_points(handleV, handleH0)
    flags = []
    for l, e in zip(grid, err):
        if any(abs(l - c) < w for c, w in exclusions):
            flags.append(FLAG_EXCLUDED)
        elif len(eps) > 1 and pts.size and np.min(np.abs(pts - l)) < max(eps):
            flags.append(FLAG_EXCLUDED)
        elif e > atol:
            flags.append(FLAG_WEAK)
        else:
            flags.append(FLAG_OK)
    return SsfCurve(grid, est, None, Pipeline.LOG_DETERMINANT,
                    {"eps_schedule": eps, "anchor": "-inf (arg D -> 0)",
                     "phase_refinements": refinements,
                     "exclusions": [list(x) for x in exclusions]}, flags)


def pairing_via_logdet(handleH0, handleH, f: TestFunction, eps_schedule=None) -> complex:
    """int xi f' with xi from the tracked log-determinant; equals Tr(f(H) - f(H0))."""
    lo, hi = f.support
    eps = list(eps_schedule or _pairing_eps(handleH, f))
    pts = spectrum_points(handleH, handleH0)
    D = determinant_fn(handleH0, handleH)
    scale = spectral_scale(handleH0)
    vals = []
    for e in eps:
        xs, ws = _stone_panels(lo, hi, e, pts)
        order = np.argsort(xs)
        xs, ws = xs[order], ws[order]
        up, vp, _, _ = track_phase(lambda x: D(np.asarray(x) + 1j * e), xs, scale, pts, e)
        um, vm, _, _ = track_phase(lambda x: D(np.asarray(x) - 1j * e), xs, scale, pts, e)
        xi = ((np.log(np.abs(vp)) - np.log(np.abs(vm))) + 1j * (up - um)) / (2j * math.pi)
        vals.append(np.sum(ws * xi * f.eval_derivative(1, xs)))
    est, _ = neville_to_zero(eps, vals)
    return complex(est)


# ---------------------------------------------------------------------------
# Cumulative reconstruction
# ---------------------------------------------------------------------------

def normalized_bump(half_width: float) -> tuple:
    """(unit-mass bump centred at 0, its mass before normalisation)."""
    b = standard_bump(0.0, half_width)
    mass = quad(lambda x: b(np.array([x]))[0].real, -half_width, half_width,
                epsabs=0, epsrel=1e-13, limit=200)[0]
    return b.scale(1.0 / mass), mass


def ssf_cumulative_from_pairings(handleH: OperatorHandle, handleH0: OperatorHandle, grid,
                                 width: Optional[float] = None, method: str = "spectral",
                                 anchor: Optional[float] = None) -> SsfCurve:
    """xi smoothed at scale ``width``: xi_w(c) = -int_{-inf}^c Tr(rho(H - t) - rho(H0 - t)) dt.

    rho is a unit-mass bump of half-width ``width``; xi_w = xi * rho, so step
    locations are resolved to ``width`` and plateaus are exact.
    """
    grid = np.asarray(grid, dtype=float)
    span = grid[-1] - grid[0] if grid.size > 1 else 1.0
    width = 1e-2 * span if width is None else width
    rho, _ = normalized_bump(width)
    pts = spectrum_points(handleH, handleH0)
    left = (pts.min() if pts.size else grid[0]) - 2 * width
    if anchor is not None:
        left = min(left, anchor)

    if method == "spectral":
        # Tr rho(H - t) = sum of rho(mu - t) over real eigenvalues with multiplicity
        tol = funcalc._real_tol(handleH0)
        real_parts = []
        for h, sign in ((handleH, 1.0), (handleH0, -1.0)):
            for c, mult, _ in funcalc.eigen_clusters(h):
                if abs(c.imag) <= max(tol, funcalc._real_tol(h)):
                    real_parts.append((c.real, sign * mult))

        def T(ts):
            out = np.zeros(ts.size, dtype=complex)
            for mu, w in real_parts:
                out += w * rho(mu - ts)
            return out
    else:
        def T(ts):
            out = np.empty(ts.size, dtype=complex)
            for i, t in enumerate(ts):
                out[i] = ssf_pairing(handleH, handleH0, rho.shifted(t), method=method)
            return out

    gx, gw = leggauss(16)
    xi = np.zeros(grid.size, dtype=complex)
    acc = 0j
    prev = left
    for i, l in enumerate(grid):
        if l > prev:
            n_pan = max(1, int(math.ceil((l - prev) / (width / 4))))
            edges = np.linspace(prev, l, n_pan + 1)
            a, b = edges[:-1], edges[1:]
            ts = (((a + b) / 2)[:, None] + ((b - a) / 2)[:, None] * gx).ravel()
            ws = (((b - a) / 2)[:, None] * gw).ravel()
            # only bumps touching the spectrum contribute
            keep = np.zeros(ts.size, bool)
            for p in pts:
                keep |= np.abs(ts - p) < width
            if np.any(keep):
                acc -= np.sum(ws[keep] * T(ts[keep]))
            prev = l
        xi[i] = acc
    return SsfCurve(grid, xi, None, Pipeline.CUMULATIVE,
                    {"mollifier_half_width": float(width), "method": method, "anchor": float(left)})


# ---------------------------------------------------------------------------
# Adjoint symmetry
# ---------------------------------------------------------------------------

def adjoint_handle(handleH: OperatorHandle) -> OperatorHandle:
    return build_operator(handleH.spec.adjoint())


def adjoint_ssf_check(handleH: OperatorHandle, handleH0: OperatorHandle, grid,
                      pipeline: str = "logdet") -> float:
    """max over the grid of |xi(l; H*, H0) - conj xi(l; H, H0)|."""
    hA = adjoint_handle(handleH)
    if pipeline == "logdet":
        a = ssf_via_logdet(handleH0, handleH, grid)
        b = ssf_via_logdet(handleH0, hA, grid)
    elif pipeline == "cumulative":
        a = ssf_cumulative_from_pairings(handleH, handleH0, grid)
        b = ssf_cumulative_from_pairings(hA, handleH0, grid)
    else:
        raise ValueError(f"unknown pipeline {pipeline}")
    mask = a.mask_ok() & b.mask_ok()
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(b.xi[mask] - np.conj(a.xi[mask]))))


def closed_form_curve(beta: float, grid, window: float = toy_models.SINGULAR_WINDOW) -> SsfCurve:
    """The explicit xi for u0 = 1_[0,1], gamma = i beta, with exclusions."""
    grid = np.asarray(grid, dtype=float)
    flags = []
    keep = np.ones(grid.size, bool)
    crit = math.isclose(abs(beta), toy_models.BETA_CRIT, abs_tol=1e-15)
    for i, l in enumerate(grid):
        bad = l in (0.0, 1.0) or (crit and abs(l - 0.5) < window)
        flags.append(FLAG_EXCLUDED if bad else FLAG_OK)
        keep[i] = not bad
    xi = np.full(grid.size, np.nan + 0j)
    xi[keep] = toy_models.interacting_ssf_closed_form(beta, grid[keep])
    return SsfCurve(grid, xi, None, Pipeline.CLOSED_FORM, {"beta": beta}, flags)
