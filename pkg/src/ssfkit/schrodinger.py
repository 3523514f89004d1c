"""3D Schrodinger operators -Delta + V with compactly supported complex V.

Everything goes through the Birman-Schwinger operator T0(z) = C R0(z) C W
with C = 1 on supp V and W = V, whose kernel is

    K0(z)(x, y) = (1/4pi) e^{i k |x-y|} / |x-y| V(y),   k = sqrt(z), Im k >= 0,

and its z-derivative T0'(z) with kernel (i / (8 pi k)) e^{i k |x-y|} V(y).
Boundary values l +/- i0 use k = +/- sqrt(l).

Discretisation: tensor Gauss-Legendre nodes on the cube [-R, R]^3, nodes
with V = 0 dropped (the kernel carries a factor V(y)), and the symmetrised
matrix M_ij = sqrt(w_i) K(x_i, x_j) sqrt(w_j), so traces, products and
singular values of M approximate those of the operator.  The 1/r singularity
is handled by subtraction: e^{ikr}/r = (e^{ikr} - 1)/r + 1/r, the first part
is bounded (value ik on the diagonal) and the diagonal weight of the 1/r
part is fixed so that the constant function is integrated exactly against
1/|x_i - y| over the cube (closed-form Newtonian potential of a box).

Sign convention: sigma(z) = Tr(R_0 - R_H) = Tr(T0'(z) (I + T0(z))^{-1}) and
xi' = (1/2 pi i)(sigma(l + i0) - sigma(l - i0)).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .aax import smooth_step
from .errors import (BranchViolation, ConfigError, NearSingularity, OrderUnresolved,
                     ResolutionTooCoarse, ZeroMeanPotential)
from .linalg import smallest_singular_value
from .ssf_trace import FLAG_EXCLUDED, FLAG_OK, Pipeline, SsfCurve

SINGULAR_THRESHOLD = 0.05
IDENTITY_TOL = 1e-10


class WeightKind(str, Enum):
    COMPACT = "CompactCutoff"
    POLYNOMIAL = "PolynomialWeight"


class ProfileKind(str, Enum):
    BUMP = "RadialBump"
    OSCILLATING = "GaussianOscillation"


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Radial potential V(x) = amplitude * g(|x| / radius).

    g(s) = exp(-(s / width)^power) * cutoff(s) (times e^{i q radius s} for the
    oscillating family), where the cutoff is a C-infinity step from 1 on
    s <= cutoff_start to 0 at s = 1.  power = 2 is the plain Gaussian; the
    default flat-top power 4 is better resolved by tensor quadrature.
    V vanishes for |x| >= radius, so the decay bound |V| <= M <x>^{-delta} holds for every delta.
    """

    amplitude: complex = 1.0
    radius: float = 1.0
    width: float = 0.5
    cutoff_start: float = 0.85
    kind: ProfileKind = ProfileKind.BUMP
    q: float = 0.0
    weight_kind: WeightKind = WeightKind.COMPACT
    delta: float = 4.0
    power: float = 4.0

    def __post_init__(self):
        if not (self.radius > 0 and self.width > 0 and self.power > 0 and 0 < self.cutoff_start < 1):
            raise ConfigError("invalid potential parameters")
        if not np.isfinite(complex(self.amplitude)):
            raise ConfigError("amplitude must be finite")
        if self.delta <= 3:
            raise ConfigError("short-range condition needs delta > 3")
        if self.weight_kind != WeightKind.COMPACT:
            raise ConfigError("only compactly supported potentials (C = 1 on supp V) are implemented")

    def profile(self, s):
        """g(s) for s = |x| / radius (vectorised)."""
        s = np.asarray(s, dtype=float)
        u = np.clip((1.0 - s) / (1.0 - self.cutoff_start), 0.0, 1.0)
        g = np.exp(-(s / self.width) ** self.power) * smooth_step(u)
        g = np.where(s < 1.0, g, 0.0)
        if self.kind == ProfileKind.OSCILLATING:
            return g * np.exp(1j * self.q * self.radius * s)
        return g + 0j

    def radial(self, r):
        return complex(self.amplitude) * self.profile(np.asarray(r) / self.radius)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.radial(np.linalg.norm(x, axis=-1))

    def integral(self) -> complex:
        """int V dx = 4 pi int V(r) r^2 dr."""
        if self.amplitude == 0:
            return 0j
        R = self.radius
        re = quad(lambda r: (self.radial(r) * r * r).real, 0, R, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        im = quad(lambda r: (self.radial(r) * r * r).imag, 0, R, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        return 4 * math.pi * (re + 1j * im)

    def sup_norm(self) -> float:
        rs = np.linspace(0, self.radius, 2001)
        return float(np.max(np.abs(self.radial(rs))))

    def conjugate(self) -> "PotentialSpec":
        """The potential conj(V) (the adjoint H* = -Delta + conj V)."""
        if self.kind == ProfileKind.OSCILLATING:
            return replace(self, amplitude=np.conj(complex(self.amplitude)), q=-self.q)
        return replace(self, amplitude=np.conj(complex(self.amplitude)))

    def scaled(self, g: complex) -> "PotentialSpec":
        return replace(self, amplitude=complex(self.amplitude) * g)

    def normalized(self, target: complex = 1.0) -> "PotentialSpec":
        """Same shape with int V = target."""
        base = replace(self, amplitude=1.0)
        return replace(self, amplitude=complex(target) / base.integral())

    def check_decay(self, M: Optional[float] = None) -> bool:
        M = self.sup_norm() * (1 + self.radius ** 2) ** (self.delta / 2) if M is None else M
        rs = np.linspace(0, self.radius, 501)
        return bool(np.all(np.abs(self.radial(rs)) <= M * (1 + rs ** 2) ** (-self.delta / 2) + 1e-15))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _box_primitive(u, v, w):
    r = np.sqrt(u * u + v * v + w * w)
    out = v * w * np.log(u + r) + u * w * np.log(v + r) + u * v * np.log(w + r)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = out - 0.5 * u * u * np.where(u != 0, np.arctan(v * w / (u * r)), 0.0)
        out = out - 0.5 * v * v * np.where(v != 0, np.arctan(u * w / (v * r)), 0.0)
        out = out - 0.5 * w * w * np.where(w != 0, np.arctan(u * v / (w * r)), 0.0)
    return out


def box_newton_potential(points, half: float) -> np.ndarray:
    """int over [-half, half]^3 of dy / |p - y| for interior points p."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(p.shape[0])
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                u = sx * half - p[:, 0]
                v = sy * half - p[:, 1]
                w = sz * half - p[:, 2]
                total += sx * sy * sz * _box_primitive(u, v, w)
    return total


# monomials (y - x)^alpha, |alpha| <= 2, used by the local correction
_EXPS = np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (0, 2, 0),
                  (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)])
_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _radial_primitive(m: int, a, P):
    """int_0^P rho^m / sqrt(a^2 + rho^2) d rho for m = 1, 2, 3."""
    S = np.sqrt(a * a + P * P)
    if m == 1:
        return S - a
    if m == 2:
        return 0.5 * (P * S - a * a * np.arcsinh(P / a))
    return S ** 3 / 3 - a * a * S + 2 * a ** 3 / 3


def _face_integral(a, b, c, ea, eb, ec, order: int = 12, levels: int = 8):
    """int_0^b int_0^c a^ea v^eb w^ec / sqrt(a^2 + v^2 + w^2) dv dw (vectorised).

    The rectangle is split into two triangles at the origin; the radial part is
    exact and the far-edge parameter uses geometrically graded Gauss panels, so
    thin rectangles (a, b << c) stay accurate.
    """
    gx, gw = leggauss(order)
    edges = np.concatenate([[0.0], 4.0 ** -np.arange(levels, -1, -1)])
    lo, hi = edges[:-1], edges[1:]
    u = (((lo + hi) / 2)[:, None] + ((hi - lo) / 2)[:, None] * gx).ravel()
    uw = (((hi - lo) / 2)[:, None] * gw).ravel()
    m = eb + ec + 1
    out = np.zeros_like(a)
    for far, span, p_far, p_span in ((b, c, eb, ec), (c, b, ec, eb)):
        t = span[:, None] * u
        rho = np.sqrt(far[:, None] ** 2 + t * t)
        jac = far[:, None] * span[:, None] / rho ** 2
        val = (_radial_primitive(m, a[:, None], rho) * (far[:, None] / rho) ** p_far
               * (t / rho) ** p_span * jac)
        out = out + val @ uw
    return a ** ea * out


def _corner_moment(a, e):
    # int over [0,a1]x[0,a2]x[0,a3] of t^e / |t|: the integrand is homogeneous of
    # degree |e| - 1, so the volume integral is a sum of far-face integrals
    tot = 0.0
    for k in range(3):
        o1, o2 = [j for j in range(3) if j != k]
        tot = tot + a[:, k] * _face_integral(a[:, k], a[:, o1], a[:, o2], e[k], e[o1], e[o2])
    return tot / (e.sum() + 2)


def box_moments(points, half: float) -> np.ndarray:
    """int over [-half, half]^3 of (y - p)^alpha / |y - p| dy for |alpha| <= 2.

    Columns follow 1, u1, u2, u3, u1^2, u2^2, u3^2, u1u2, u1u3, u2u3.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((p.shape[0], len(_EXPS)))
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                sgn = np.array([sx, sy, sz])
                a = half - sgn * p
                for q, e in enumerate(_EXPS):
                    out[:, q] += np.prod(sgn ** e) * _corner_moment(a, e)
    return out


@dataclass(frozen=True)
class _Geometry:
    nodes: np.ndarray
    weights: np.ndarray
    vvals: np.ndarray
    dist: np.ndarray
    inv_dist: np.ndarray
    wcoul: np.ndarray      # corrected weights: sum_j wcoul_ij f(y_j) ~ int f(y) / |x_i - y| dy
    box_half: float
    n_per_dim: int


def _quadrature_moments(pts, allp, allw):
    # sum_{j != i} w_j (y_j - x_i)^alpha / r_ij over the whole tensor grid
    cols = [np.ones(allp.shape[0])] + [allp[:, a] for a in range(3)]
    cols += [allp[:, a] * allp[:, b] for a, b in _PAIRS]
    C = np.stack(cols, axis=1) * allw[:, None]
    G = np.zeros((pts.shape[0], C.shape[1]))
    for k in range(0, pts.shape[0], 512):
        d = np.sqrt(((pts[k:k + 512, None, :] - allp[None, :, :]) ** 2).sum(-1))
        with np.errstate(divide="ignore"):
            inv = np.where(d > 0, 1.0 / d, 0.0)
        G[k:k + 512] = inv @ C
    X = pts
    Q = np.empty_like(G)
    Q[:, 0] = G[:, 0]
    for a in range(3):
        Q[:, 1 + a] = G[:, 1 + a] - X[:, a] * G[:, 0]
    for q, (a, b) in enumerate(_PAIRS):
        Q[:, 4 + q] = (G[:, 4 + q] - X[:, a] * G[:, 1 + b] - X[:, b] * G[:, 1 + a]
                       + X[:, a] * X[:, b] * G[:, 0])
    return Q


@lru_cache(maxsize=8)
def _geometry(pot: PotentialSpec, n: int) -> _Geometry:
    """Tensor Gauss-Legendre grid on the cube [-R, R]^3 with locally corrected
    weights for the 1/r singularity.

    For each node x_i the plain weights w_j / r_ij (j != i) are kept and a
    correction on the 3x3x3 index stencil around x_i is added, chosen (minimum
    norm) so that the rule is exact for (y - x_i)^alpha, |alpha| <= 2, over the
    cube.  Nodes where V vanishes are dropped afterwards.
    """
    if n < 3:
        raise ResolutionTooCoarse("need at least 3 nodes per dimension")
    R = pot.radius
    gx, gw = leggauss(n)
    x, w = R * gx, R * gw
    idx = np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"),
                   axis=-1).reshape(-1, 3)
    allp, allw = x[idx], w[idx].prod(axis=1)
    vv = pot(allp)
    keep = np.nonzero(np.abs(vv) > 0)[0]
    pos = -np.ones(n ** 3, dtype=int)
    pos[keep] = np.arange(keep.size)
    pts, wts, vk = allp[keep], allw[keep], vv[keep]
    N = keep.size

    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    with np.errstate(divide="ignore"):
        inv_dist = np.where(dist > 0, 1.0 / dist, 0.0)
    wcoul = inv_dist * wts[None, :]
    if N:
        defect = box_moments(pts, R) - _quadrature_moments(pts, allp, allw)
        off = np.array([-1, 0, 1])
        st = np.stack(np.meshgrid(off, off, off, indexing="ij"), axis=-1).reshape(-1, 3)
        centre = np.clip(idx[keep], 1, n - 2)
        sidx = centre[:, None, :] + st[None]
        flat = (sidx[..., 0] * n + sidx[..., 1]) * n + sidx[..., 2]
        d = allp[flat] - pts[:, None, :]
        h = np.abs(d).max(axis=(1, 2))
        d = d / h[:, None, None]
        P = np.prod(d[:, None, :, :] ** _EXPS[None, :, None, :], axis=-1)
        rhs = defect / h[:, None] ** _EXPS.sum(axis=1)[None, :]
        # kinked densities r and r (y - x)_a: the plain rule misses exactly the
        # self weight w_i for the first and nothing for the second
        rn = np.linalg.norm(d, axis=-1)
        P = np.concatenate([P, rn[:, None, :], rn[:, None, :] * d.transpose(0, 2, 1)], axis=1)
        rhs = np.concatenate([rhs, (wts / h)[:, None], np.zeros((N, 3))], axis=1)
        lam = np.linalg.solve(P @ P.transpose(0, 2, 1), rhs[..., None])
        corr = (P.transpose(0, 2, 1) @ lam)[..., 0]
        cols = pos[flat]
        ok = cols >= 0
        rows = np.broadcast_to(np.arange(N)[:, None], cols.shape)
        np.add.at(wcoul, (rows[ok], cols[ok]), corr[ok])
    return _Geometry(pts, wts, vk, dist, inv_dist, wcoul, R, n)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Boundary:
    lam: float
    side: int

    def __post_init__(self):
        if self.side not in (1, -1):
            raise ConfigError("side must be +1 or -1")
        if not self.lam > 0:
            raise BranchViolation("boundary values need lambda > 0")

    @property
    def z(self) -> complex:
        return complex(self.lam)


def wavenumber(z_or_boundary) -> complex:
    """k = sqrt(z) with Im k > 0, or +/- sqrt(l) on the boundary l +/- i0."""
    if isinstance(z_or_boundary, Boundary):
        return z_or_boundary.side * math.sqrt(z_or_boundary.lam) + 0j
    if isinstance(z_or_boundary, tuple):
        return wavenumber(Boundary(float(z_or_boundary[0]), int(z_or_boundary[1])))
    z = complex(z_or_boundary)
    if z.imag == 0 and z.real >= 0:
        raise BranchViolation("z on [0, inf) needs a boundary side")
    k = np.sqrt(z)
    if k.imag < 0:
        k = -k
    if k.imag <= 0:
        raise BranchViolation("Im sqrt(z) must be positive")
    return complex(k)


@dataclass(frozen=True)
class DiscretizedKernel:
    nodes: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    z: object
    derivative: bool = False

    @property
    def size(self) -> int:
        return self.weights.size

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def identity_trace(self) -> float:
        """Weighted trace of the identity kernel, i.e. the total weight."""
        return float(np.sum(self.weights))

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def norm(self) -> float:
        if self.size == 0:
            return 0.0
        return float(np.linalg.norm(self.matrix, 2))

    def determinant(self) -> complex:
        return complex(np.linalg.det(np.eye(self.size) + self.matrix))

    def smin_shifted(self) -> float:
        """Smallest singular value of I + M."""
        if self.size == 0:
            return 1.0
        return smallest_singular_value(np.eye(self.size) + self.matrix)


def _check_resolution(geo: _Geometry, k: complex):
    # about 3 nodes per wavelength across the cube at the centre spacing
    if geo.n_per_dim < 4:
        raise ResolutionTooCoarse("at least 4 nodes per dimension are required")
    h = 2 * geo.box_half * math.pi / (2 * geo.n_per_dim)
    if abs(k.real) * h > 2 * math.pi / 3:
        raise ResolutionTooCoarse(f"|Re k| = {abs(k.real):.3g} not resolved by {geo.n_per_dim} nodes")


def discretize_T0(pot: PotentialSpec, resolution: int, z_or_boundary) -> DiscretizedKernel:
    k = wavenumber(z_or_boundary)
    geo = _geometry(pot, int(resolution))
    _check_resolution(geo, k)
    sw = np.sqrt(geo.weights)
    # e^{ikr}/r = cos(kr)/r + i sin(kr)/r: the first factor is smooth times 1/r
    # (corrected weights), the second is smooth with limit k at r = 0
    kr = k * geo.dist
    W = np.cos(kr) * geo.wcoul
    S = 1j * np.sin(kr) * geo.inv_dist * geo.weights[None, :]
    S[np.diag_indices_from(S)] = 1j * k * geo.weights
    W = W + S
    M = (sw[:, None] * W * (geo.vvals / sw)[None, :]) / (4 * math.pi)
    return DiscretizedKernel(geo.nodes, geo.weights, M, z_or_boundary)


def discretize_T0_derivative(pot: PotentialSpec, resolution: int, z_or_boundary) -> DiscretizedKernel:
    """dT0/dz: kernel (i / (8 pi k)) e^{ikr} V(y), bounded."""
    k = wavenumber(z_or_boundary)
    geo = _geometry(pot, int(resolution))
    _check_resolution(geo, k)
    sw = np.sqrt(geo.weights)
    E = np.exp(1j * k * geo.dist)
    M = (1j / (8 * math.pi * k)) * sw[:, None] * E * (sw * geo.vvals)[None, :]
    return DiscretizedKernel(geo.nodes, geo.weights, M, z_or_boundary, derivative=True)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass
class TracePair:
    quadrature: complex
    reference: complex

    @property
    def abs_error(self) -> float:
        return abs(self.quadrature - self.reference)

    @property
    def rel_error(self) -> float:
        return self.abs_error / max(abs(self.reference), 1e-300)


def trace_jump_t0prime(pot: PotentialSpec, lam: float, resolution: int = 24) -> TracePair:
    """Tr(T0'(l + i0) - T0'(l - i0)) by quadrature vs i / (4 pi sqrt l) int V."""
    if lam <= 0:
        raise BranchViolation("lambda must be positive")
    plus = discretize_T0_derivative(pot, resolution, Boundary(lam, 1)).trace()
    minus = discretize_T0_derivative(pot, resolution, Boundary(lam, -1)).trace()
    ref = 1j / (4 * math.pi * math.sqrt(lam)) * pot.integral()
    return TracePair(complex(plus - minus), complex(ref))


def radial_double_integral(pot: PotentialSpec, a: complex, panels: int = 24, order: int = 24) -> complex:
    """int int V(x) V(y) e^{i a |x-y|} / |x-y| dx dy for radial V.

    The angular integral is done in closed form:
    8 pi^2 int int V(r) V(s) r s (e^{ia(r+s)} - e^{ia|r-s|}) / (ia) dr ds
    (the bracket / (ia) tends to 2 min(r, s) as a -> 0).
    """
    R = pot.radius
    gx, gw = leggauss(order)
    edges = np.linspace(0.0, R, panels + 1)
    a0, b0 = edges[:-1], edges[1:]
    rs = (((a0 + b0) / 2)[:, None] + ((b0 - a0) / 2)[:, None] * gx).ravel()
    rw = (((b0 - a0) / 2)[:, None] * gw).ravel()

    def bracket(r, s):
        if a == 0:
            return 2 * np.minimum(r, s) + 0j
        return (np.exp(1j * a * (r + s)) - np.exp(1j * a * np.abs(r - s))) / (1j * a)

    total = 0j
    Vr = pot.radial(rs)
    for r, w, vr in zip(rs, rw, Vr):
        if vr == 0:
            continue
        # inner integral over s split at s = r (kink of |r - s|)
        acc = 0j
        for lo, hi in ((0.0, r), (r, R)):
            if hi <= lo:
                continue
            nsub = max(1, int(math.ceil((hi - lo) / (R / panels))))
            e = np.linspace(lo, hi, nsub + 1)
            s = (((e[:-1] + e[1:]) / 2)[:, None] + ((e[1:] - e[:-1]) / 2)[:, None] * gx).ravel()
            sw = (((e[1:] - e[:-1]) / 2)[:, None] * gw).ravel()
            acc += np.sum(sw * pot.radial(s) * s * bracket(r, s))
        total += w * vr * r * acc
    return 8 * math.pi ** 2 * total


def trace_t0prime_t0(pot: PotentialSpec, lam: float, side: int, resolution: int = 20,
                     tol: float = 1e-3, strict: bool = True) -> TracePair:
    """Tr(T0'(l +/- i0) T0(l +/- i0)): Nystrom matrix trace vs the radial reduction of
    +/- (i / (32 pi^2 sqrt l)) int int V V e^{+/- 2i sqrt(l) |x-y|} / |x-y|."""
    b = Boundary(lam, side)
    M1 = discretize_T0_derivative(pot, resolution, b).matrix
    M0 = discretize_T0(pot, resolution, b).matrix
    quadv = complex(np.sum(M1 * M0.T))
    k = wavenumber(b)
    ref = 1j / (32 * math.pi ** 2 * k) * radial_double_integral(pot, 2 * k)
    out = TracePair(quadv, complex(ref))
    if strict and out.rel_error > tol and out.abs_error > 1e-14:
        raise ResolutionTooCoarse(f"matrix trace vs radial oracle: {out.rel_error:.2e} > {tol:.1e}")
    return out


@dataclass
class SigmaValue:
    value: complex
    id_trace1: complex
    id_trace2: complex
    id_trace3: complex
    smin: float

    @property
    def identity_residual(self) -> float:
        vals = (self.id_trace1, self.id_trace2, self.id_trace3)
        scale = max(1e-300, max(abs(v) for v in vals))
        return max(abs(a - b) for a in vals for b in vals) / max(scale, 1.0)


def _sigma_from_matrices(M0: np.ndarray, M1: np.ndarray, full: bool):
    n = M0.shape[0]
    A = np.eye(n) + M0
    lu = sla.lu_factor(A, check_finite=False)
    smin = smallest_singular_value(A, lu=lu)
    s1 = complex(np.trace(sla.lu_solve(lu, M1, check_finite=False)))
    if not full:
        return s1, s1, s1, smin
    G = sla.lu_solve(lu, M0, check_finite=False)          # (I + T0)^{-1} T0 = C R_H C W
    t1 = np.trace(M1)
    s2 = complex(t1 - np.sum(M1 * G.T))
    s3 = complex(t1 - np.sum(M1 * M0.T) + np.sum(M1 * (G @ M0).T))
    return s1, s2, s3, smin


def sigma_boundary(pot: PotentialSpec, lam: float, side: int, resolution: int = 16,
                   full: bool = True, threshold: float = 1e-6) -> SigmaValue:
    """sigma(l +/- i0) = Tr(T0' (I + T0)^{-1}) and the two equivalent forms

        Tr T0' - Tr(T0' (I + T0)^{-1} T0)
        Tr T0' - Tr(T0' T0) + Tr(T0' [C R_H C W] T0).
    """
    if pot.amplitude == 0:
        return SigmaValue(0j, 0j, 0j, 0j, 1.0)
    b = Boundary(lam, side)
    M0 = discretize_T0(pot, resolution, b).matrix
    M1 = discretize_T0_derivative(pot, resolution, b).matrix
    s1, s2, s3, smin = _sigma_from_matrices(M0, M1, full)
    if smin < threshold:
        raise NearSingularity(f"I + T0 nearly singular at {lam} ({'+' if side > 0 else '-'}), s_min = {smin:.2e}")
    return SigmaValue(s1, s1, s2, s3, smin)


def neumann_sigma(pot: PotentialSpec, lam: float, side: int, resolution: int, K: int):
    """sum_{k <= K} (-1)^k Tr(T0' T0^k) and the remainder bound
    ||T0||^{K+1} / (1 - ||T0||) * ||T0'||_1-scale."""
    b = Boundary(lam, side)
    M0 = discretize_T0(pot, resolution, b).matrix
    M1 = discretize_T0_derivative(pot, resolution, b).matrix
    P = M1.copy()
    total = 0j
    for k in range(K + 1):
        total += (-1) ** k * np.trace(P)
        P = P @ M0
    nt = np.linalg.norm(M0, 2)
    scale = np.sum(np.linalg.svd(M1, compute_uv=False))
    bound = nt ** (K + 1) / (1 - nt) * scale if nt < 1 else np.inf
    return complex(total), float(bound), float(nt)


# ---------------------------------------------------------------------------
# SSF derivative on the essential spectrum
# ---------------------------------------------------------------------------

def xi_prime_essential(pot: PotentialSpec, grid, resolution: int = 12,
                       threshold: float = SINGULAR_THRESHOLD) -> SsfCurve:
    """xi'(l) = (1/2 pi i)(sigma(l + i0) - sigma(l - i0)); points where I + T0
    is nearly singular on either side are flagged ``excluded``."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0):
        raise BranchViolation("the essential-spectrum grid must be positive")
    dxi = np.zeros(grid.size, dtype=complex)
    flags = [FLAG_OK] * grid.size
    smins = []
    if pot.amplitude != 0:
        for i, lam in enumerate(grid):
            sp = sigma_boundary(pot, lam, 1, resolution, full=False, threshold=0.0)
            sm = sigma_boundary(pot, lam, -1, resolution, full=False, threshold=0.0)
            smins.append(min(sp.smin, sm.smin))
            if min(sp.smin, sm.smin) < threshold:
                flags[i] = FLAG_EXCLUDED
                dxi[i] = np.nan
                continue
            dxi[i] = (sp.value - sm.value) / (2j * math.pi)
    return SsfCurve(grid, None, dxi, Pipeline.SCHRODINGER,
                    {"resolution": resolution, "threshold": threshold,
                     "min_smin": float(min(smins)) if smins else 1.0,
                     "tr2_assumed": True}, flags)


# ---------------------------------------------------------------------------
# Spectral singularities
# ---------------------------------------------------------------------------

@dataclass
class SingularityEntry:
    lambda0: float
    side: str
    min_singular_value: float
    order_estimate: object
    detection_margin: float
    confirmed: bool = True


@dataclass
class SingularityReport:
    entries: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"entries": [asdict(e) for e in self.entries], "meta": self.meta},
                          indent=2, sort_keys=True, default=str)


def boundary_smin(pot: PotentialSpec, lam: float, side: int, resolution: int) -> float:
    return discretize_T0(pot, resolution, Boundary(lam, side)).smin_shifted()


def scan_singularities(pot: PotentialSpec, lambda_range, resolution: int = 8, n: int = 41,
                       threshold: float = SINGULAR_THRESHOLD, order: bool = True,
                       confirm: bool = True) -> SingularityReport:
    """Local minima of s_min(I + T0(l +/- i0)) below ``threshold``, refined by
    bounded scalar minimisation; + side is outgoing, - side incoming.

    With ``confirm`` each hit is re-minimised at twice the resolution and marked
    confirmed if it stays below the threshold there.
    """
    lo, hi = lambda_range
    if lo <= 0:
        raise BranchViolation("scan range must lie in (0, inf)")
    report = SingularityReport(meta={"resolution": resolution, "threshold": threshold,
                                     "range": [float(lo), float(hi)], "n": n})
    if pot.amplitude == 0:
        return report
    grid = np.linspace(lo, hi, n)
    step = grid[1] - grid[0] if n > 1 else 1.0
    for side, name in ((1, "Outgoing"), (-1, "Incoming")):
        s = np.array([boundary_smin(pot, l, side, resolution) for l in grid])
        for i in range(n):
            left = s[i - 1] if i > 0 else np.inf
            right = s[i + 1] if i < n - 1 else np.inf
            if not (s[i] <= left and s[i] <= right and s[i] < 2 * threshold):
                continue
            a = grid[max(i - 1, 0)]
            b = grid[min(i + 1, n - 1)]
            res = minimize_scalar(lambda l: boundary_smin(pot, l, side, resolution),
                                  bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-10 * max(1.0, hi)})
            l0, smin = float(res.x), float(res.fun)
            if smin >= threshold:
                continue
            est = estimate_order(pot, l0, side, resolution) if order else None
            ok = True
            if confirm:
                fine = minimize_scalar(lambda l: boundary_smin(pot, l, side, 2 * resolution),
                                       bounds=(max(l0 - step, lo), min(l0 + step, hi)),
                                       method="bounded", options={"xatol": 1e-8 * max(1.0, hi)})
                ok = bool(fine.fun < threshold)
            report.entries.append(SingularityEntry(l0, name, smin, est, float(threshold - smin), ok))
    report.entries.sort(key=lambda e: e.lambda0)
    return report


def estimate_order(pot: PotentialSpec, lambda0: float, side, resolution: int = 8,
                   radii: Optional[Sequence[float]] = None) -> int:
    """Smallest n with r^n ||(I + T0(l0 + r e^{i theta}))^{-1}|| bounded as r -> 0
    on the singular side, from a log-log fit with margin 0.2."""
    s = side if side in (1, -1) else (1 if str(side).lower().startswith("out") else -1)
    scale = max(1.0, abs(lambda0))
    radii = np.geomspace(1e-3, 1e-6, 10) * scale if radii is None else np.asarray(radii)
    thetas = s * np.array([math.pi / 4, math.pi / 2, 3 * math.pi / 4])
    norms = []
    for r in radii:
        vals = []
        for t in thetas:
            z = lambda0 + r * np.exp(1j * t)
            vals.append(1.0 / discretize_T0(pot, resolution, z).smin_shifted())
        norms.append(max(vals))
    lr, ln = np.log(radii), np.log(norms)
    slope = np.polyfit(lr, ln, 1)[0]
    local = np.diff(ln) / np.diff(lr)
    if np.max(np.abs(local[-4:] - slope)) > 0.3:
        raise OrderUnresolved(f"unstable slope fit near {lambda0} (slopes {local})")
    return max(0, int(math.ceil(-slope - 0.2)))


def tune_singular_coupling(pot: PotentialSpec, lam0: float, side: int = 1,
                           resolution: int = 8) -> PotentialSpec:
    """Scale V by g so that -1 is an eigenvalue of g T0(l0 +/- i0) at this resolution.

    I + g T0 is singular iff -1/g is an eigenvalue of T0; the eigenvalue of
    largest modulus gives the weakest such coupling."""
    M = discretize_T0(pot, resolution, Boundary(lam0, side)).matrix
    mu = np.linalg.eigvals(M)
    top = mu[np.argmax(np.abs(mu))]
    return pot.scaled(-1.0 / top)


# ---------------------------------------------------------------------------
# High energy
# ---------------------------------------------------------------------------

@dataclass
class HighEnergyResult:
    lambdas: np.ndarray
    residuals: np.ndarray
    xi_prime: np.ndarray
    t0_norms: np.ndarray
    fit_exponent: Optional[float] = None


def high_energy_residual(pot: PotentialSpec, lambda_list, resolution: int = 16) -> HighEnergyResult:
    """r(l) = |xi'(l) 8 pi^2 sqrt(l) / int V - 1| and a fit r ~ l^p."""
    lams = np.asarray(lambda_list, dtype=float)
    iv = pot.integral()
    if abs(iv) < 1e-12 * max(1.0, pot.sup_norm() * pot.radius ** 3):
        raise ZeroMeanPotential("int V = 0: the leading high-energy term vanishes")
    curve = xi_prime_essential(pot, lams, resolution)
    res = np.abs(curve.derivative_xi * 8 * math.pi ** 2 * np.sqrt(lams) / iv - 1.0)
    norms = np.array([discretize_T0(pot, resolution, Boundary(l, 1)).norm() for l in lams])
    fit = None
    if lams.size >= 2 and np.all(res > 0):
        fit = float(np.polyfit(np.log(lams), np.log(res), 1)[0])
    return HighEnergyResult(lams, res, curve.derivative_xi, norms, fit)


def t0_decay_exponent(pot: PotentialSpec, ts, resolution: int = 8) -> float:
    """Slope of log ||T0(i t)|| against log t."""
    ts = np.asarray(ts, dtype=float)
    norms = [discretize_T0(pot, resolution, 1j * t).norm() for t in ts]
    return float(np.polyfit(np.log(ts), np.log(norms), 1)[0])


def hs_self_convergence(pot: PotentialSpec, z_or_boundary, resolutions=(6, 8, 12, 16)):
    """Weighted HS norms at increasing resolution and the observed order
    log(e1/e2)/log(h1/h2) of successive differences."""
    vals = np.array([discretize_T0(pot, n, z_or_boundary).hs_norm() for n in resolutions])
    diffs = np.abs(np.diff(vals))
    hs = 1.0 / np.asarray(resolutions, float)
    orders = np.log(diffs[:-1] / diffs[1:]) / np.log(hs[1:-1] / hs[2:])
    return vals, orders
