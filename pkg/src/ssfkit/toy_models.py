"""Closed-form reference models.

* diagonal pairs (H0, H0 + V) with real or non-real diagonal V, and the
  nilpotent Jordan pair, whose SSF is a step function;
* multiplication by x on [0, 1] plus gamma <., u0> u0 with u0 supported
  away from [0, 1] (a step function again);
* the same operator with u0 = 1_[0,1] and gamma = i beta, where the
  perturbation determinant and the SSF are explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar, root

from .errors import OnSingularity, RealAxisEvaluation, UnsupportedSpec

BETA_CRIT = 1.0 / math.pi
SINGULAR_WINDOW = 1e-3


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepFunction:
    """xi(l) = sum of dy over jumps at x <= l (right-continuous representative)."""

    jumps: tuple = ()

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape)
        for x, dy in self.jumps:
            out = out + dy * (lam >= x)
        return out if out.ndim else float(out)

    @staticmethod
    def indicator(lo: float, hi: Optional[float], sign: float = 1.0) -> "StepFunction":
        if hi is None:
            return StepFunction(((lo, sign),))
        return StepFunction(((lo, sign), (hi, -sign)))

    def __add__(self, other: "StepFunction") -> "StepFunction":
        return StepFunction(tuple(sorted(self.jumps + other.jumps)))

    @property
    def locations(self):
        return sorted({x for x, dy in self.jumps})


def _diag_ssf(l0: float, v: complex) -> StepFunction:
    if abs(v.imag) > 0:
        return StepFunction.indicator(l0, None)
    v = v.real
    if v >= 0:
        return StepFunction.indicator(l0, l0 + v) if v > 0 else StepFunction()
    return StepFunction.indicator(l0 + v, l0, -1.0)


def finite_ssf_closed_form(h0, v) -> StepFunction:
    """SSF of a diagonal pair (H0, H0 + V) or of the Jordan pair (lambda I, N)."""
    h0 = np.asarray(h0, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if h0.ndim == 1:
        h0, v = np.diag(h0), np.diag(v)
    off_h0 = h0 - np.diag(np.diag(h0))
    off_v = v - np.diag(np.diag(v))
    if np.any(off_h0 != 0):
        raise UnsupportedSpec("H0 must be diagonal")
    if np.any(off_v != 0):
        # Jordan pair: H0 = l I and V strictly upper triangular and nilpotent
        d = np.diag(h0).real
        if np.all(np.diag(v) == 0) and np.allclose(d, d[0]) and np.all(np.tril(v) == 0):
            return StepFunction()
        raise UnsupportedSpec("only diagonal pairs and the Jordan pair have closed forms")
    out = StepFunction()
    for l0, vi in zip(np.diag(h0).real, np.diag(v)):
        out = out + _diag_ssf(float(l0), complex(vi))
    return out


def example_4x4(l=(0.0, 1.0, 2.0, 3.0), v=(0.5, -0.4, 0.3j, 0.0)):
    """The 4x4 diagonal example: v1 > 0, v2 < 0, v3 non-real, v4 = 0."""
    return np.diag(np.asarray(l, complex)), np.diag(np.asarray(v, complex))


def jordan_pair(lam: float = 0.5, v: float = 1.0):
    return lam * np.eye(2, dtype=complex), np.array([[0, v], [0, 0]], dtype=complex)


def disjoint_rank_one_ssf(gamma: complex) -> StepFunction:
    """SSF when u0 is supported away from [0, 1]: H0 u0 = 0 and H u0 = gamma u0."""
    return _diag_ssf(0.0, complex(gamma))


def disjoint_rank_one_finite(gamma: complex, n_cont: int = 16):
    """Finite pair with the same trace structure: H0 = diag(0, x_1..x_n) and
    V = gamma e0 e0^T (the [0, 1] block is untouched by V)."""
    xs = (np.arange(n_cont) + 0.5) / n_cont
    h0 = np.diag(np.concatenate(([0.0], xs))).astype(complex)
    v = np.zeros_like(h0)
    v[0, 0] = gamma
    return h0, v


# ---------------------------------------------------------------------------
# u0 = 1_[0,1], gamma = i beta
# ---------------------------------------------------------------------------

def interacting_determinant(beta: float, z: complex) -> complex:
    """D(z) = 1 - beta(arctan((1-x)/y) + arctan(x/y)) + i beta/2 ln(((1-x)^2+y^2)/(x^2+y^2))."""
    z = complex(z)
    x, y = z.real, z.imag
    if y == 0:
        raise RealAxisEvaluation("closed form needs Im z != 0; use boundary values")
    re = 1.0 - beta * (math.atan((1 - x) / y) + math.atan(x / y))
    im = 0.5 * beta * math.log(((1 - x) ** 2 + y**2) / (x**2 + y**2))
    return complex(re, im)


def interacting_determinant_vec(beta: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    if np.any(y == 0):
        raise RealAxisEvaluation("closed form needs Im z != 0")
    re = 1.0 - beta * (np.arctan((1 - x) / y) + np.arctan(x / y))
    im = 0.5 * beta * np.log(((1 - x) ** 2 + y**2) / (x**2 + y**2))
    return re + 1j * im


def interacting_determinant_d(beta: float, z) -> complex:
    """D'(z) = i beta (1/(z-1) - 1/z)."""
    z = np.asarray(z, dtype=complex)
    return 1j * beta * (1.0 / (z - 1.0) - 1.0 / z)


def interacting_boundary_determinant(beta: float, lam, side: int) -> np.ndarray:
    """D(lam +/- i0) for real lam off {0, 1}."""
    lam = np.asarray(lam, dtype=float)
    inside = (lam > 0) & (lam < 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.log(np.abs(1.0 / lam - 1.0))
    re = np.where(inside, 1.0 - side * beta * math.pi, 1.0)
    return re + 1j * beta * X


def f_map(lam):
    """f(l) = ln(1/l - 1), decreasing from (0, 1) onto R."""
    lam = np.asarray(lam, dtype=float)
    return np.log(1.0 / lam - 1.0)


def G_beta(beta: float, X):
    X = np.asarray(X, dtype=float)
    return np.log1p(4 * beta * math.pi / ((1 - beta * math.pi) ** 2 + beta**2 * X**2)) / (4 * math.pi)


def F_beta(beta: float, X):
    X = np.asarray(X, dtype=float)
    if beta == BETA_CRIT:
        return F_crit(X)
    return (np.arctan(beta * X / (1 - beta * math.pi)) - np.arctan(beta * X / (1 + beta * math.pi))) / (2 * math.pi)


def F_crit(X):
    """Left limit beta -> 1/pi of F_beta."""
    X = np.asarray(X, dtype=float)
    pos = (math.pi / 2 - np.arctan(X / (2 * math.pi))) / (2 * math.pi)
    neg = -(math.pi / 2 + np.arctan(X / (2 * math.pi))) / (2 * math.pi)
    return np.where(X > 0, pos, np.where(X < 0, neg, np.nan))


def interacting_ssf_closed_form(beta: float, lam):
    """Closed-form xi(l; H_{i beta}, H0) for u0 = 1_[0,1]."""
    lam_arr = np.asarray(lam, dtype=float)
    if beta < 0:
        return np.conj(interacting_ssf_closed_form(-beta, lam))
    out = np.zeros(lam_arr.shape, dtype=complex)
    if beta == 0:
        return out if out.ndim else complex(out)
    crit = math.isclose(beta, BETA_CRIT, rel_tol=0, abs_tol=1e-15)
    if crit and np.any(lam_arr == 0.5):
        raise OnSingularity("lambda = 1/2 is a spectral singularity for beta = 1/pi")
    inside = (lam_arr > 0) & (lam_arr < 1)
    li = lam_arr[inside]
    X = f_map(li)
    im = G_beta(beta, X)
    if crit:
        re = F_crit(X)
    elif beta < BETA_CRIT:
        re = F_beta(beta, X)
    else:
        re = 0.5 + F_beta(beta, X)
    out[inside] = re + 1j * im
    if beta > BETA_CRIT and not crit:
        out[lam_arr > 1] = 1.0
    return out if out.ndim else complex(out)


def z_beta_coth(beta: float) -> complex:
    """(1 + i coth(1/(2 beta)))/2, the hyperbolic-cotangent form of the
    eigenvalue location.  It is not a zero of D; see ``z_beta_exact``."""
    return complex(0.5, 0.5 / math.tanh(1.0 / (2 * beta)))


def z_beta_exact(beta: float) -> complex:
    """Exact zero of D for beta > 1/pi: x = 1/2, arctan(1/(2y)) = 1/(2 beta),
    i.e. y = cot(1/(2 beta))/2."""
    if beta <= BETA_CRIT:
        raise ValueError("no eigenvalue for beta <= 1/pi")
    return complex(0.5, 0.5 / math.tan(1.0 / (2 * beta)))


def find_interacting_roots(beta: float, tol: float = 1e-13) -> list:
    """Zeros of D off [0, 1] from a grid scan plus Newton polishing.

    The zero set of Im D is {Re z = 1/2} (modulus equality in the log), so
    the scan walks y on that line and checks the remaining real equation;
    each candidate is then polished by 2D Newton on (Re D, Im D) without
    using the line restriction.
    """
    if beta == 0:
        return []
    roots = []
    sgn = 1.0 if beta > 0 else -1.0
    b = abs(beta)

    def g(y):
        return 1.0 - b * 2.0 * math.atan(0.5 / y)

    ys = np.geomspace(1e-8, 1e4, 2000)
    vals = np.array([g(y) for y in ys])
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        y0 = brentq(g, ys[i], ys[i + 1], xtol=1e-15, rtol=1e-15)
        z0 = complex(0.5, sgn * y0)

        def F(p):
            d = interacting_determinant(beta, complex(p[0], p[1]))
            return [d.real, d.imag]

        def Jac(p):
            d = interacting_determinant_d(beta, complex(p[0], p[1]))
            # Cauchy-Riemann: dD/dx = D', dD/dy = i D'
            return [[d.real, -d.imag], [d.imag, d.real]]

        sol = root(F, [z0.real, z0.imag], jac=Jac, method="hybr", tol=tol)
        z = complex(sol.x[0], sol.x[1])
        if abs(interacting_determinant(beta, z)) < 1e-10 and z.imag != 0:
            roots.append(z)
    return roots


# ---------------------------------------------------------------------------
# Finite bridge and toy singularity scan
# ---------------------------------------------------------------------------

def discretize_rank_one(beta: float, n: int):
    """Midpoint discretisation of (H0, i beta <., 1> 1) on [0, 1]: H0 = diag(x_j),
    V = i beta u u^T with u_j = sqrt(1/n)."""
    xs = (np.arange(n) + 0.5) / n
    u = np.full(n, math.sqrt(1.0 / n))
    return np.diag(xs).astype(complex), 1j * beta * np.outer(u, u)


@dataclass
class ToySingularity:
    lambda0: float
    side: str
    min_singular_value: float
    order_estimate: object
    detection_margin: float


def _toy_smin(beta: float, lam: float, side: int) -> float:
    """Smallest singular value of I + T0(l +/- i0), a scalar here: |D(l +/- i0)|."""
    return float(abs(interacting_boundary_determinant(beta, lam, side)))


def scan_rank_one(beta: float, lambda_range=(0.0, 1.0), n: int = 2001,
                  threshold: float = 0.05) -> list:
    lo, hi = lambda_range
    eps = 1e-9
    grid = np.linspace(lo + eps, hi - eps, n)
    out = []
    for side, name in ((+1, "Outgoing"), (-1, "Incoming")):
        s = np.array([_toy_smin(beta, l, side) for l in grid])
        for i in range(1, n - 1):
            if s[i] <= s[i - 1] and s[i] <= s[i + 1] and s[i] < threshold:
                res = minimize_scalar(lambda l: _toy_smin(beta, l, side),
                                      bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                      method="golden", tol=1e-12)
                l0 = float(res.x)
                smin = float(res.fun)
                order = estimate_order_rank_one(beta, l0, side)
                out.append(ToySingularity(l0, name, smin, order, threshold - smin))
    out.sort(key=lambda e: e.lambda0)
    return out


def estimate_order_rank_one(beta: float, lam0: float, side: int, radii=None) -> int:
    """Order from ||C R_H C W|| = |1 - 1/D(z)| along z = l0 + r e^{i theta}."""
    radii = np.geomspace(1e-2, 1e-6, 13) if radii is None else radii
    thetas = np.linspace(0.2, math.pi - 0.2, 7) * side
    norms = []
    for r in radii:
        vals = [abs(1.0 - 1.0 / interacting_determinant(beta, lam0 + r * np.exp(1j * t)))
                for t in thetas]
        norms.append(max(vals))
    slope = np.polyfit(np.log(radii), np.log(norms), 1)[0]
    return max(0, int(math.ceil(-slope - 0.2)))
