"""Test functions and their almost-analytic extensions.

A ``TestFunction`` is a compactly supported smooth function with access to
derivatives of every order up to ``max_order``.  ``AlmostAnalyticExtension``
builds the truncated Taylor extension into the complex plane,

    f~(x + iy) = sum_{k<=N} f^(k)(x) (iy)^k / k! * chi(x, y),

and evaluates its d-bar derivative, which vanishes like |y|^N at the axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InadmissibleCutoff, OrderTooHigh

DEFAULT_MAX_ORDER = 16


# ---------------------------------------------------------------------------
# Truncated Taylor arithmetic (forward-mode, arbitrary order)
# ---------------------------------------------------------------------------

class Jet:
    """Truncated Taylor series c[0] + c[1] h + ... + c[K] h^K, vectorised.

    ``c`` has shape (K+1, *batch).  Coefficients are normalised Taylor
    coefficients, so the k-th derivative is ``k! * c[k]``.
    """

    __array_priority__ = 100

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs)

    @classmethod
    def variable(cls, x, order: int) -> "Jet":
        x = np.asarray(x, dtype=float)
        c = np.zeros((order + 1,) + x.shape, dtype=complex)
        c[0] = x
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        c = np.zeros_like(self.c)
        c[0] = other
        return Jet(c)

    def __add__(self, other):
        return Jet(self.c + self._lift(other).c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return Jet(self.c - self._lift(other).c)

    def __rsub__(self, other):
        return Jet(self._lift(other).c - self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other)
        a, b = self.c, other.c
        K = self.order
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
        for k in range(K + 1):
            out[k] = sum(a[j] * b[k - j] for j in range(k + 1))
        return Jet(out)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        a = self.c
        K = self.order
        r = np.zeros_like(a, dtype=complex)
        r[0] = 1.0 / a[0]
        for k in range(1, K + 1):
            s = sum(a[j] * r[k - j] for j in range(1, k + 1))
            r[k] = -s / a[0]
        return Jet(r)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = self._lift(1.0)
            base = self
            n = int(p)
            while n:
                if n & 1:
                    out = out * base
                base = base * base
                n >>= 1
            return out
        return exp(log(self) * p)


def _compose(a: Jet, derivs) -> Jet:
    """Compose g with the jet a, given g^(j)(a0)/j! for j = 0..K (Faa di Bruno
    through powers of the non-constant part)."""
    K = a.order
    u = Jet(a.c.copy())
    u.c[0] = 0.0
    out = np.zeros_like(a.c, dtype=complex)
    out[0] = derivs[0]
    power = u._lift(1.0)
    for j in range(1, K + 1):
        power = power * u
        out = out + derivs[j] * power.c
    return Jet(out)


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(a)
    # y = exp(a), y' = a' y  ->  k y_k = sum_j j a_j y_{k-j}
    K = a.order
    y = np.zeros_like(a.c, dtype=complex)
    y[0] = np.exp(a.c[0])
    for k in range(1, K + 1):
        y[k] = sum(j * a.c[j] * y[k - j] for j in range(1, k + 1)) / k
    return Jet(y)


def log(a):
    if not isinstance(a, Jet):
        return np.log(a)
    K = a.order
    y = np.zeros_like(a.c, dtype=complex)
    y[0] = np.log(a.c[0])
    for k in range(1, K + 1):
        s = sum(j * y[j] * a.c[k - j] for j in range(1, k))
        y[k] = (k * a.c[k] - s) / (k * a.c[0])
    return Jet(y)


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(a)
    return (exp(a * 1j) - exp(a * -1j)) / 2j


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(a)
    return (exp(a * 1j) + exp(a * -1j)) / 2


def sqrt(a):
    if not isinstance(a, Jet):
        return np.sqrt(a)
    return exp(log(a) * 0.5)


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

DerivFn = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported smooth function with derivative access."""

    __test__ = False  # keep pytest from collecting this class

    support: tuple
    deriv: DerivFn = field(repr=False)
    max_order: int = DEFAULT_MAX_ORDER

    def eval_derivative(self, k: int, x):
        if k > self.max_order:
            raise OrderTooHigh(f"derivative {k} > max_order {self.max_order}")
        x = np.asarray(x, dtype=float)
        a, b = self.support
        inside = (x > a) & (x < b)
        out = np.zeros(x.shape, dtype=complex)
        if np.any(inside):
            out[inside] = self.deriv(k, x[inside])
        return out if out.ndim else complex(out)

    def __call__(self, x):
        return self.eval_derivative(0, x)

    @property
    def center(self) -> float:
        return 0.5 * (self.support[0] + self.support[1])

    @property
    def half_width(self) -> float:
        return 0.5 * (self.support[1] - self.support[0])

    def __add__(self, other: "TestFunction") -> "TestFunction":
        lo = min(self.support[0], other.support[0])
        hi = max(self.support[1], other.support[1])
        f, g = self, other
        return TestFunction(
            (lo, hi),
            lambda k, x: f.eval_derivative(k, x) + g.eval_derivative(k, x),
            min(f.max_order, g.max_order),
        )

    def scale(self, alpha: complex) -> "TestFunction":
        f = self
        return TestFunction(self.support, lambda k, x: alpha * f.eval_derivative(k, x),
                            self.max_order)

    def __rmul__(self, alpha):
        return self.scale(alpha)

    def __mul__(self, other):
        if not isinstance(other, TestFunction):
            return self.scale(other)
        lo = max(self.support[0], other.support[0])
        hi = min(self.support[1], other.support[1])
        if hi <= lo:
            return zero_function(max_order=min(self.max_order, other.max_order))
        f, g = self, other

        def deriv(k, x):
            return sum(math.comb(k, j) * f.eval_derivative(j, x) * g.eval_derivative(k - j, x)
                       for j in range(k + 1))

        return TestFunction((lo, hi), deriv, min(f.max_order, g.max_order))

    def shifted(self, dx: float) -> "TestFunction":
        f = self
        return TestFunction((self.support[0] + dx, self.support[1] + dx),
                            lambda k, x: f.eval_derivative(k, x - dx), self.max_order)

    def compose_decreasing(self, phi: Callable, phi_jet: Callable, domain: tuple) -> "TestFunction":
        """g = f o phi for a smooth map phi; derivatives via Taylor jets.

        ``phi_jet`` must accept a ``Jet`` and return one.  ``domain`` is the
        support of g (preimage of supp f).
        """
        f = self
        K = self.max_order

        def deriv(k, x):
            jet = phi_jet(Jet.variable(x, k))
            y = np.real(jet.c[0])
            fd = [f.eval_derivative(j, y) / math.factorial(j) for j in range(k + 1)]
            return _compose(jet, fd).c[k] * math.factorial(k)

        return TestFunction(tuple(domain), deriv, K)


def zero_function(max_order: int = DEFAULT_MAX_ORDER) -> TestFunction:
    return TestFunction((0.0, 0.0), lambda k, x: np.zeros_like(x, dtype=complex), max_order)


def _bump_polys(K: int) -> list:
    """P_k with f^(k)(t) = P_k(t) (1 - t^2)^(-2k) f(t) for f = exp(-1/(1 - t^2))."""
    P = np.polynomial.Polynomial
    s = P([1.0, 0.0, -1.0])
    t = P([0.0, 1.0])
    polys = [P([1.0])]
    for k in range(K):
        p = polys[-1]
        polys.append(s * s * p.deriv() + 4 * k * t * s * p - 2 * t * p)
    return polys


_BUMP_POLYS = _bump_polys(40)


def standard_bump(center: float, half_width: float, max_order: int = DEFAULT_MAX_ORDER,
                  amplitude: complex = 1.0) -> TestFunction:
    """exp(-1/(1 - t^2)) with t = (x - center)/half_width, zero for |t| >= 1."""
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    if max_order > len(_BUMP_POLYS) - 1:
        raise OrderTooHigh(f"bump derivatives available up to {len(_BUMP_POLYS) - 1}")

    def deriv(k, x):
        t = (x - center) / half_width
        s = 1.0 - t * t
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            mag = np.exp(-1.0 / s - 2 * k * np.log(s))
            val = _BUMP_POLYS[k](t) * mag / half_width**k
        return amplitude * np.where(s > 0, val, 0.0)

    return TestFunction((center - half_width, center + half_width), deriv, max_order)


def from_callable(fn: Callable, support: Sequence[float],
                  max_order: int = DEFAULT_MAX_ORDER) -> TestFunction:
    """Wrap a user function built from +, -, *, /, ** and the ``aax`` math
    functions (exp, log, sin, cos, sqrt).  Derivatives come from Taylor jets,
    so they are exact up to rounding.  The caller guarantees fn is smooth and
    flat at the support edges; values outside ``support`` are forced to 0.
    """
    def deriv(k, x):
        out = fn(Jet.variable(x, k))
        if not isinstance(out, Jet):
            return np.full(np.shape(x), out if k == 0 else 0.0, dtype=complex)
        return out.c[k] * math.factorial(k)

    return TestFunction(tuple(float(s) for s in support), deriv, max_order)


# ---------------------------------------------------------------------------
# Smooth cutoff
# ---------------------------------------------------------------------------

def _flat(u):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)


def _flat_d(u):
    with np.errstate(divide="ignore", over="ignore"):
        uu = np.where(u > 0, u, 1.0)
        return np.where(u > 0, np.exp(-1.0 / uu) / uu**2, 0.0)


def smooth_step(u):
    """0 for u <= 0, 1 for u >= 1, C-infinity in between."""
    a, b = _flat(u), _flat(1.0 - u)
    return a / (a + b)


def smooth_step_d(u):
    a, b = _flat(u), _flat(1.0 - u)
    da, db = _flat_d(u), -_flat_d(1.0 - u)
    return (da * b - a * db) / (a + b) ** 2


def tau(s):
    """Plateau profile: 1 on |s| <= 1/2, 0 on |s| >= 1."""
    return smooth_step(2.0 * (1.0 - np.abs(s)))


def tau_d(s):
    return -2.0 * np.sign(s) * smooth_step_d(2.0 * (1.0 - np.abs(s)))


def _jb(x):
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


@dataclass(frozen=True)
class Cutoff:
    """chi(x, y) = tau(psi), psi = (y/b) <a>/<x>.  supp chi is |y| < b <x>/<a>."""

    a: float = 0.0
    b: float = 1.0

    def height(self, x):
        return self.b * _jb(x) / _jb(self.a)

    def psi(self, x, y):
        return (y / self.b) * (_jb(self.a) / _jb(x))

    def chi(self, x, y):
        return tau(self.psi(x, y))

    def dbar_chi(self, x, y):
        ja, jx = _jb(self.a), _jb(x)
        px = -(y / self.b) * ja * x / jx**3
        py = ja / (self.b * jx)
        return 0.5 * (px + 1j * py) * tau_d(self.psi(x, y))


def default_cutoff(f: TestFunction, nonreal_eigs: Sequence[complex] = ()) -> Cutoff:
    """Cutoff whose y-extent over supp f is about the support half-width and
    stays clear of declared non-real eigenvalues above supp f."""
    lo, hi = f.support
    jmax = float(max(_jb(lo), _jb(hi)))
    b = f.half_width / jmax
    for lam in nonreal_eigs:
        if lo < lam.real < hi and abs(lam.imag) > 0:
            b = min(b, 0.5 * abs(lam.imag) / _jb(lam.real))
    return Cutoff(0.0, b)


# ---------------------------------------------------------------------------
# Almost-analytic extension
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlmostAnalyticExtension:
    f: TestFunction
    order: int
    cutoff: Cutoff

    def _derivs(self, x, ks):
        """f^(k)(x) for each k; quadrature nodes repeat x heavily, so evaluate on unique x."""
        x = np.asarray(x, dtype=float)
        ux, inv = np.unique(x.ravel(), return_inverse=True)
        return {k: self.f.eval_derivative(k, ux)[inv].reshape(x.shape) for k in ks}

    def _taylor(self, x, y, upto, derivs=None):
        derivs = derivs or self._derivs(x, range(upto + 1))
        iy = 1j * y
        s = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)), dtype=complex)
        term = np.ones_like(s)
        for k in range(upto + 1):
            if k:
                term = term * iy / k
            s = s + derivs[k] * term
        return s

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        return self._taylor(x, y, self.order) * self.cutoff.chi(x, y)

    def dbar(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        N = self.order
        d = self._derivs(x, range(N + 2))
        top = 0.5 * d[N + 1] * (1j * y) ** N / math.factorial(N)
        out = top * self.cutoff.chi(x, y) + self._taylor(x, y, N, d) * self.cutoff.dbar_chi(x, y)
        return out if out.ndim else complex(out)


def check_admissible(cutoff: Cutoff, support, nonreal_eigs: Sequence[complex]) -> None:
    lo, hi = support
    for lam in nonreal_eigs:
        if lo <= lam.real <= hi and abs(lam.imag) < cutoff.height(lam.real):
            raise InadmissibleCutoff(
                f"eigenvalue {lam} lies in the support of the cutoff (height "
                f"{cutoff.height(lam.real):.3g})")


def build_extension(f: TestFunction, N: int, cutoff: Cutoff | None = None,
                    nonreal_eigs: Sequence[complex] = ()) -> AlmostAnalyticExtension:
    if N > f.max_order - 1:
        raise OrderTooHigh(f"order {N} needs derivatives up to {N + 1} > {f.max_order}")
    if cutoff is None:
        cutoff = default_cutoff(f, nonreal_eigs)
    check_admissible(cutoff, f.support, nonreal_eigs)
    return AlmostAnalyticExtension(f, N, cutoff)


def dbar(ext: AlmostAnalyticExtension, z):
    return ext.dbar(z)
