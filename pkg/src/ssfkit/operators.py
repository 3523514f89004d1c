"""Operator pairs (H0, V) and exact resolvent machinery.

Three kinds of pair are supported:

* finite matrices (dense, complex),
* multiplication by x on [0, 1] (zero elsewhere) plus a rank-one term
  gamma <., u0> u0, treated through closed-form scalar integrals,
* 3D Schrodinger operators -Delta + V, whose numerics live in
  ``ssfkit.schrodinger``; here they only carry their potential.

Sign convention used throughout the package:
``sigma(z) = Tr(R_0(z) - R_H(z)) = D'(z)/D(z)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad

from .errors import NonHermitianBase, SingularShift, UnboundedPerturbation

COND_LIMIT = 1e12
HERMITIAN_TOL = 1e-12


class OperatorKind(str, Enum):
    FINITE = "FiniteMatrix"
    RANK_ONE = "MultiplicationRankOne"
    SCHRODINGER = "Schrodinger3D"


class U0Kind(str, Enum):
    DISJOINT = "DisjointSupport"
    INDICATOR = "Indicator01"
    PROFILE = "Profile"


@dataclass(frozen=True)
class RankOneData:
    """gamma <., u0> u0 with ||u0|| = 1.

    ``profile`` is u0 restricted to [0, 1] (real valued) and ``mass_outside``
    the squared norm of u0 outside [0, 1], where H0 acts as 0.
    """

    gamma: complex
    u0_kind: U0Kind = U0Kind.INDICATOR
    profile: Optional[Callable[[float], float]] = None
    mass_outside: float = 0.0

    def __post_init__(self):
        if self.u0_kind == U0Kind.PROFILE:
            if self.profile is None:
                raise ValueError("profile u0 requires a callable")
            inside = quad(lambda x: self.profile(x) ** 2, 0.0, 1.0, epsabs=1e-13)[0]
            if abs(inside + self.mass_outside - 1.0) > 1e-8:
                raise ValueError(f"u0 is not normalised (norm^2 = {inside + self.mass_outside})")
        if not np.isfinite(self.gamma):
            raise UnboundedPerturbation("gamma must be finite")


@dataclass(frozen=True)
class OperatorSpec:
    kind: OperatorKind
    h0: Any = None
    v: Any = None
    label: str = ""

    def validate(self) -> None:
        if self.kind == OperatorKind.FINITE:
            h0 = np.asarray(self.h0, dtype=complex)
            v = np.asarray(self.v, dtype=complex)
            if h0.ndim != 2 or h0.shape[0] != h0.shape[1] or h0.shape != v.shape:
                raise ValueError("H0 and V must be square matrices of equal size")
            scale = max(1.0, np.abs(h0).max())
            if np.abs(h0 - h0.conj().T).max() > HERMITIAN_TOL * scale:
                raise NonHermitianBase("H0 is not Hermitian")
            if not np.all(np.isfinite(v)):
                raise UnboundedPerturbation("V has non-finite entries")
        elif self.kind == OperatorKind.RANK_ONE:
            if not isinstance(self.v, RankOneData):
                raise ValueError("rank-one spec needs RankOneData")
        elif self.kind == OperatorKind.SCHRODINGER:
            if self.v is None:
                raise ValueError("Schrodinger spec needs a potential")

    def base(self) -> "OperatorSpec":
        """Spec of the unperturbed pair (H0, 0)."""
        if self.kind == OperatorKind.FINITE:
            return OperatorSpec(self.kind, self.h0, np.zeros_like(np.asarray(self.h0, complex)),
                                self.label + ":base")
        if self.kind == OperatorKind.RANK_ONE:
            return OperatorSpec(self.kind, self.h0, RankOneData(0.0, self.v.u0_kind, self.v.profile,
                                                                self.v.mass_outside),
                                self.label + ":base")
        return OperatorSpec(self.kind, self.h0, None, self.label + ":base")

    def adjoint(self) -> "OperatorSpec":
        """Spec of (H0, V*)."""
        if self.kind == OperatorKind.FINITE:
            return OperatorSpec(self.kind, self.h0, np.asarray(self.v, complex).conj().T,
                                self.label + ":adj")
        if self.kind == OperatorKind.RANK_ONE:
            d = self.v
            return OperatorSpec(self.kind, self.h0, RankOneData(np.conj(d.gamma), d.u0_kind,
                                                                d.profile, d.mass_outside),
                                self.label + ":adj")
        return OperatorSpec(self.kind, self.h0, self.v.conjugate(), self.label + ":adj")


@dataclass(frozen=True)
class StripRegion:
    interval: tuple
    half_height: float
    growth_exponent: float = 0.0
    growth_constant: float = 1.0

    def __post_init__(self):
        s0, s1 = self.interval
        if not (s0 < s1 and self.half_height > 0 and self.growth_constant > 0):
            raise ValueError("invalid strip region")


class ResolventKind(str, Enum):
    FULL = "FullResolvent"
    TRACE_DIFF = "TraceDiff"
    DETERMINANT = "Determinant"


@dataclass(frozen=True)
class ResolventSample:
    z: complex
    value: Any
    kind: ResolventKind


# ---------------------------------------------------------------------------
# Handles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorHandle:
    """Immutable view of H = H0 + V (or of H0 alone when V = 0)."""

    spec: OperatorSpec

    @property
    def kind(self) -> OperatorKind:
        return self.spec.kind

    # finite models -------------------------------------------------------
    @cached_property
    def h0(self) -> np.ndarray:
        return np.asarray(self.spec.h0, dtype=complex)

    @cached_property
    def v(self) -> np.ndarray:
        return np.asarray(self.spec.v, dtype=complex)

    @cached_property
    def matrix(self) -> np.ndarray:
        if self.kind != OperatorKind.FINITE:
            raise TypeError("dense materialisation only for finite models")
        return self.h0 + self.v

    @property
    def dim(self) -> int:
        if self.kind == OperatorKind.FINITE:
            return self.matrix.shape[0]
        raise TypeError("infinite-dimensional model")

    def dense(self) -> np.ndarray:
        return self.matrix.copy()

    def apply(self, vec) -> np.ndarray:
        return self.matrix @ np.asarray(vec, dtype=complex)

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    @cached_property
    def schur(self):
        T, Q = sla.schur(self.matrix, output="complex")
        return T, Q

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.sort_complex(np.diag(self.schur[0]).copy())

    @property
    def is_hermitian(self) -> bool:
        m = self.matrix
        return bool(np.abs(m - m.conj().T).max() <= HERMITIAN_TOL * max(1.0, np.abs(m).max()))

    def resolvent_batch(self, zs) -> np.ndarray:
        """(H - z)^{-1} for an array of z, shape (len(z), n, n).

        Uses the complex Schur form H = Q T Q^* and a vectorised triangular
        back-substitution, which is cheap for the small matrices of the
        quadrature routines and exact up to rounding for non-normal H.
        """
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        T, Q = self.schur
        n = T.shape[0]
        if n > 24:
            eye = np.eye(n)
            out = np.empty((zs.size, n, n), dtype=complex)
            for i, z in enumerate(zs):
                out[i] = np.linalg.solve(self.matrix - z * eye, eye)
            return out
        Rt = triangular_resolvent(T, zs)
        return np.einsum("ik,mkl,jl->mij", Q, Rt, Q.conj(), optimize=True)

    def resolvent_sum(self, zs, coef) -> np.ndarray:
        """sum_j coef_j (T - z_j)^{-1} in Schur coordinates."""
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        return triangular_resolvent_sum(self.schur[0], zs, coef)

    def resolvent_triangular(self, zs) -> np.ndarray:
        """(T - z)^{-1} in Schur coordinates, shape (len(z), n, n)."""
        zs = np.atleast_1d(np.asarray(zs, dtype=complex))
        return triangular_resolvent(self.schur[0], zs)

    def with_perturbation(self, v) -> "OperatorHandle":
        return build_operator(OperatorSpec(self.kind, self.spec.h0, v, self.spec.label))


def _triangular_resolvent_nodes_last(T: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """(T - z)^{-1} for upper-triangular T, laid out as (n, n, len(z))."""
    n = T.shape[0]
    R = np.zeros((n, n, zs.size), dtype=complex)
    d = np.diag(T)[:, None] - zs[None, :]
    inv_d = 1.0 / d
    for j in range(n):
        R[j, j] = inv_d[j]
        for i in range(j - 1, -1, -1):
            R[i, j] = -(T[i, i + 1:j + 1] @ R[i + 1:j + 1, j]) * inv_d[i]
    return R


def triangular_resolvent(T: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """(T - z)^{-1} for upper-triangular T, shape (len(z), n, n)."""
    return np.moveaxis(_triangular_resolvent_nodes_last(T, np.asarray(zs, complex)), 2, 0)


def triangular_resolvent_sum(T: np.ndarray, zs: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """sum_j coef_j (T - z_j)^{-1} without materialising the (M, n, n) stack."""
    R = _triangular_resolvent_nodes_last(T, np.asarray(zs, complex))
    return R @ np.asarray(coef, complex)


def build_operator(spec: OperatorSpec) -> OperatorHandle:
    spec.validate()
    return OperatorHandle(spec)


def finite_pair(h0, v, label: str = "") -> tuple:
    """Handles (H, H0) for a finite pair."""
    spec = OperatorSpec(OperatorKind.FINITE, np.asarray(h0, complex), np.asarray(v, complex), label)
    return build_operator(spec), build_operator(spec.base())


def rank_one_pair(data: RankOneData, label: str = "") -> tuple:
    spec = OperatorSpec(OperatorKind.RANK_ONE, "x*1[0,1]", data, label)
    return build_operator(spec), build_operator(spec.base())


# ---------------------------------------------------------------------------
# Resolvents, traces, determinants
# ---------------------------------------------------------------------------

def _checked_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    lu, piv = sla.lu_factor(A, check_finite=False)
    anorm = np.abs(A).sum(axis=0).max()
    rcond, info = sla.lapack.zgecon(lu, anorm, norm="1")
    if info != 0 or rcond * COND_LIMIT < 1.0:
        raise SingularShift(f"shift too close to the spectrum (cond ~ {1.0 / max(rcond, 1e-300):.2e})")
    return sla.lu_solve((lu, piv), B, check_finite=False)


def resolvent(handle: OperatorHandle, z: complex) -> np.ndarray:
    """(H - z)^{-1} by a dense solve with a condition-number guard."""
    n = handle.dim
    eye = np.eye(n, dtype=complex)
    return _checked_solve(handle.matrix - z * eye, eye)


def rank_one_inner(data: RankOneData, z: complex) -> complex:
    """<R0(z) u0, u0> for H0 = x 1_[0,1](x)."""
    z = complex(z)
    if data.u0_kind == U0Kind.DISJOINT:
        if z == 0:
            raise SingularShift("z = 0 is an eigenvalue of H0")
        return -1.0 / z
    if data.u0_kind == U0Kind.INDICATOR:
        if z.imag == 0 and 0.0 <= z.real <= 1.0:
            raise SingularShift("z on the continuous spectrum [0, 1]")
        return complex(np.log(1.0 - z) - np.log(-z))
    if z.imag == 0 and 0.0 <= z.real <= 1.0:
        raise SingularShift("z on the continuous spectrum [0, 1]")
    p = data.profile
    re = quad(lambda x: (p(x) ** 2 / (x - z)).real, 0.0, 1.0, epsabs=1e-14, limit=400)[0]
    im = quad(lambda x: (p(x) ** 2 / (x - z)).imag, 0.0, 1.0, epsabs=1e-14, limit=400)[0]
    return re + 1j * im - data.mass_outside / z


def rank_one_inner_d(data: RankOneData, z: complex) -> complex:
    """d/dz <R0(z) u0, u0> = <R0(z)^2 u0, u0>."""
    z = complex(z)
    if data.u0_kind == U0Kind.DISJOINT:
        return 1.0 / z**2
    if data.u0_kind == U0Kind.INDICATOR:
        return 1.0 / (z - 1.0) - 1.0 / z
    p = data.profile
    re = quad(lambda x: (p(x) ** 2 / (x - z) ** 2).real, 0.0, 1.0, epsabs=1e-14, limit=400)[0]
    im = quad(lambda x: (p(x) ** 2 / (x - z) ** 2).imag, 0.0, 1.0, epsabs=1e-14, limit=400)[0]
    return re + 1j * im + data.mass_outside / z**2


def trace_resolvent_diff(handleH: OperatorHandle, handleH0: OperatorHandle, z: complex) -> complex:
    """sigma(z) = Tr(R_0(z) - R_H(z))."""
    if handleH.kind == OperatorKind.FINITE:
        return complex(np.trace(resolvent(handleH0, z)) - np.trace(resolvent(handleH, z)))
    if handleH.kind == OperatorKind.RANK_ONE:
        d = handleH.spec.v
        if d.gamma == 0:
            return 0j
        D = 1.0 + d.gamma * rank_one_inner(d, z)
        if D == 0:
            raise SingularShift("z is an eigenvalue of H")
        return complex(d.gamma * rank_one_inner_d(d, z) / D)
    raise TypeError("use ssfkit.schrodinger for Schrodinger operators")


def perturbation_determinant(handleH0: OperatorHandle, handleV: OperatorHandle, z: complex) -> complex:
    """D_V(z) = det(I + V (H0 - z)^{-1}).

    ``handleV`` is the handle of H = H0 + V; its perturbation part is used.
    """
    if handleH0.kind == OperatorKind.FINITE:
        n = handleH0.dim
        R0 = resolvent(handleH0, z)
        return complex(np.linalg.det(np.eye(n) + handleV.v @ R0))
    if handleH0.kind == OperatorKind.RANK_ONE:
        d = handleV.spec.v
        if d.u0_kind == U0Kind.DISJOINT and complex(z) == 0:
            raise SingularShift("z = 0 is an eigenvalue of H0")
        return complex(1.0 + d.gamma * rank_one_inner(d, z))
    raise TypeError("use ssfkit.schrodinger for Schrodinger operators")


def trace_resolvent_diff_batch(handleH: OperatorHandle, handleH0: OperatorHandle, zs) -> np.ndarray:
    """Vectorised sigma for finite models via the Schur diagonals.

    The trace of a resolvent equals sum 1/(mu_k - z) over the eigenvalues
    (the diagonal of the Schur form), for normal and non-normal H alike.
    """
    zs = np.asarray(zs, dtype=complex)
    mu = np.diag(handleH.schur[0])
    mu0 = np.diag(handleH0.schur[0])
    return (1.0 / (mu0[None, :] - zs.reshape(-1, 1))).sum(1).reshape(zs.shape) - \
        (1.0 / (mu[None, :] - zs.reshape(-1, 1))).sum(1).reshape(zs.shape)


def determinant_batch(handleH0: OperatorHandle, handleH: OperatorHandle, zs) -> np.ndarray:
    """D_V(z) = prod (mu_k - z) / prod (mu0_k - z) for finite models, vectorised."""
    zs = np.asarray(zs, dtype=complex)
    mu = np.diag(handleH.schur[0])
    mu0 = np.diag(handleH0.schur[0])
    zz = zs.reshape(-1, 1)
    return np.prod((mu[None, :] - zz) / (mu0[None, :] - zz), axis=1).reshape(zs.shape)


def read_dense_matrix(path) -> np.ndarray:
    """Read the dense text format: header 'rows cols', then rows of 're im' pairs."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError("empty matrix file")
    r, c = int(tokens[0]), int(tokens[1])
    vals = np.array([float(t) for t in tokens[2:]])
    if vals.size != 2 * r * c:
        raise ValueError(f"expected {2 * r * c} numbers, found {vals.size}")
    return (vals[0::2] + 1j * vals[1::2]).reshape(r, c)


def write_dense_matrix(path, m) -> None:
    m = np.asarray(m, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(f"{x.real:.17g} {x.imag:.17g}" for x in row) + "\n")
