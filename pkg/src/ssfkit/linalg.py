"""Small dense linear-algebra helpers shared by the pipelines."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import ExtrapolationDiverged


def smallest_singular_value(A: np.ndarray, lu=None, tol: float = 1e-10) -> float:
    """s_min(A) from the LU factors (Lanczos on (A^H A)^{-1}).

    Avoids a full SVD, which dominates the cost for matrices of a few
    thousand rows.
    """
    n = A.shape[0]
    if n <= 64:
        return float(np.linalg.svd(A, compute_uv=False)[-1])
    if lu is None:
        lu = sla.lu_factor(A, check_finite=False)

    def mv(x):
        y = sla.lu_solve(lu, x, trans=2, check_finite=False)
        return sla.lu_solve(lu, y, check_finite=False)

    op = LinearOperator((n, n), matvec=mv, dtype=complex)
    v0 = np.ones(n, dtype=complex) / np.sqrt(n)
    lam = eigsh(op, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False)[0]
    return float(1.0 / np.sqrt(lam.real))


def inverse_norm(A: np.ndarray) -> float:
    """||A^{-1}||_2 (inf when A is numerically singular)."""
    s = smallest_singular_value(A)
    return np.inf if s == 0 else 1.0 / s


def neville_to_zero(h, values):
    """Polynomial extrapolation of values(h) to h = 0.

    Returns (estimate, error estimate).  ``values`` may be arrays.  The error
    estimate is the difference between the two highest-order diagonal entries
    of the Neville tableau.
    """
    h = np.asarray(h, dtype=float)
    T = [np.asarray(v, dtype=complex) for v in values]
    diag = [T[0]]
    n = len(T)
    for k in range(1, n):
        T = [(h[i + k] * T[i] - h[i] * T[i + 1]) / (h[i + k] - h[i]) for i in range(n - k)]
        diag.append(T[0])
    est = diag[-1]
    err = float(np.max(np.abs(diag[-1] - diag[-2]))) if n > 1 else np.inf
    return est, err


def extrapolate_checked(h, values, atol: float, what: str = "boundary value"):
    est, err = neville_to_zero(h, values)
    if not np.all(np.isfinite(est)) or err > atol:
        raise ExtrapolationDiverged(f"{what}: extrapolation error {err:.2e} > {atol:.2e}")
    return est, err


def pairwise_sum(blocks):
    """Deterministic pairwise reduction of a list of arrays."""
    blocks = list(blocks)
    if not blocks:
        return 0.0
    while len(blocks) > 1:
        nxt = [blocks[i] + blocks[i + 1] for i in range(0, len(blocks) - 1, 2)]
        if len(blocks) % 2:
            nxt.append(blocks[-1])
        blocks = nxt
    return blocks[0]


def thread_count() -> int:
    import os

    try:
        return max(1, int(os.environ.get("SSFKIT_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map ``fn`` over ``items`` with up to SSFKIT_THREADS threads.

    Results keep the input order, so downstream reductions are reproducible.
    """
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
