"""Finite-rank step functions from three routes: closed form, tracked log-determinant
and the smoothed cumulative reconstruction."""

import numpy as np

from ssfkit import aax, rel_trace, ssf_trace, toy_models
from ssfkit.operators import finite_pair


def report(name, H, H0, closed, lo, hi):
    grid = np.linspace(lo, hi, 501)
    pts = ssf_trace.spectrum_points(H, H0)
    far = np.min(np.abs(grid[:, None] - pts[None, :]), axis=1) > 2e-2
    g = grid[far]
    ld = ssf_trace.ssf_via_logdet(H0, H, g)
    cu = ssf_trace.ssf_cumulative_from_pairings(H, H0, g, width=1e-2)
    cv = rel_trace.ssf_change_of_variables(H, H0, None, g, m=2)
    ref = closed(g)
    ok = ld.mask_ok() & cv.mask_ok()
    print(f"{name:22s} logdet {np.max(np.abs(ld.xi[ok] - ref[ok])):.1e}   "
          f"cumulative {np.max(np.abs(cu.xi - ref)):.1e}   "
          f"change of variables {np.max(np.abs(cv.xi[ok] - ref[ok])):.1e}")


def main():
    h0, v = toy_models.example_4x4()
    report("diagonal 4x4", *finite_pair(h0, v), toy_models.finite_ssf_closed_form(h0, v), -1, 4)
    for gamma in (0.5, -0.3, 0.4j):
        h0, v = toy_models.disjoint_rank_one_finite(gamma)
        report(f"disjoint gamma={gamma}", *finite_pair(h0, v), toy_models.disjoint_rank_one_ssf(gamma), -1, 2)

    H, H0 = finite_pair(*toy_models.jordan_pair())
    rng = np.random.default_rng(0)
    worst = max(abs(ssf_trace.ssf_pairing(H, H0, aax.standard_bump(rng.uniform(0, 1), rng.uniform(0.1, 0.8)),
                                         method="quadrature")) for _ in range(10))
    print(f"Jordan pair: max |<xi', f>| over 10 bumps = {worst:.1e}")


if __name__ == "__main__":
    main()
