"""Rank-one toy model u0 = 1_[0,1], gamma = i beta: logdet vs closed form,
the critical singularity at beta = 1/pi and the eigenvalue for beta > 1/pi."""

import argparse

import numpy as np

from ssfkit import ssf_trace, toy_models
from ssfkit.operators import RankOneData, rank_one_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.2, 0.4])
    ap.add_argument("--n", type=int, default=400)
    args = ap.parse_args()

    grid = np.linspace(-0.5, 1.5, args.n)
    grid = grid[(np.abs(grid) >= 1e-3) & (np.abs(grid - 1) >= 1e-3)]
    for beta in args.betas:
        H, H0 = rank_one_pair(RankOneData(1j * beta))
        curve = ssf_trace.ssf_via_logdet(H0, H, grid)
        ref = toy_models.interacting_ssf_closed_form(beta, grid)
        m = curve.mask_ok()
        roots = toy_models.find_interacting_roots(beta)
        print(f"beta={beta:.4f}  max|xi_logdet - xi_closed| = {np.max(np.abs(curve.xi[m] - ref[m])):.2e}"
              f"  roots off [0,1]: {[complex(round(r.real, 12), round(r.imag, 12)) for r in roots]}")

    beta = toy_models.BETA_CRIT
    print(f"\nbeta = 1/pi: scan of |D(l +/- i0)|")
    for e in toy_models.scan_rank_one(beta):
        print(f"  {e.side:8s} l0={e.lambda0:.9f}  s_min={e.min_singular_value:.2e}  order={e.order_estimate}")
    H, H0 = rank_one_pair(RankOneData(1j * beta))
    for h in (1e-1, 1e-2, 1e-3, 1e-4):
        xi = ssf_trace.ssf_via_logdet(H0, H, np.array([0.5 - h, 0.5 + h])).xi
        print(f"  h={h:.0e}  Re xi(1/2 - h) - Re xi(1/2 + h) = {xi[0].real - xi[1].real:.6f}")

    print(f"\nbeta = 0.4: exact zero {toy_models.z_beta_exact(0.4)}, coth form {toy_models.z_beta_coth(0.4)}")


if __name__ == "__main__":
    main()
