"""xi'(l) 8 pi^2 sqrt(l) / int V -> 1 at high energy, and a singularity scan of a tuned potential."""

import numpy as np

from ssfkit import schrodinger as sch


def main():
    pot = sch.PotentialSpec(amplitude=1.0, radius=16.0).normalized(1.0)
    lam = 100 * pot.sup_norm()
    res = sch.high_energy_residual(pot, lam * np.array([0.25, 1.0, 4.0]), resolution=16)
    for l, r in zip(res.lambdas, res.residuals):
        print(f"l = {l:.4g}   r(l) = {r:.3e}")
    print(f"fitted r ~ l^{res.fit_exponent:.2f}")

    weak = sch.PotentialSpec(amplitude=0.05, radius=1.0)
    tuned = sch.tune_singular_coupling(weak, 1.0, 1, 8)
    rep = sch.scan_singularities(tuned, (0.5, 1.5), resolution=8, n=11)
    print(f"\ntuned amplitude {complex(tuned.amplitude):.4f}")
    print(rep.to_json())


if __name__ == "__main__":
    main()
