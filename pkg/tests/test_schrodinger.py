import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import dawsn

from ssfkit import schrodinger as sch
from ssfkit.errors import BranchViolation, ConfigError, ResolutionTooCoarse, ZeroMeanPotential

# e^{-r^2}: radius 8, width 1/8 in the scaled variable, plain Gaussian
GAUSS = sch.PotentialSpec(amplitude=1.0, radius=8.0, width=0.125, power=2.0)
SMALL = sch.PotentialSpec(amplitude=0.7 + 0.3j, radius=1.0)


def split_box_rule(p, half, n=24):
    """Tensor Gauss-Legendre on the 8 sub-boxes of [-half, half]^3 cornered at p."""
    gx, gw = leggauss(n)
    out_x, out_w = [], []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                lo = np.where(np.array([sx, sy, sz]) < 0, -half, p)
                hi = np.where(np.array([sx, sy, sz]) < 0, p, half)
                xs = [(lo[a] + hi[a]) / 2 + (hi[a] - lo[a]) / 2 * gx for a in range(3)]
                ws = [(hi[a] - lo[a]) / 2 * gw for a in range(3)]
                X = np.stack(np.meshgrid(*xs, indexing="ij"), -1).reshape(-1, 3)
                W = np.einsum("i,j,k->ijk", *ws).ravel()
                out_x.append(X)
                out_w.append(W)
    return np.concatenate(out_x), np.concatenate(out_w)


def test_potential_validation():
    with pytest.raises(ConfigError):
        sch.PotentialSpec(width=-1.0)
    with pytest.raises(ConfigError):
        sch.PotentialSpec(delta=2.0)
    assert SMALL.check_decay()
    assert SMALL(np.array([[2.0, 0.0, 0.0]]))[0] == 0


def test_integral_and_normalisation():
    # int e^{-r^2} d^3x = pi^{3/2}
    assert GAUSS.integral() == pytest.approx(math.pi ** 1.5, rel=1e-12)
    assert SMALL.normalized(2.0).integral() == pytest.approx(2.0, rel=1e-12)


def test_box_newton_potential_center():
    # int over [-1,1]^3 of 1/|y| dy = 24 ln(1 + sqrt 3) - 12 ln 2 - 2 pi
    val = sch.box_newton_potential(np.zeros(3), 1.0)[0]
    ref = 24 * math.log(1 + math.sqrt(3)) - 12 * math.log(2) - 2 * math.pi
    assert val == pytest.approx(ref, rel=1e-13)


def test_box_moments_column_zero_is_newton_potential(rng):
    p = rng.uniform(-0.9, 0.9, (6, 3))
    assert np.allclose(sch.box_moments(p, 1.0)[:, 0], sch.box_newton_potential(p, 1.0), rtol=1e-12)


def test_box_moments_bounded_columns_against_split_rule():
    p = np.array([0.3, -0.55, 0.1])
    X, W = split_box_rule(p, 1.0)
    d = X - p
    r = np.linalg.norm(d, axis=1)
    cols = [d[:, 0], d[:, 1], d[:, 2], d[:, 0] ** 2, d[:, 1] ** 2, d[:, 2] ** 2,
            d[:, 0] * d[:, 1], d[:, 0] * d[:, 2], d[:, 1] * d[:, 2]]
    ref = np.array([np.sum(W * c / r) for c in cols])
    got = sch.box_moments(p, 1.0)[0, 1:]
    assert np.allclose(got, ref, atol=1e-7)


def test_gaussian_coulomb_energy():
    # int int e^{-|x|^2 - |y|^2} / |x - y| = pi^3 sqrt(2 / pi)
    assert sch.radial_double_integral(GAUSS, 0.0) == pytest.approx(math.pi ** 3 * math.sqrt(2 / math.pi),
                                                                   rel=1e-10)


@pytest.mark.parametrize("a", [0.7, 2.0])
def test_gaussian_oscillatory_double_integral(a):
    # pi^3 (2 pi)^{-3/2} 4 pi int_0^inf u e^{-u^2/2} e^{iau} du; the cosine part via Dawson's function
    c = 1 - a * math.sqrt(2) * dawsn(a / math.sqrt(2))
    s = math.sqrt(math.pi / 2) * a * math.exp(-a * a / 2)
    pref = math.pi ** 3 * (2 * math.pi) ** -1.5 * 4 * math.pi
    assert sch.radial_double_integral(GAUSS, a) == pytest.approx(pref * (c + 1j * s), rel=1e-9)


def test_wavenumber_branches():
    assert sch.wavenumber(sch.Boundary(4.0, 1)) == 2.0
    assert sch.wavenumber(sch.Boundary(4.0, -1)) == -2.0
    assert sch.wavenumber(-4.0) == pytest.approx(2j)
    with pytest.raises(BranchViolation):
        sch.wavenumber(1.0)
    with pytest.raises(BranchViolation):
        sch.Boundary(-1.0, 1)


def test_corrected_weights_gaussian_newton_potential():
    # int e^{-|y|^2} / |x - y| dy = pi^{3/2} erf(|x|) / |x|
    from scipy.special import erf
    pot = sch.PotentialSpec(amplitude=1.0, radius=4.0, width=0.25, power=2.0)
    errs = []
    for n in (12, 16):
        geo = sch._geometry(pot, n)
        r = np.linalg.norm(geo.nodes, axis=1)
        ref = math.pi ** 1.5 * erf(r) / r
        got = (geo.wcoul @ geo.vvals).real
        m = r < 2
        errs.append(np.max(np.abs(got - ref)[m] / ref[m]))
    assert errs[1] < 0.02 and errs[1] < errs[0] / 2


def test_sigma_identities_and_adjoint():
    s = sch.sigma_boundary(SMALL, 1.0, 1, resolution=8)
    assert s.identity_residual < 1e-10
    sa = sch.sigma_boundary(SMALL.conjugate(), 1.0, -1, resolution=8)
    # sigma(H*; l - i0) = conj sigma(H; l + i0)
    assert sa.value == pytest.approx(np.conj(s.value), rel=1e-10)


def test_neumann_series_matches_sigma():
    weak = SMALL.scaled(0.1)
    s = sch.sigma_boundary(weak, 1.0, 1, resolution=8)
    total, bound, nt = sch.neumann_sigma(weak, 1.0, 1, 8, 12)
    assert nt < 1
    assert abs(total - s.value) <= bound + 1e-14


def test_trace_jump_closed_form():
    tj = sch.trace_jump_t0prime(SMALL, 1.0, resolution=16)
    assert tj.rel_error < 1e-5


def test_trace_t0prime_t0_moderate_resolution():
    tp = sch.trace_t0prime_t0(SMALL, 1.0, 1, resolution=12, strict=False)
    assert tp.rel_error < 1e-2


def test_t0_decays_along_imaginary_axis():
    slope = sch.t0_decay_exponent(SMALL, [1, 4, 16, 64], resolution=12)
    assert -1.0 < slope < -0.3


def test_resolution_guard():
    with pytest.raises(ResolutionTooCoarse):
        sch.discretize_T0(SMALL, 6, sch.Boundary(400.0, 1))


def test_zero_mean_rejected():
    with pytest.raises(ZeroMeanPotential):
        sch.high_energy_residual(sch.PotentialSpec(amplitude=1e-300, radius=1.0), [10.0], 6)


def test_xi_prime_matches_born_at_weak_coupling():
    # first Born term: xi'(l) = int V / (8 pi^2 sqrt l) + O(V^2)
    weak = SMALL.normalized(1e-3)
    lam = 2.0
    c = sch.xi_prime_essential(weak, [lam], resolution=8)
    lead = weak.integral() / (8 * math.pi ** 2 * math.sqrt(lam))
    assert abs(c.derivative_xi[0] / lead - 1) < 1e-2


def test_singularity_scan():
    weak = sch.PotentialSpec(amplitude=0.05, radius=1.0)
    assert sch.scan_singularities(weak, (0.5, 1.5), resolution=8, n=9).entries == []
    tuned = sch.tune_singular_coupling(weak, 1.0, 1, 8)
    rep = sch.scan_singularities(tuned, (0.5, 1.5), resolution=8, n=11)
    assert len(rep.entries) == 1
    e = rep.entries[0]
    assert e.side == "Outgoing"
    assert e.lambda0 == pytest.approx(1.0, abs=1e-4)
    assert e.order_estimate == 1
    assert '"side": "Outgoing"' in rep.to_json()
