import math

import numpy as np
import pytest

from conftest import random_hermitian
from ssfkit import aax, ssf_trace, toy_models
from ssfkit.operators import RankOneData, finite_pair, rank_one_pair


@pytest.fixture
def model(rng):
    h0 = np.diag([-0.6, -0.1, 0.4, 0.9])
    v = 0.25 * rng.standard_normal((4, 4)) + 0.1j * rng.standard_normal((4, 4))
    return finite_pair(h0, v)


def test_sigma_is_trace_difference(model):
    H, H0 = model
    z = 0.2 + 0.3j
    n = H.dim
    ref = np.trace(np.linalg.inv(H0.matrix - z * np.eye(n)) - np.linalg.inv(H.matrix - z * np.eye(n)))
    assert ssf_trace.sigma_batch(H, H0, np.array([z]))[0] == pytest.approx(ref, rel=1e-12)


def test_logdet_step_function():
    h0, v = toy_models.example_4x4()
    H, H0 = finite_pair(h0, v)
    grid = np.array([-0.5, 0.25, 0.55, 0.8, 1.5, 2.5, 3.5])
    curve = ssf_trace.ssf_via_logdet(H0, H, grid)
    ref = toy_models.finite_ssf_closed_form(h0, v)(grid)
    m = curve.mask_ok()
    assert m.all()
    assert np.max(np.abs(curve.xi - ref)) < 1e-8


def test_pairing_three_routes(model):
    H, H0 = model
    f = aax.standard_bump(0.1, 1.3)
    spectral = ssf_trace.ssf_pairing(H, H0, f, method="spectral")
    quad = ssf_trace.ssf_pairing(H, H0, f, method="quadrature")
    via_xi = ssf_trace.pairing_via_logdet(H0, H, f)
    assert quad == pytest.approx(spectral, abs=1e-7)
    assert via_xi == pytest.approx(spectral, abs=1e-6)


def test_boundary_value_pairing(model):
    H, H0 = model
    f = aax.standard_bump(0.1, 1.3)
    spectral = ssf_trace.ssf_pairing(H, H0, f, method="spectral")
    assert ssf_trace.pairing_via_boundary_values(H, H0, f) == pytest.approx(spectral, abs=1e-6)


def test_cumulative_plateaus():
    h0, v = toy_models.example_4x4()
    H, H0 = finite_pair(h0, v)
    grid = np.linspace(-1, 4, 51)
    curve = ssf_trace.ssf_cumulative_from_pairings(H, H0, grid, width=1e-2)
    ref = toy_models.finite_ssf_closed_form(h0, v)
    far = np.min(np.abs(grid[:, None] - np.array(ref.locations)[None, :]), axis=1) > 1e-2
    assert np.max(np.abs(curve.xi[far] - ref(grid[far]))) < 1e-8


def test_derivative_bv_is_step_derivative_away_from_spectrum(model):
    H, H0 = model
    grid = np.array([-1.5, 1.5, 2.0])
    curve = ssf_trace.ssf_derivative_bv(H, H0, grid)
    assert np.max(np.abs(curve.derivative_xi)) < 1e-6


def test_phase_tracking_against_dense_unwrap():
    # zero just above the axis, pole far away: the phase turns by about pi near 0
    z1, z2 = 1e-3j, 3.0 - 1.0j
    D = lambda x: (np.asarray(x) - z1) / (np.asarray(x) - z2)
    grid = np.array([-1.0, 0.5, 2.0])
    arg, _, _, _ = ssf_trace.track_phase(D, grid, guard_points=[0.0], eps=1e-3)
    dense = np.concatenate((-np.geomspace(1e7, 1e-6, 200000), np.linspace(0, 2.0, 200001)))
    ref = np.unwrap(np.angle(D(dense)))
    ref = ref - round(ref[0] / (2 * math.pi)) * 2 * math.pi
    assert np.allclose(arg, np.interp(grid, dense, ref), atol=1e-6)


def test_grid_starting_right_of_spectrum():
    H, H0 = rank_one_pair(RankOneData(0.4j))
    curve = ssf_trace.ssf_via_logdet(H0, H, np.array([1.2, 1.5]))
    assert np.allclose(curve.xi, 1.0, atol=1e-8)


def test_logdet_anchor_is_zero_left_of_spectrum(model):
    H, H0 = model
    curve = ssf_trace.ssf_via_logdet(H0, H, np.array([-3.0, -2.0]))
    assert np.max(np.abs(curve.xi)) < 1e-8


def test_adjoint_symmetry_toy():
    H, H0 = rank_one_pair(RankOneData(0.25j))
    grid = np.linspace(0.05, 0.95, 19)
    assert ssf_trace.adjoint_ssf_check(H, H0, grid) < 1e-10


def test_grid_must_increase():
    with pytest.raises(ValueError):
        ssf_trace.SsfCurve(np.array([1.0, 0.5]), None)
