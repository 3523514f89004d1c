import numpy as np
import pytest

from conftest import random_hermitian
from ssfkit import rel_trace as rt
from ssfkit import ssf_trace, toy_models
from ssfkit.errors import ConfigError, GmNotInvertible, SingularShift
from ssfkit.operators import finite_pair


@pytest.fixture
def model(rng):
    h0 = np.diag([-0.7, -0.2, 0.3, 0.8])
    v = 0.2 * rng.standard_normal((4, 4)) + 0.15j * rng.standard_normal((4, 4))
    return finite_pair(h0, v)


def test_change_of_variables_maps():
    cov = rt.ChangeOfVariables(2.0, 3)
    lam = np.array([-1.0, 0.0, 1.5])
    assert np.allclose(cov.phi_inv(cov.phi(lam)).real, lam)
    h = 1e-6
    fd = (cov.phi(lam + h) - cov.phi(lam - h)) / (2 * h)
    assert np.allclose(cov.phi_derivative(lam), fd, rtol=1e-7)


def test_sector_condition():
    with pytest.raises(ConfigError):
        rt.ChangeOfVariables(1.0, 0)
    with pytest.raises(ConfigError):
        rt.ChangeOfVariables(1.0, 2, theta0=1.0)
    H, _ = finite_pair(np.diag([0.0, 1.0]), np.diag([0.0, 2j]))
    with pytest.raises(GmNotInvertible):
        rt.ChangeOfVariables(0.5, 1).check_sector(H)
    H2, _ = finite_pair(np.diag([-1.0, 1.0]), np.zeros((2, 2)))
    with pytest.raises(SingularShift):
        rt.ChangeOfVariables(1.0, 1).check_sector(H2)


def test_geometric_sum(rng):
    T = 0.4 * rng.standard_normal((5, 5))
    G = rt.geometric_sum(T, 4)
    ref = np.eye(5) + T + T @ T + T @ T @ T
    assert np.allclose(G, ref)
    assert rt.geometric_identity_residual(T, 4) < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3])
def test_resolvent_identities(model, m):
    H, H0 = model
    c = rt.auto_shift(H, H0, m)
    assert rt.resolvent_identity_check(H, c, m, 0.3 + 0.4j) < 1e-10


def test_inverse_power(rng):
    L = np.eye(4) * 3 + 0.3 * rng.standard_normal((4, 4))
    assert np.allclose(rt.matrix_inverse_power(L, 3) @ np.linalg.matrix_power(L, 3), np.eye(4))


def test_auto_shift_keeps_sector(model):
    H, H0 = model
    for m in (1, 2, 3):
        c = rt.auto_shift(H, H0, m)
        cov = rt.ChangeOfVariables(c, m)
        assert cov.check_sector(H) <= cov.sector_angle


def test_cov_matches_direct_logdet(model):
    H, H0 = model
    pts = ssf_trace.spectrum_points(H, H0)
    grid = np.linspace(-1.5, 1.5, 61)
    grid = grid[np.min(np.abs(grid[:, None] - pts[None, :]), axis=1) > 0.05]
    direct = ssf_trace.ssf_via_logdet(H0, H, grid)
    via = rt.ssf_change_of_variables(H, H0, None, grid, m=2)
    m = direct.mask_ok() & via.mask_ok()
    assert m.sum() > 20
    assert np.max(np.abs(direct.xi[m] - via.xi[m])) < 1e-6


def test_cov_cumulative_route():
    h0, v = toy_models.example_4x4()
    H, H0 = finite_pair(h0, v)
    grid = np.array([-0.5, 0.25, 0.8, 1.5, 2.5, 3.5])
    via = rt.ssf_change_of_variables(H, H0, None, grid, pipeline="cumulative")
    ref = toy_models.finite_ssf_closed_form(h0, v)(grid)
    assert np.max(np.abs(via.xi - ref)) < 1e-6


def test_rank_one_rejected():
    from ssfkit.operators import RankOneData, rank_one_pair
    H, H0 = rank_one_pair(RankOneData(0.2j))
    with pytest.raises(ConfigError):
        rt.ssf_change_of_variables(H, H0, None, np.array([0.5]))
