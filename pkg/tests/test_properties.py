import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ssfkit import aax, funcalc, rel_trace, ssf_trace, toy_models
from ssfkit.operators import RankOneData, finite_pair, rank_one_pair

seeds = st.integers(0, 2**32 - 1)


def random_model(seed, n=4, complex_part=0.15):
    rng = np.random.default_rng(seed)
    h0 = np.diag(np.sort(rng.uniform(-1, 1, n)))
    v = 0.3 * rng.standard_normal((n, n)) + complex_part * 1j * rng.standard_normal((n, n))
    return finite_pair(h0, v)


def clear_points(H, H0, grid, gap=0.05):
    pts = ssf_trace.spectrum_points(H, H0)
    return grid[np.min(np.abs(grid[:, None] - pts[None, :]), axis=1) > gap]


@given(seeds, st.floats(-2, 2), st.floats(0.2, 1.0), st.sampled_from([1, -1]))
def test_sigma_is_log_derivative(seed, x, y, sgn):
    H, H0 = random_model(seed)
    z = complex(x, sgn * y)
    if np.min(np.abs(np.concatenate([H.eigenvalues, H0.eigenvalues]) - z)) < 0.1:
        return
    D = ssf_trace.determinant_fn(H0, H)
    h = 1e-5
    dd = (D(np.array([z + h]))[0] - D(np.array([z - h]))[0]) / (2 * h) / D(np.array([z]))[0]
    assert abs(ssf_trace.sigma_batch(H, H0, np.array([z]))[0] - dd) < 1e-6


@given(seeds)
def test_xi_integer_valued_off_spectrum(seed):
    H, H0 = random_model(seed)
    grid = clear_points(H, H0, np.linspace(-2.5, 2.5, 41))
    xi = ssf_trace.ssf_via_logdet(H0, H, grid).xi
    assert np.max(np.abs(xi - np.round(xi.real))) < 1e-8


@given(seeds)
def test_xi_vanishes_below_spectrum(seed):
    H, H0 = random_model(seed)
    lo = min(H.eigenvalues.real.min(), H0.eigenvalues.real.min())
    xi = ssf_trace.ssf_via_logdet(H0, H, np.array([lo - 1.0, lo - 0.2])).xi
    assert np.max(np.abs(xi)) < 1e-8


@given(seeds)
def test_adjoint_conjugates_xi(seed):
    H, H0 = random_model(seed)
    grid = clear_points(H, H0, np.linspace(-2, 2, 31))
    assert ssf_trace.adjoint_ssf_check(H, H0, grid) < 1e-8


@given(seeds, st.floats(-0.5, 0.5), st.floats(0.4, 1.2))
def test_trace_formula_two_routes(seed, c, w):
    H, H0 = random_model(seed, complex_part=0.0)
    f = aax.standard_bump(c, w)
    direct = ssf_trace.ssf_pairing(H, H0, f, method="spectral")
    via_xi = ssf_trace.pairing_via_logdet(H0, H, f)
    assert abs(direct - via_xi) < 1e-6


@given(st.floats(0.01, 0.3), st.floats(0.02, 0.98))
def test_closed_form_adjoint_and_bounds(beta, lam):
    xi = toy_models.interacting_ssf_closed_form(beta, lam)
    assert toy_models.interacting_ssf_closed_form(-beta, lam) == np.conj(xi)
    # Im xi >= 0 for gamma = i beta with beta > 0 (dissipative direction)
    assert xi.imag >= 0


@given(st.floats(0.05, 0.3), st.floats(0.05, 0.95))
def test_rank_one_logdet_matches_closed_form(beta, lam):
    H, H0 = rank_one_pair(RankOneData(1j * beta))
    grid = np.array([lam])
    curve = ssf_trace.ssf_via_logdet(H0, H, grid)
    assert abs(curve.xi[0] - toy_models.interacting_ssf_closed_form(beta, lam)) < 1e-6


@given(seeds, st.integers(1, 5))
def test_geometric_identities(seed, m):
    rng = np.random.default_rng(seed)
    T = 0.3 * rng.standard_normal((4, 4)) + 0.1j * rng.standard_normal((4, 4))
    G = rel_trace.geometric_sum(T, m)
    Tm = np.linalg.matrix_power(T, m)
    assert np.allclose(Tm - np.eye(4), (T - np.eye(4)) @ G, atol=1e-12)
    assert rel_trace.geometric_identity_residual(T, m) < 1e-10


@given(seeds, st.integers(1, 3))
def test_cov_invariance(seed, m):
    H, H0 = random_model(seed)
    grid = clear_points(H, H0, np.linspace(-1.8, 1.8, 25), gap=0.1)
    a = rel_trace.ssf_change_of_variables(H, H0, None, grid, m=m)
    b = ssf_trace.ssf_via_logdet(H0, H, grid)
    mask = a.mask_ok() & b.mask_ok()
    assert np.max(np.abs(a.xi[mask] - b.xi[mask]), initial=0.0) < 1e-6


@given(seeds)
def test_spectral_calculus_is_multiplicative(seed):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(-1, 1, 5))
    S = np.eye(5) + 0.3 * rng.standard_normal((5, 5))
    A = S @ np.diag(lam) @ np.linalg.inv(S)
    H = finite_pair(np.diag(lam), A - np.diag(lam))[0]
    f = aax.standard_bump(0.0, 1.1)
    g = aax.standard_bump(0.2, 0.9)
    F = funcalc.apply_function_spectral(H, f)
    G = funcalc.apply_function_spectral(H, g)
    FG = funcalc.apply_function_spectral(H, f * g)
    scale = np.linalg.norm(F, 2) * np.linalg.norm(G, 2) + 1e-300
    assert np.linalg.norm(FG - F @ G, 2) <= 1e-8 * max(scale, 1.0)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-2, 2)), max_size=5),
       st.lists(st.tuples(st.floats(-5, 5), st.floats(-2, 2)), max_size=5),
       st.floats(-6, 6))
def test_step_functions_add(j1, j2, x):
    a, b = toy_models.StepFunction(tuple(j1)), toy_models.StepFunction(tuple(j2))
    assert math.isclose((a + b)(x), a(x) + b(x), abs_tol=1e-12)


@given(st.floats(-1, 1), st.floats(0.1, 2), st.floats(-3, 3))
def test_shift_commutes_with_evaluation(c, w, dx):
    f = aax.standard_bump(c, w)
    x = np.linspace(c - w, c + w, 7) + dx
    assert np.allclose(f.shifted(dx)(x), f(x - dx))
