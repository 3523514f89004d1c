import math

import numpy as np
import pytest
from scipy.integrate import quad

from ssfkit import aax
from ssfkit.errors import InadmissibleCutoff, OrderTooHigh

# int_{-1}^{1} exp(-1/(1 - t^2)) dt, 30-digit mpmath quadrature
BUMP_MASS = 0.443993816168079437823048921171


def test_bump_mass_matches_frozen_value():
    b = aax.standard_bump(0.0, 1.0)
    val = quad(lambda x: b(x).real, -1, 1, epsabs=0, epsrel=1e-13)[0]
    assert val == pytest.approx(BUMP_MASS, rel=1e-11)


def test_bump_support_and_scaling():
    b = aax.standard_bump(2.0, 0.5)
    assert b.support == (1.5, 2.5)
    assert b.center == 2.0 and b.half_width == 0.5
    assert b(np.array([1.4, 1.5, 2.5, 2.6])).tolist() == [0, 0, 0, 0]
    assert b(2.0) == pytest.approx(math.exp(-1))


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_bump_derivatives_against_finite_differences(k):
    b = aax.standard_bump(0.1, 0.7)
    x = np.linspace(-0.4, 0.6, 9)
    h = 1e-4
    fd = (b.eval_derivative(k - 1, x + h) - b.eval_derivative(k - 1, x - h)) / (2 * h)
    exact = b.eval_derivative(k, x)
    scale = max(1.0, np.max(np.abs(exact)))
    assert np.max(np.abs(fd - exact)) < 1e-5 * scale * 10 ** k


def test_order_limit():
    b = aax.standard_bump(0.0, 1.0, max_order=6)
    with pytest.raises(OrderTooHigh):
        b.eval_derivative(7, 0.0)
    with pytest.raises(OrderTooHigh):
        aax.build_extension(b, 6)


def test_product_leibniz():
    f = aax.standard_bump(0.0, 1.0)
    g = aax.standard_bump(0.3, 0.9)
    fg = f * g
    x = np.linspace(-0.5, 0.9, 7)
    assert fg.support == pytest.approx((-0.6, 1.0))
    assert np.allclose(fg(x), f(x) * g(x))
    d1 = f.eval_derivative(1, x) * g(x) + f(x) * g.eval_derivative(1, x)
    assert np.allclose(fg.eval_derivative(1, x), d1)


def test_disjoint_product_is_zero():
    f = aax.standard_bump(0.0, 0.2)
    g = aax.standard_bump(1.0, 0.2)
    assert (f * g)(0.0) == 0


def test_from_callable_jets():
    f = aax.from_callable(lambda x: aax.sin(x) * aax.exp(x), (-1.0, 1.0))
    x = np.array([-0.3, 0.2, 0.5])
    # d/dx e^x sin x = e^x (sin x + cos x); second derivative 2 e^x cos x
    assert np.allclose(f.eval_derivative(1, x), np.exp(x) * (np.sin(x) + np.cos(x)), atol=1e-13)
    assert np.allclose(f.eval_derivative(2, x), 2 * np.exp(x) * np.cos(x), atol=1e-13)


def test_smooth_step_limits():
    u = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    s = aax.smooth_step(u)
    assert s[0] == 0 and s[1] == 0 and s[3] == 1 and s[4] == 1
    assert s[2] == pytest.approx(0.5)


def test_extension_agrees_on_real_axis():
    f = aax.standard_bump(0.0, 1.0)
    ext = aax.build_extension(f, 6)
    x = np.linspace(-0.9, 0.9, 11)
    assert np.allclose(ext.value(x + 0j), f(x), atol=1e-15)


def test_dbar_vanishes_to_order_n():
    f = aax.standard_bump(0.0, 1.0)
    N = 5
    ext = aax.build_extension(f, N)
    x = 0.3
    ys = np.array([1e-2, 5e-3, 2.5e-3])
    vals = np.abs(ext.dbar(x + 1j * ys))
    slopes = np.diff(np.log(vals)) / np.diff(np.log(ys))
    assert np.all(slopes > N - 0.2)


def test_dbar_matches_numerical_derivative():
    f = aax.standard_bump(0.2, 0.8)
    ext = aax.build_extension(f, 4)
    z = 0.35 + 0.07j
    h = 1e-6
    dx = (ext.value(z + h) - ext.value(z - h)) / (2 * h)
    dy = (ext.value(z + 1j * h) - ext.value(z - 1j * h)) / (2 * h)
    assert ext.dbar(z) == pytest.approx(0.5 * (dx + 1j * dy), abs=1e-7)


def test_cutoff_avoids_nonreal_eigenvalue():
    f = aax.standard_bump(0.0, 1.0)
    lam = 0.2 + 0.1j
    ext = aax.build_extension(f, 4, nonreal_eigs=[lam])
    assert ext.cutoff.height(lam.real) < abs(lam.imag)
    with pytest.raises(InadmissibleCutoff):
        aax.check_admissible(aax.Cutoff(0.0, 1.0), f.support, [lam])
