import numpy as np
import pytest

from conftest import random_hermitian
from ssfkit import aax, funcalc
from ssfkit.errors import ContourHitsSpectrum
from ssfkit.operators import finite_pair, resolvent


def eig_apply(A, fn):
    lam, S = np.linalg.eig(A)
    return S @ np.diag(fn(lam)) @ np.linalg.inv(S)


@pytest.fixture
def hermitian(rng):
    return finite_pair(random_hermitian(rng, 6), np.zeros((6, 6)))[0]


@pytest.fixture
def nonnormal(rng):
    # real spectrum, strongly non-normal
    lam = np.linspace(-0.8, 0.8, 5)
    S = np.eye(5) + 0.5 * np.triu(rng.standard_normal((5, 5)), 1)
    A = S @ np.diag(lam) @ np.linalg.inv(S)
    return finite_pair(np.diag(lam), A - np.diag(lam))[0]


def test_hs_quadrature_hermitian(hermitian):
    f = aax.standard_bump(0.0, 1.2)
    F = funcalc.apply_function(hermitian, funcalc.extension_for(hermitian, f))
    ref = eig_apply(hermitian.matrix, lambda x: f(x.real))
    assert np.linalg.norm(F - ref, 2) < 1e-8


def test_spectral_fast_path(nonnormal):
    f = aax.standard_bump(0.1, 0.9)
    F = funcalc.apply_function_spectral(nonnormal, f)
    ref = eig_apply(nonnormal.matrix, lambda x: f(x.real))
    assert np.linalg.norm(F - ref, 2) < 1e-10
    assert funcalc.trace_function_spectral(nonnormal, f) == pytest.approx(np.trace(ref), abs=1e-10)


def test_trace_quadrature_matches_matrix(nonnormal):
    f = aax.standard_bump(0.0, 1.0)
    ext = funcalc.extension_for(nonnormal, f)
    F = funcalc.apply_function(nonnormal, ext)
    assert funcalc.trace_apply_function(nonnormal, ext) == pytest.approx(np.trace(F), abs=1e-9)


def test_stone_formula(nonnormal):
    f = aax.standard_bump(0.0, 1.0)
    ref = eig_apply(nonnormal.matrix, lambda x: f(x.real))
    assert np.linalg.norm(funcalc.stone_formula(nonnormal, f) - ref, 2) < 1e-6


def test_riesz_projection_jordan_block():
    A = np.array([[0.5, 1.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 2.0]])
    H = finite_pair(np.diag([0.5, 0.5, 2.0]), A - np.diag([0.5, 0.5, 2.0]))[0]
    P = funcalc.riesz_projection(H, 0.5, 0.5)
    assert np.allclose(P, np.diag([1, 1, 0]), atol=1e-10)
    with pytest.raises(ContourHitsSpectrum):
        funcalc.riesz_projection(H, 0.5, 1.5)


def test_eigen_clusters_multiplicity():
    A = np.array([[0.5, 1.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.2 + 0.3j]])
    base = np.diag([0.5, 0.5, 0.2])
    H = finite_pair(base, A - base)[0]
    clusters = funcalc.eigen_clusters(H)
    mults = sorted(m for _, m, _ in clusters)
    assert mults == [1, 2]
    assert funcalc.nonreal_eigenvalues(H)[0] == pytest.approx(0.2 + 0.3j)


def test_resolvent_via_calculus_reconstruction():
    base = np.diag([0.0, 0.5, 1.0])
    v = np.zeros((3, 3), complex)
    v[1, 1] = 0.4j
    v[0, 2] = 0.3
    H = finite_pair(base, v)[0]
    omega = 2.0 + 1.0j
    r = funcalc.resolvent_via_calculus(H, omega)
    Pc = funcalc.complex_projector(H)
    assert np.allclose(r, resolvent(H, omega) @ (np.eye(3) - Pc), atol=1e-10)
    assert np.allclose(Pc @ Pc, Pc, atol=1e-10)


def test_function_of_complex_eigenvalue_block():
    # f(H) on the real part only; the complex eigenvalue is kept away by the cutoff
    base = np.diag([0.0, 0.3, 0.6])
    v = np.diag([0.0, 0.0, 0.2j])
    H = finite_pair(base, v)[0]
    f = aax.standard_bump(0.2, 0.5)
    F = funcalc.apply_function(H, funcalc.extension_for(H, f))
    assert np.allclose(np.diag(F)[:2], f(np.array([0.0, 0.3])), atol=1e-8)
