import numpy as np
import pytest

from conftest import random_hermitian
from ssfkit import operators as op
from ssfkit.errors import NonHermitianBase, RealAxisEvaluation, UnboundedPerturbation
from ssfkit.toy_models import interacting_determinant


def test_finite_pair_and_base(rng):
    h0 = random_hermitian(rng, 5)
    v = rng.standard_normal((5, 5)) * 0.2
    H, H0 = op.finite_pair(h0, v)
    assert np.allclose(H.matrix, h0 + v)
    assert np.allclose(H0.matrix, h0)
    assert H0.is_hermitian


def test_non_hermitian_base_rejected(rng):
    with pytest.raises(NonHermitianBase):
        op.finite_pair(rng.standard_normal((3, 3)), np.zeros((3, 3)))
    v = np.zeros((2, 2))
    v[0, 0] = np.inf
    with pytest.raises(UnboundedPerturbation):
        op.finite_pair(np.eye(2), v)


def test_resolvent_matches_inverse(rng):
    H, _ = op.finite_pair(random_hermitian(rng, 6), 0.3j * rng.standard_normal((6, 6)))
    z = 0.3 + 0.4j
    R = op.resolvent(H, z)
    assert np.allclose(R @ (H.matrix - z * np.eye(6)), np.eye(6), atol=1e-12)
    batch = H.resolvent_batch(np.array([z, 2j]))
    assert np.allclose(batch[0], R, atol=1e-12)
    T, Q = H.schur
    S = H.resolvent_sum(np.array([z, 2j]), np.array([1.0, 0.5]))
    ref = R + 0.5 * op.resolvent(H, 2j)
    assert np.allclose(Q @ S @ Q.conj().T, ref, atol=1e-12)


def test_trace_resolvent_diff_and_determinant(rng):
    h0 = random_hermitian(rng, 4)
    v = 0.4 * rng.standard_normal((4, 4))
    H, H0 = op.finite_pair(h0, v)
    z = 0.1 + 0.5j
    t = op.trace_resolvent_diff(H, H0, z)
    ref = np.trace(np.linalg.inv(h0 - z * np.eye(4)) - np.linalg.inv(h0 + v - z * np.eye(4)))
    assert t == pytest.approx(ref, rel=1e-12)
    D = op.perturbation_determinant(H0, H, z)
    ref_d = np.linalg.det(np.eye(4) + v @ np.linalg.inv(h0 - z * np.eye(4)))
    assert D == pytest.approx(ref_d, rel=1e-12)


def test_rank_one_determinant_closed_form():
    # D(z) = 1 + i beta int_0^1 dx / (x - z) for u0 = 1_[0,1]
    H, H0 = op.rank_one_pair(op.RankOneData(0.4j))
    z = 0.3 + 0.2j
    # 30-digit mpmath value of 1 + 0.4 i log((1 - z)/(-z))
    frozen = 0.0898838435851542363927586629201 + 0.281068511218117046177841342822j
    assert op.perturbation_determinant(H0, H, z) == pytest.approx(frozen, abs=1e-14)
    assert interacting_determinant(0.4, z) == pytest.approx(frozen, abs=1e-14)


def test_rank_one_real_axis_rejected():
    with pytest.raises(RealAxisEvaluation):
        interacting_determinant(0.3, 0.5)


def test_adjoint_spec(rng):
    h0 = random_hermitian(rng, 3)
    v = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    H, _ = op.finite_pair(h0, v)
    A = op.build_operator(H.spec.adjoint())
    assert np.allclose(A.matrix, H.matrix.conj().T)


def test_dense_matrix_roundtrip(tmp_path, rng):
    m = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    p = tmp_path / "m.txt"
    op.write_dense_matrix(p, m)
    assert np.array_equal(op.read_dense_matrix(p), m)
