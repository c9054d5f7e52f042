import numpy as np
import pytest

from qjump.hilbert import (DimensionMismatchError, ZeroWeightInsertionError,
                           inner, matrix_element, pair, split, split_flat)

E0 = np.array([1, 0], dtype=complex)
E1 = np.array([0, 1], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def test_inner_orthonormal_basis():
    assert inner(E0, E0) == pytest.approx(1)
    assert inner(E0, E1) == pytest.approx(0)


def test_inner_direct_evaluation():
    u = np.array([1, 1j], dtype=complex) / np.sqrt(2)
    v = np.array([1, 0], dtype=complex)
    assert inner(u, v) == pytest.approx(1 / np.sqrt(2))


def test_inner_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        inner(E0, np.ones(3, dtype=complex))


def test_inner_conjugate_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(50):
        u, v = random_state(rng, 4), random_state(rng, 4)
        assert inner(u, v) == pytest.approx(np.conj(inner(v, u)))


def test_matrix_element_identity():
    u = np.array([0.6, 0.8j], dtype=complex)
    v = np.array([1, 1], dtype=complex) / np.sqrt(2)
    assert matrix_element(u, np.eye(2), v) == pytest.approx(inner(u, v))


def test_matrix_element_projector_eigenstate():
    proj = SIGMA_MINUS.conj().T @ SIGMA_MINUS  # |e><e|
    assert matrix_element(E1, proj, E1) == pytest.approx(1)


def test_matrix_element_ladder_action():
    assert matrix_element(E0, SIGMA_MINUS, E1) == pytest.approx(1)


def test_matrix_element_adjoint_symmetry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        u, v = random_state(rng, 3), random_state(rng, 3)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        lhs = matrix_element(u, A.conj().T, v)
        rhs = np.conj(matrix_element(v, A, u))
        assert lhs == pytest.approx(rhs)


def test_matrix_element_dim_mismatch():
    with pytest.raises(DimensionMismatchError):
        matrix_element(E0, np.eye(3), E1)


def test_pair_equal_norm_components():
    theta = pair(E0, E0)
    assert theta.weight == pytest.approx(2)
    assert np.allclose(theta.upper, E0 / np.sqrt(2))
    assert np.allclose(theta.lower, E0 / np.sqrt(2))


def test_pair_one_sided():
    theta = pair(E0, np.zeros(2, dtype=complex))
    assert theta.weight == pytest.approx(1)
    assert np.allclose(theta.upper, E0)
    assert np.allclose(theta.lower, 0)


def test_pair_zero_weight_signal():
    with pytest.raises(ZeroWeightInsertionError):
        pair(np.zeros(2, dtype=complex), np.zeros(2, dtype=complex))


def test_pair_joint_norm_unity():
    rng = np.random.default_rng(3)
    for _ in range(50):
        phi = 3.0 * random_state(rng, 5)
        psi = 0.2 * random_state(rng, 5)
        theta = pair(phi, psi)
        joint = np.linalg.norm(theta.upper) ** 2 + np.linalg.norm(theta.lower) ** 2
        assert abs(joint - 1) <= 1e-10


def test_pair_split_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        phi = 2.0 * random_state(rng, 3)
        psi = random_state(rng, 3)
        up, lo, w = split(pair(phi, psi))
        joint = np.sqrt(np.linalg.norm(phi) ** 2 + np.linalg.norm(psi) ** 2)
        assert w == pytest.approx(joint ** 2, abs=1e-12)
        assert np.allclose(up * joint, phi, atol=1e-12)
        assert np.allclose(lo * joint, psi, atol=1e-12)


def test_split_flat_blocks():
    vec = np.arange(6, dtype=complex)
    up, lo = split_flat(vec)
    assert np.array_equal(up, vec[:3])
    assert np.array_equal(lo, vec[3:])
