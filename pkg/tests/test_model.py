import numpy as np
import pytest

from qjump.model import (EXCITED, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X,
                         CoefficientRangeError, Constant, DecayChannel,
                         HamiltonianTerm, LindbladModel, PiecewiseConstant,
                         Sinusoid, effective_hamiltonian, hamiltonian_at,
                         is_time_independent, lift_to_doubled,
                         preset_two_level)


def random_model(rng, dim=4, channels=2):
    base = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = 0.5 * (base + base.conj().T)
    chans = []
    for _ in range(channels):
        J = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        chans.append(DecayChannel(rate=float(rng.uniform(0.1, 2.0)), jump_op=J))
    return LindbladModel(dim=dim, terms=(HamiltonianTerm(base=H),),
                         channels=tuple(chans))


def test_constant_model_time_independent():
    m = preset_two_level(3.0, 1.0)
    assert is_time_independent(m)
    assert np.allclose(hamiltonian_at(m, 0.0), hamiltonian_at(m, 7.3))


def test_sinusoid_coefficient():
    m = LindbladModel(dim=2, terms=(HamiltonianTerm(
        base=SIGMA_X, coeff=Sinusoid(amplitude=1.0, omega=2.0)),))
    assert np.allclose(hamiltonian_at(m, 0.0), SIGMA_X)
    assert np.allclose(hamiltonian_at(m, np.pi / 4), 0.0, atol=1e-15)


def test_piecewise_constant_out_of_range():
    coeff = PiecewiseConstant(times=(0.0, 1.0, 2.0), values=(1.0, 0.5, 0.0))
    assert coeff(0.5) == 1.0
    assert coeff(1.0) == 0.5
    m = LindbladModel(dim=2, terms=(HamiltonianTerm(base=SIGMA_X, coeff=coeff),))
    with pytest.raises(CoefficientRangeError):
        hamiltonian_at(m, 5.0)


def test_preset_benchmark_hamiltonian():
    m = preset_two_level(10.0, 1.0)
    H = hamiltonian_at(m, 0.0)
    assert np.allclose(H, 5.0 * (SIGMA_PLUS + SIGMA_MINUS))
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12
    assert len(m.channels) == 1
    assert m.channels[0].rate == 1.0


def test_preset_pure_decay():
    m = preset_two_level(0.0, 1.0)
    assert np.allclose(hamiltonian_at(m, 0.0), 0.0)


def test_nonhermitian_base_rejected():
    with pytest.raises(ValueError):
        HamiltonianTerm(base=SIGMA_MINUS)


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        DecayChannel(rate=-1.0, jump_op=SIGMA_MINUS)


def test_effective_hamiltonian_no_channels():
    m = LindbladModel(dim=2, terms=(HamiltonianTerm(base=SIGMA_X),))
    assert np.allclose(effective_hamiltonian(m, 0.0), SIGMA_X)


def test_effective_hamiltonian_pure_decay():
    m = preset_two_level(0.0, 1.0)
    expected = -0.5j * np.diag([0.0, 1.0])
    assert np.allclose(effective_hamiltonian(m, 0.0), expected)


def test_effective_hamiltonian_antihermitian_part_negative():
    # eigenvalue oracle on random 4-level models
    rng = np.random.default_rng(21)
    for _ in range(20):
        m = random_model(rng)
        Heff = effective_hamiltonian(m, 0.0)
        K = (Heff - Heff.conj().T) / 2j  # anti-hermitian part, hermitian matrix
        assert np.max(np.linalg.eigvalsh(K)) <= 1e-10


def test_lift_identity():
    m = LindbladModel(dim=3, terms=(HamiltonianTerm(base=np.eye(3)),))
    lifted = lift_to_doubled(m)
    assert lifted.dim == 6
    assert np.allclose(hamiltonian_at(lifted, 0.0), np.eye(6))


def test_lift_block_action():
    m = preset_two_level(0.0, 1.0)
    lifted = lift_to_doubled(m)
    J = lifted.channels[0].jump_op
    phi, psi = EXCITED, 0.5 * EXCITED
    theta = np.concatenate([phi, psi])
    out = J @ theta
    assert np.allclose(out[:2], SIGMA_MINUS @ phi)
    assert np.allclose(out[2:], SIGMA_MINUS @ psi)


def test_lift_commutes_with_effective_hamiltonian():
    rng = np.random.default_rng(2)
    m = random_model(rng, dim=3)
    lifted = lift_to_doubled(m)
    Heff = effective_hamiltonian(m, 0.0)
    Heff_lifted = effective_hamiltonian(lifted, 0.0)
    manual = np.zeros((6, 6), dtype=complex)
    manual[:3, :3] = Heff
    manual[3:, 3:] = Heff
    assert np.max(np.abs(Heff_lifted - manual)) <= 1e-14


def test_lift_preserves_rates_and_off_diagonal_zero():
    rng = np.random.default_rng(9)
    m = random_model(rng)
    lifted = lift_to_doubled(m)
    assert [c.rate for c in lifted.channels] == [c.rate for c in m.channels]
    d = m.dim
    for ch in lifted.channels:
        assert np.all(ch.jump_op[:d, d:] == 0)
        assert np.all(ch.jump_op[d:, :d] == 0)
    for term, term_l in zip(m.terms, lifted.terms):
        assert np.max(np.abs(term_l.base - term_l.base.conj().T)) <= 1e-12


def test_dim_consistency_enforced():
    with pytest.raises(ValueError):
        LindbladModel(dim=3, channels=(DecayChannel(rate=1.0,
                                                    jump_op=SIGMA_MINUS),))
    with pytest.raises(ValueError):
        LindbladModel(dim=0)
