import numpy as np
import pytest
import scipy.linalg

from qjump.model import (EXCITED, GROUND, SIGMA_X, HamiltonianTerm,
                         LindbladModel, Sinusoid, effective_hamiltonian,
                         preset_two_level)
from qjump.hilbert import pair
from qjump.propagator import (EffectivePropagator, StepControl, evolve,
                              find_jump_time)

PURE_DECAY = preset_two_level(0.0, 1.0)
DRIVEN = preset_two_level(10.0, 1.0)


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(dt_max=-0.01)
    with pytest.raises(ValueError):
        StepControl(dt_max=0.01, tol_T=0.02)


def test_reversed_interval_rejected():
    with pytest.raises(ValueError):
        evolve(GROUND, PURE_DECAY, 1.0, 0.0)


def test_unitary_limit_norm_conserved():
    m = preset_two_level(2.0, 0.0)  # no channels
    psi0 = (GROUND + EXCITED) / np.sqrt(2)
    psi = evolve(psi0, m, 0.0, 5.0)
    assert abs(np.linalg.norm(psi) - 1.0) <= 1e-8


def test_pure_decay_norm_law():
    # |e> under H_eff = -(i/2)|e><e|: norm^2 = exp(-t)
    psi = evolve(EXCITED, PURE_DECAY, 0.0, np.log(2.0))
    assert np.linalg.norm(psi) ** 2 == pytest.approx(0.5, abs=1e-6)


def test_driven_atom_matches_matrix_exponential():
    Heff = effective_hamiltonian(DRIVEN, 0.0)
    ref = scipy.linalg.expm(-1j * 0.1 * Heff) @ GROUND
    psi = evolve(GROUND, DRIVEN, 0.0, 0.1)
    assert np.max(np.abs(psi - ref)) <= 1e-7


def test_fourth_order_convergence():
    Heff = effective_hamiltonian(DRIVEN, 0.0)
    ref = scipy.linalg.expm(-1j * 1.0 * Heff) @ GROUND
    errs = []
    for dt in (0.02, 0.01, 0.005):
        y = evolve(GROUND, DRIVEN, 0.0, 1.0, StepControl(dt_max=dt, tol_T=1e-9))
        errs.append(np.linalg.norm(y - ref))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.3)
    assert errs[1] / errs[2] == pytest.approx(16.0, rel=0.3)


def test_time_dependent_path_against_dense_reference():
    m = LindbladModel(dim=2, terms=(HamiltonianTerm(
        base=SIGMA_X, coeff=Sinusoid(amplitude=2.0, omega=3.0)),),
        channels=PURE_DECAY.channels)
    from scipy.integrate import solve_ivp

    def rhs(t, y):
        return -1j * effective_hamiltonian(m, t) @ y

    sol = solve_ivp(rhs, (0.0, 2.0), EXCITED.astype(complex),
                    rtol=1e-11, atol=1e-12)
    ref = sol.y[:, -1]
    y = evolve(EXCITED, m, 0.0, 2.0)
    assert np.max(np.abs(y - ref)) <= 1e-6


def test_evolve_paired_state_blockwise():
    theta = pair(GROUND, EXCITED)
    out = evolve(theta, preset_two_level(2.0, 0.5), 0.0, 0.7)
    up = evolve(theta.upper, preset_two_level(2.0, 0.5), 0.0, 0.7)
    lo = evolve(theta.lower, preset_two_level(2.0, 0.5), 0.0, 0.7)
    assert out.weight == theta.weight
    assert np.allclose(out.upper, up, atol=1e-12)
    assert np.allclose(out.lower, lo, atol=1e-12)


def test_norm_monotone_along_evolution():
    prop = EffectivePropagator(DRIVEN, StepControl())
    y = (GROUND + 1j * EXCITED) / np.sqrt(2)
    prev = np.linalg.norm(y)
    t, h = 0.0, prop.base_step
    for _ in range(400):
        y = prop.step(y, t, h)
        t += h
        cur = np.linalg.norm(y)
        assert cur <= prev + 1e-12
        prev = cur


def test_find_jump_time_pure_decay():
    res = find_jump_time(EXCITED, PURE_DECAY, 0.0, 10.0, 0.5)
    assert res.jumped
    assert res.time == pytest.approx(np.log(2.0), abs=2e-6)
    assert np.linalg.norm(res.state) ** 2 == pytest.approx(0.5, abs=1e-5)


def test_find_jump_time_boundary_eta_one():
    res = find_jump_time(EXCITED, PURE_DECAY, 0.3, 10.0, 1.0)
    assert res.jumped
    assert res.time == 0.3


def test_find_jump_time_no_channels():
    m = preset_two_level(2.0, 0.0)
    res = find_jump_time(GROUND, m, 0.0, 4.0, 0.5)
    assert not res.jumped
    assert res.time == 4.0


def test_find_jump_time_bad_eta():
    with pytest.raises(ValueError):
        find_jump_time(EXCITED, PURE_DECAY, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        find_jump_time(0.1 * EXCITED, PURE_DECAY, 0.0, 1.0, 0.5)


def test_find_jump_time_deterministic():
    r1 = find_jump_time(EXCITED, DRIVEN, 0.0, 10.0, 0.37)
    r2 = find_jump_time(EXCITED, DRIVEN, 0.0, 10.0, 0.37)
    assert r1.time == r2.time
    assert np.array_equal(r1.state, r2.state)
