"""Stochastic wave-function simulation of open quantum systems.

Quantum-jump trajectories in the single and doubled Hilbert spaces, with
estimators for expectation values, reduced Heisenberg-picture matrix
elements and time-ordered multitime correlation functions, validated
against a dense master-equation oracle.
"""

from .estimators import (CorrelationSpec, EstimateSeries, build_fg_schedule,
                         correlation, expectation, heisenberg_element,
                         spectrum, stationary_correlation, statistics_merge)
from .hilbert import PairedState, inner, matrix_element, pair, split
from .model import (EXCITED, GROUND, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X,
                    SIGMA_Z, DecayChannel, HamiltonianTerm, LindbladModel,
                    effective_hamiltonian, hamiltonian_at, lift_to_doubled,
                    preset_two_level)
from .oracle import (heisenberg_oracle, integrate_master, liouvillian_apply,
                     regression_correlation, steady_state)
from .propagator import StepControl, evolve, find_jump_time
from .trajectory import (KickMode, RngStream, TrajectoryRecord, apply_jump,
                         run_trajectory, run_trajectory_kick, select_channel)

__version__ = "0.1.0"
