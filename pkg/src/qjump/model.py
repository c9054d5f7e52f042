"""Declarative Lindblad models and their lifting to the doubled space.

Basis convention for the two-level presets: index 0 = ground, index 1 =
excited, so sigma_minus = |g><e| = [[0,1],[0,0]].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import as_operator

__all__ = [
    "CoefficientRangeError",
    "Constant",
    "Sinusoid",
    "PiecewiseConstant",
    "DecayChannel",
    "HamiltonianTerm",
    "LindbladModel",
    "hamiltonian_at",
    "effective_hamiltonian",
    "lift_to_doubled",
    "preset_two_level",
    "is_time_independent",
    "SIGMA_MINUS",
    "SIGMA_PLUS",
    "SIGMA_X",
    "SIGMA_Z",
    "GROUND",
    "EXCITED",
]

HERMITICITY_TOL = 1e-12

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=np.complex128)
GROUND = np.array([1, 0], dtype=np.complex128)
EXCITED = np.array([0, 1], dtype=np.complex128)


class CoefficientRangeError(ValueError):
    """Time outside the domain of a piecewise-constant coefficient."""


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    omega: float
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.cos(self.omega * t + self.phase)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Table of (time, value); value at t is the entry whose time is the
    largest table time <= t. No extrapolation outside [t_first, t_last]."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("times and values must be non-empty, equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")

    def __call__(self, t: float) -> float:
        if t < self.times[0] or t > self.times[-1]:
            raise CoefficientRangeError(
                f"t={t} outside table range [{self.times[0]}, {self.times[-1]}]")
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[min(idx, len(self.values) - 1)]


@dataclass(frozen=True)
class DecayChannel:
    rate: float
    jump_op: np.ndarray

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"decay rate must be >= 0, got {self.rate}")
        object.__setattr__(self, "jump_op", as_operator(self.jump_op))


@dataclass(frozen=True)
class HamiltonianTerm:
    base: np.ndarray
    coeff: Constant | Sinusoid | PiecewiseConstant = field(
        default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        base = as_operator(self.base)
        if np.max(np.abs(base - base.conj().T)) > HERMITICITY_TOL:
            raise ValueError("Hamiltonian term base is not hermitian")
        object.__setattr__(self, "base", base)


@dataclass(frozen=True)
class LindbladModel:
    dim: int
    terms: tuple[HamiltonianTerm, ...] = ()
    channels: tuple[DecayChannel, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "channels", tuple(self.channels))
        for term in self.terms:
            if term.base.shape[0] != self.dim:
                raise ValueError("Hamiltonian term dim != model dim")
        for ch in self.channels:
            if ch.jump_op.shape[0] != self.dim:
                raise ValueError("jump operator dim != model dim")

    def decay_sum(self) -> np.ndarray:
        """Sum_i gamma_i J_i^dag J_i (the anti-hermitian part source)."""
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for ch in self.channels:
            out += ch.rate * (ch.jump_op.conj().T @ ch.jump_op)
        return out


def is_time_independent(model: LindbladModel) -> bool:
    return all(isinstance(term.coeff, Constant) for term in model.terms)


def hamiltonian_at(model: LindbladModel, t: float) -> np.ndarray:
    """H(t) = sum of coeff(t) * base over all terms."""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    H = np.zeros((model.dim, model.dim), dtype=np.complex128)
    for term in model.terms:
        H += term.coeff(t) * term.base
    return H


def effective_hamiltonian(model: LindbladModel, t: float) -> np.ndarray:
    """Non-hermitian generator H(t) - (i/2) sum_i gamma_i J_i^dag J_i."""
    return hamiltonian_at(model, t) - 0.5j * model.decay_sum()


def _block_diag(M: np.ndarray) -> np.ndarray:
    dim = M.shape[0]
    out = np.zeros((2 * dim, 2 * dim), dtype=np.complex128)
    out[:dim, :dim] = M
    out[dim:, dim:] = M
    return out


def lift_to_doubled(model: LindbladModel) -> LindbladModel:
    """Replace every operator by diag(M, M) on H (+) H; rates unchanged."""
    terms = tuple(
        HamiltonianTerm(base=_block_diag(term.base), coeff=term.coeff)
        for term in model.terms)
    channels = tuple(
        DecayChannel(rate=ch.rate, jump_op=_block_diag(ch.jump_op))
        for ch in model.channels)
    return LindbladModel(dim=2 * model.dim, terms=terms, channels=channels)


def preset_two_level(omega: float, gamma: float, delta: float = 0.0) -> LindbladModel:
    """Coherently driven two-level atom in the rotating frame.

    H = (omega/2)(sigma+ + sigma-) - delta |e><e|, one decay channel
    (gamma, sigma-). gamma sets the inverse time unit.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    H = 0.5 * omega * (SIGMA_PLUS + SIGMA_MINUS) - delta * np.diag([0.0, 1.0])
    return LindbladModel(
        dim=2,
        terms=(HamiltonianTerm(base=H),),
        channels=(DecayChannel(rate=gamma, jump_op=SIGMA_MINUS),),
    )
