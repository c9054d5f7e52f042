"""Deterministic non-unitary evolution between jumps and jump-time search.

Integrates i d/ds theta = H_eff(s) theta with a classical 4th-order
fixed-step scheme. For time-independent models the RK4 update of a
linear system collapses to a single precomputed one-step matrix, which
is what makes large trajectory ensembles cheap. The state is never
renormalized here: the norm decay is the physics that drives the jump
times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hilbert import PairedState, split_flat
from .model import LindbladModel, effective_hamiltonian, is_time_independent

__all__ = [
    "StepControl",
    "NumericalBlowupError",
    "EffectivePropagator",
    "JumpSearchResult",
    "evolve",
    "find_jump_time",
]


@dataclass(frozen=True)
class StepControl:
    dt_max: float = 0.01
    tol_T: float = 1e-6
    safety: float = 0.1

    def __post_init__(self):
        if self.dt_max <= 0 or self.tol_T <= 0 or self.safety <= 0:
            raise ValueError("StepControl fields must be positive")
        if self.tol_T >= self.dt_max:
            raise ValueError("tol_T must be smaller than dt_max")


class NumericalBlowupError(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"non-finite state during integration near t={t}")
        self.time = t


class EffectivePropagator:
    """One-step RK4 propagator for a fixed model and step control."""

    def __init__(self, model: LindbladModel, ctrl: StepControl | None = None):
        self.model = model
        self.ctrl = ctrl or StepControl()
        self.time_independent = is_time_independent(model)
        if self.time_independent:
            self._A = -1j * effective_hamiltonian(model, 0.0)
            hmax = float(np.max(np.abs(self._A)))
            self._step_cache: dict = {}
            self._eye = np.eye(model.dim, dtype=np.complex128)
        else:
            self._A = None
            hmax = float(np.max(np.abs(effective_hamiltonian(model, 0.0))))
        self.base_step = min(self.ctrl.dt_max,
                             self.ctrl.safety / hmax if hmax > 0 else math.inf)

    def _generator(self, t: float) -> np.ndarray:
        if self.time_independent:
            return self._A
        return -1j * effective_hamiltonian(self.model, t)

    def step_matrix(self, h: float) -> np.ndarray:
        """RK4 one-step matrix for the time-independent case (the degree-4
        Taylor polynomial of expm(h A), which is exactly what classical RK4
        produces for a linear autonomous system)."""
        M = self._step_cache.get(h)
        if M is None:
            hA = h * self._A
            M = self._eye
            for k in (4.0, 3.0, 2.0, 1.0):
                M = self._eye + (hA / k) @ M
            self._step_cache[h] = M
            if len(self._step_cache) > 64:
                self._step_cache.pop(next(iter(self._step_cache)))
        return M

    def step(self, y: np.ndarray, t: float, h: float) -> np.ndarray:
        """Advance y from t to t+h with one classical RK4 step."""
        if self.time_independent:
            return self.step_matrix(h) @ y
        k1 = self._generator(t) @ y
        Amid = self._generator(t + 0.5 * h)
        k2 = Amid @ (y + 0.5 * h * k1)
        k3 = Amid @ (y + 0.5 * h * k2)
        k4 = self._generator(t + h) @ (y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def step_size_at(self, t: float) -> float:
        if self.time_independent:
            return self.base_step
        hmax = float(np.max(np.abs(self._generator(t))))
        return min(self.ctrl.dt_max,
                   self.ctrl.safety / hmax if hmax > 0 else math.inf)

    def block_matrix(self, h: float, k: int) -> np.ndarray:
        """k-fold product of the one-step matrix, for coarse scanning."""
        key = (h, k)
        M = self._step_cache.get(key)
        if M is None:
            M = np.linalg.matrix_power(self.step_matrix(h), k)
            self._step_cache[key] = M
            if len(self._step_cache) > 64:
                self._step_cache.pop(next(iter(self._step_cache)))
        return M


def _coerce_prop(model_or_prop, ctrl) -> EffectivePropagator:
    if isinstance(model_or_prop, EffectivePropagator):
        return model_or_prop
    return EffectivePropagator(model_or_prop, ctrl)


def _evolve_vec(prop: EffectivePropagator, y: np.ndarray,
                t0: float, t1: float) -> np.ndarray:
    span = t1 - t0
    if span == 0.0:
        return y.copy()
    h_base = prop.step_size_at(t0)
    nsteps = max(1, math.ceil(span / h_base))
    h = span / nsteps
    if prop.time_independent:
        y = prop.block_matrix(h, nsteps) @ y
    else:
        for k in range(nsteps):
            y = prop.step(y, t0 + k * h, h)
    if not np.all(np.isfinite(y.view(np.float64))):
        raise NumericalBlowupError(t1)
    return y


def evolve(state, model_or_prop, t0: float, t1: float,
           ctrl: StepControl | None = None):
    """Integrate the effective-Hamiltonian equation from t0 to t1.

    Accepts a plain state vector or a PairedState (evolved blockwise via
    its flat representation); the result is NOT renormalized.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    prop = _coerce_prop(model_or_prop, ctrl)
    if isinstance(state, PairedState):
        if prop.model.dim == 2 * state.dim:
            flat = _evolve_vec(prop, state.flat(), t0, t1)
            upper, lower = split_flat(flat)
        else:
            # single-space provider: blocks evolve independently
            upper = _evolve_vec(prop, state.upper, t0, t1)
            lower = _evolve_vec(prop, state.lower, t0, t1)
        return PairedState(upper=upper, lower=lower, weight=state.weight)
    return _evolve_vec(prop, np.asarray(state, dtype=np.complex128), t0, t1)


@dataclass
class JumpSearchResult:
    time: float
    state: np.ndarray
    jumped: bool


def _norm2(y: np.ndarray, upper_dim: int | None) -> float:
    if upper_dim is None:
        return float(np.real(np.vdot(y, y)))
    u = y[:upper_dim]
    return float(np.real(np.vdot(u, u)))


def find_jump_time(state, model_or_prop, t_start: float, t_end: float,
                   eta: float, ctrl: StepControl | None = None,
                   upper_dim: int | None = None) -> JumpSearchResult:
    """Locate the time T in [t_start, t_end] where the squared norm of the
    decaying state first drops below eta.

    Steps forward with the fixed-step integrator, then refines T by
    bisection on the bracketing step until the bracket is narrower than
    tol_T. Returns jumped=False with the state at t_end if the norm never
    crosses eta on the horizon. ``upper_dim`` restricts the monitored norm
    to the leading block (used by the epsilon->0 kick limit).
    """
    prop = _coerce_prop(model_or_prop, ctrl)
    tol = prop.ctrl.tol_T
    y = np.asarray(state, dtype=np.complex128)
    n2 = _norm2(y, upper_dim)
    if eta <= 0.0:
        raise ValueError("eta must be in (0, 1]")
    if n2 < eta:
        raise ValueError(f"norm^2 {n2} already below threshold eta={eta}")
    if n2 == eta:
        return JumpSearchResult(time=t_start, state=y.copy(), jumped=True)

    # A stationary state (H_eff annihilates it) can never reach the
    # threshold; skip the horizon in one deterministic leap.
    if float(np.max(np.abs(prop._generator(t_start) @ y))) == 0.0:
        return JumpSearchResult(time=t_end, state=y.copy(), jumped=False)

    def _bisect(t: float, h: float, y: np.ndarray) -> JumpSearchResult:
        a, b = t, t + h
        y_a = y
        while b - a > tol:
            mid = 0.5 * (a + b)
            y_mid = prop.step(y_a, a, mid - a)
            if _norm2(y_mid, upper_dim) < eta:
                b = mid
            else:
                a, y_a = mid, y_mid
        T = 0.5 * (a + b)
        y_T = prop.step(y_a, a, T - a)
        if not np.all(np.isfinite(y_T.view(np.float64))):
            raise NumericalBlowupError(T)
        return JumpSearchResult(time=T, state=y_T, jumped=True)

    t = t_start
    block = 8
    while t < t_end:
        h = min(prop.step_size_at(t), t_end - t)
        # coarse scan: a block of steps at once, rescanned on a crossing
        if prop.time_independent and t + block * h <= t_end:
            y_blk = prop.block_matrix(h, block) @ y
            if _norm2(y_blk, upper_dim) >= eta:
                y = y_blk
                t += block * h
                continue
            for _ in range(block):
                y_next = prop.step(y, t, h)
                if _norm2(y_next, upper_dim) < eta:
                    return _bisect(t, h, y)
                t += h
                y = y_next
            continue
        y_next = prop.step(y, t, h)
        if _norm2(y_next, upper_dim) < eta:
            return _bisect(t, h, y)
        t += h
        y = y_next
    if not np.all(np.isfinite(y.view(np.float64))):
        raise NumericalBlowupError(t_end)
    return JumpSearchResult(time=t_end, state=y, jumped=False)
