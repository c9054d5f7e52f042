"""Dense deterministic reference: master-equation integration, the
propagation super-operator, steady states and regression-theorem
correlations. Ground truth for every stochastic estimator."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .estimators import CorrelationSpec, build_fg_schedule
from .model import LindbladModel, hamiltonian_at, is_time_independent
from .propagator import NumericalBlowupError, StepControl

__all__ = [
    "ConvergenceError",
    "liouvillian_apply",
    "liouvillian_matrix",
    "propagation_superoperator",
    "integrate_master",
    "heisenberg_oracle",
    "steady_state",
    "steady_state_nullspace",
    "regression_correlation",
    "validate_physical",
]


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"steady state not reached; residual {residual:.3e}")
        self.residual = residual


def liouvillian_apply(model: LindbladModel, t: float,
                      rho: np.ndarray) -> np.ndarray:
    """L(t) rho = -i[H, rho] + (1/2) sum gamma (2 J rho J+ - J+J rho - rho J+J)."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (model.dim, model.dim):
        raise ValueError("density matrix dim != model dim")
    H = hamiltonian_at(model, t)
    out = -1j * (H @ rho - rho @ H)
    for ch in model.channels:
        J = ch.jump_op
        JdJ = J.conj().T @ J
        out += 0.5 * ch.rate * (2.0 * (J @ rho @ J.conj().T)
                                - JdJ @ rho - rho @ JdJ)
    return out


def liouvillian_matrix(model: LindbladModel, t: float) -> np.ndarray:
    """dim^2 x dim^2 matrix of L(t) acting on row-vectorized rho."""
    d = model.dim
    H = hamiltonian_at(model, t)
    eye = np.eye(d)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for ch in model.channels:
        J = ch.jump_op
        JdJ = J.conj().T @ J
        L += 0.5 * ch.rate * (2.0 * np.kron(J, J.conj())
                              - np.kron(JdJ, eye) - np.kron(eye, JdJ.T))
    return L


def propagation_superoperator(model: LindbladModel, t0: float,
                              t1: float) -> np.ndarray:
    """V(t1, t0) as a dense matrix on vectorized density matrices.

    Time-independent models use the matrix exponential (an independent
    second oracle); otherwise columns are obtained by integration."""
    if is_time_independent(model):
        return scipy.linalg.expm((t1 - t0) * liouvillian_matrix(model, 0.0))
    d = model.dim
    V = np.empty((d * d, d * d), dtype=np.complex128)
    for col in range(d * d):
        rho0 = np.zeros(d * d, dtype=np.complex128)
        rho0[col] = 1.0
        V[:, col] = integrate_master(
            model, rho0.reshape(d, d), t0, t1).reshape(-1)
    return V


def _master_step_size(model: LindbladModel, t: float,
                      ctrl: StepControl) -> float:
    scale = float(np.max(np.abs(hamiltonian_at(model, t)))) if model.terms else 0.0
    for ch in model.channels:
        scale = max(scale, ch.rate * float(np.max(np.abs(ch.jump_op))) ** 2)
    if scale == 0.0:
        return ctrl.dt_max
    return min(ctrl.dt_max, ctrl.safety / scale)


def integrate_master(model: LindbladModel, rho0, t0: float, t1: float,
                     ctrl: StepControl | None = None) -> np.ndarray:
    """4th-order fixed-step integration of the master equation. Accepts
    non-physical initial matrices such as |psi0><phi0|."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    ctrl = ctrl or StepControl()
    rho = np.asarray(rho0, dtype=np.complex128).copy()
    span = t1 - t0
    if span == 0.0:
        return rho
    h_base = _master_step_size(model, t0, ctrl)
    nsteps = max(1, math.ceil(span / h_base))
    h = span / nsteps
    for k in range(nsteps):
        t = t0 + k * h
        k1 = liouvillian_apply(model, t, rho)
        k2 = liouvillian_apply(model, t + 0.5 * h, rho + 0.5 * h * k1)
        k3 = liouvillian_apply(model, t + 0.5 * h, rho + 0.5 * h * k2)
        k4 = liouvillian_apply(model, t + h, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(rho.view(np.float64))):
        raise NumericalBlowupError(t1)
    return rho


def heisenberg_oracle(model: LindbladModel, phi0, psi0, A, t: float,
                      t0: float = 0.0,
                      ctrl: StepControl | None = None) -> complex:
    """Tr{A V(t,t0) |psi0><phi0|}: exact reduced-Heisenberg matrix element."""
    phi0 = np.asarray(phi0, dtype=np.complex128)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    rho = integrate_master(model, np.outer(psi0, phi0.conj()), t0, t, ctrl)
    return complex(np.trace(np.asarray(A) @ rho))


def steady_state(model: LindbladModel, ctrl: StepControl | None = None,
                 residual_tol: float = 1e-10,
                 horizon: float = 500.0) -> np.ndarray:
    """Stationary density matrix by long-time integration with a residual
    check; raises ConvergenceError if the horizon is exhausted."""
    if not is_time_independent(model):
        raise ValueError("steady state requires a time-independent model")
    rho = np.eye(model.dim, dtype=np.complex128) / model.dim
    t = 0.0
    chunk = 1.0
    while t < horizon:
        rho = integrate_master(model, rho, t, t + chunk, ctrl)
        t += chunk
        residual = float(np.max(np.abs(liouvillian_apply(model, 0.0, rho))))
        if residual < residual_tol:
            rho = 0.5 * (rho + rho.conj().T)
            return rho / np.trace(rho).real
        chunk = min(2.0 * chunk, horizon - t) or chunk
    raise ConvergenceError(residual)


def steady_state_nullspace(model: LindbladModel) -> np.ndarray:
    """Validation path: steady state from the Liouvillian null space."""
    L = liouvillian_matrix(model, 0.0)
    ns = scipy.linalg.null_space(L, rcond=1e-10)
    if ns.shape[1] != 1:
        raise ConvergenceError(float("nan"))
    rho = ns[:, 0].reshape(model.dim, model.dim)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def regression_correlation(model: LindbladModel, rho_init,
                           spec: CorrelationSpec, grid,
                           ctrl: StepControl | None = None) -> np.ndarray:
    """Quantum-regression value of the correlation defined by ``spec``,
    evaluated at every grid time.

    At each insertion time the propagated matrix is dressed as
    rho -> G rho F^dag; the value at a final time is Tr{F_q^dag G_q rho}.
    The two-time case reduces to Tr{A V(t2,t1)[B rho(t1)]}.
    """
    schedule = build_fg_schedule(spec)
    grid = np.asarray(grid, dtype=np.float64)
    insert_times = schedule.times[:-1]
    if insert_times and grid[0] < insert_times[-1]:
        raise ValueError("grid must start at or after the last insertion")
    m_final = schedule.fs[-1].conj().T @ schedule.gs[-1]
    rho = np.asarray(rho_init, dtype=np.complex128).copy()
    t = spec.t0
    for l, r in enumerate(insert_times):
        rho = integrate_master(model, rho, t, r, ctrl)
        rho = schedule.gs[l] @ rho @ schedule.fs[l].conj().T
        t = r
    out = np.empty(grid.size, dtype=np.complex128)
    for k, tg in enumerate(grid):
        rho = integrate_master(model, rho, t, float(tg), ctrl)
        t = float(tg)
        out[k] = np.trace(m_final @ rho)
    return out


def validate_physical(rho: np.ndarray, herm_tol: float = 1e-10,
                      trace_tol: float = 1e-10,
                      eig_tol: float = 1e-8) -> None:
    """Assert hermiticity, unit trace and positivity of a physical state."""
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix not hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError("density matrix trace != 1")
    if float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))) < -eig_tol:
        raise ValueError("density matrix not positive semidefinite")
