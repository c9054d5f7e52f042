"""Ensemble estimators: expectations, Heisenberg matrix elements,
multitime correlations (doubled / kick / four-trajectory methods),
statistics merging and fluorescence spectra.

Every estimator is a parallel map over trajectory indices followed by an
order-fixed merge of per-chunk statistics, so the result is independent
of the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hilbert import ZeroWeightInsertionError, matrix_element, pair, split_flat
from .model import LindbladModel, lift_to_doubled
from .propagator import EffectivePropagator, StepControl
from .trajectory import (JumpProcess, KickMode, RngStream, run_trajectory,
                         run_trajectory_kick)

__all__ = [
    "EstimateSeries",
    "CorrelationSpec",
    "FGSchedule",
    "RunningStats",
    "build_fg_schedule",
    "expectation",
    "heisenberg_element",
    "correlation",
    "stationary_correlation",
    "statistics_merge",
    "spectrum",
]

log = logging.getLogger(__name__)

CHUNK = 256


# ---------------------------------------------------------------------------
# statistics

@dataclass
class RunningStats:
    """Mergeable (count, mean, squared-deviation) aggregate for complex
    vector samples; Re and Im tracked componentwise."""

    count: int
    mean: np.ndarray
    m2_re: np.ndarray
    m2_im: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "RunningStats":
        samples = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
        k = samples.shape[0]
        mean = samples.mean(axis=0)
        dev = samples - mean
        return cls(count=k, mean=mean,
                   m2_re=np.sum(dev.real ** 2, axis=0),
                   m2_im=np.sum(dev.imag ** 2, axis=0))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        f = self.count * other.count / n
        mean = self.mean + delta * (other.count / n)
        m2_re = self.m2_re + other.m2_re + f * delta.real ** 2
        m2_im = self.m2_im + other.m2_im + f * delta.imag ** 2
        return RunningStats(count=n, mean=mean, m2_re=m2_re, m2_im=m2_im)

    def stderr(self) -> np.ndarray:
        """Scalarized standard error sqrt((var_re + var_im)/n)."""
        if self.count < 2:
            raise ValueError("stderr needs at least 2 samples")
        var = (self.m2_re + self.m2_im) / (self.count - 1)
        return np.sqrt(var / self.count)

    def stderr_components(self) -> tuple[np.ndarray, np.ndarray]:
        if self.count < 2:
            raise ValueError("stderr needs at least 2 samples")
        n = self.count
        return (np.sqrt(self.m2_re / (n - 1) / n),
                np.sqrt(self.m2_im / (n - 1) / n))


def statistics_merge(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of the mean. A 1-D input is a list
    of scalar samples; a 2-D input is (n_samples, n_points)."""
    arr = np.asarray(samples)
    scalar = arr.ndim == 1
    stats = RunningStats.from_samples(arr.reshape(-1, 1) if scalar else arr)
    if scalar:
        return complex(stats.mean[0]), float(stats.stderr()[0])
    return stats.mean, stats.stderr()


@dataclass
class EstimateSeries:
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    stderr_re: np.ndarray | None = None
    stderr_im: np.ndarray | None = None
    n_failed: int = 0

    @classmethod
    def from_stats(cls, grid, stats: RunningStats,
                   n_failed: int = 0) -> "EstimateSeries":
        se_re, se_im = stats.stderr_components()
        return cls(grid=np.asarray(grid, dtype=np.float64), mean=stats.mean,
                   stderr=stats.stderr(), n=stats.count,
                   stderr_re=se_re, stderr_im=se_im, n_failed=n_failed)


# ---------------------------------------------------------------------------
# correlation specs and F/G schedules

@dataclass(frozen=True)
class CorrelationSpec:
    """Time-ordered correlation <A_1(t_1)...A_n(t_n) B_m(s_m)...B_1(s_1)>
    from the pure initial state phi0 at t0. Each op list holds (time,
    operator) with strictly increasing times."""

    a_ops: tuple[tuple[float, np.ndarray], ...]
    b_ops: tuple[tuple[float, np.ndarray], ...]
    phi0: np.ndarray
    t0: float

    def __post_init__(self):
        object.__setattr__(self, "a_ops", tuple(
            (float(t), np.asarray(op, dtype=np.complex128))
            for t, op in self.a_ops))
        object.__setattr__(self, "b_ops", tuple(
            (float(t), np.asarray(op, dtype=np.complex128))
            for t, op in self.b_ops))
        object.__setattr__(
            self, "phi0", np.asarray(self.phi0, dtype=np.complex128))
        for ops in (self.a_ops, self.b_ops):
            times = [t for t, _ in ops]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("operator times must be strictly increasing")
            if any(t < self.t0 for t in times):
                raise ValueError("operator time precedes start time t0")
        dim = self.phi0.size
        for _, op in self.a_ops + self.b_ops:
            if op.shape != (dim, dim):
                raise ValueError("operator dim inconsistent with phi0")


@dataclass(frozen=True)
class FGSchedule:
    """Per distinct time r_l, the Schroedinger pair (F_l, G_l): F acts on
    the upper component (F = A^dag), G on the lower (G = B)."""

    times: tuple[float, ...]
    fs: tuple[np.ndarray, ...]
    gs: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.times)


def build_fg_schedule(spec: CorrelationSpec) -> FGSchedule:
    dim = spec.phi0.size
    eye = np.eye(dim, dtype=np.complex128)
    table: dict[float, list] = {}
    for t, op in spec.a_ops:
        table.setdefault(t, [None, None])[0] = op.conj().T
    for t, op in spec.b_ops:
        table.setdefault(t, [None, None])[1] = op
    times = tuple(sorted(table))
    fs = tuple(table[t][0] if table[t][0] is not None else eye for t in times)
    gs = tuple(table[t][1] if table[t][1] is not None else eye for t in times)
    return FGSchedule(times=times, fs=fs, gs=gs)


# ---------------------------------------------------------------------------
# generic chunked / parallel ensemble driver

def _chunk_bounds(n: int):
    return [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]


def _collect(fn, payloads, threads: int):
    if threads <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, payloads))


def _assemble(grid, results) -> EstimateSeries:
    stats = None
    n_failed = 0
    for samples, failed in results:
        n_failed += failed
        if samples.shape[0] == 0:
            continue
        part = RunningStats.from_samples(samples)
        stats = part if stats is None else stats.merge(part)
    if stats is None or stats.count < 2:
        raise ValueError("need at least 2 completed trajectories")
    if n_failed:
        log.warning("excluded %d failed trajectories", n_failed)
    return EstimateSeries.from_stats(grid, stats, n_failed=n_failed)


# ---------------------------------------------------------------------------
# one-time expectation

def _run_grid(grid: np.ndarray, t0: float) -> tuple[np.ndarray, bool]:
    """Trajectory grid including the preparation time t0; the flag says
    whether an extra leading snapshot must be dropped."""
    if grid[0] < t0:
        raise ValueError("grid must start at or after t0")
    if grid[0] == t0:
        return grid, False
    return np.concatenate([[t0], grid]), True


def _expectation_chunk(payload):
    model, psi0, A, grid, t0, ctrl, seed, lo, hi = payload
    prop = EffectivePropagator(model, ctrl)
    run_grid, prefix = _run_grid(grid, t0)
    samples = []
    failed = 0
    for i in range(lo, hi):
        rec = run_trajectory(model, psi0, run_grid, RngStream(seed, i), ctrl,
                             prop=prop)
        if rec.status == "failed":
            failed += 1
            continue
        snaps = rec.snapshots[1:] if prefix else rec.snapshots
        samples.append([matrix_element(s, A, s) for s in snaps])
    return np.asarray(samples, dtype=np.complex128).reshape(-1, len(grid)), failed


def expectation(model: LindbladModel, psi0, A, grid, n: int, seed: int,
                ctrl: StepControl | None = None, t0: float = 0.0,
                threads: int = 1) -> EstimateSeries:
    """Monte Carlo <psi(t)|A|psi(t)> over n single-space trajectories
    prepared in psi0 at time t0."""
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = np.asarray(grid, dtype=np.float64)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    payloads = [(model, psi0, np.asarray(A, dtype=np.complex128), grid,
                 t0, ctrl, seed, lo, hi) for lo, hi in _chunk_bounds(n)]
    return _assemble(grid, _collect(_expectation_chunk, payloads, threads))


# ---------------------------------------------------------------------------
# Heisenberg matrix elements in the doubled space

def _heisenberg_chunk(payload):
    lifted, theta0, weight, A, grid, t0, ctrl, seed, lo, hi = payload
    prop = EffectivePropagator(lifted, ctrl)
    run_grid, prefix = _run_grid(grid, t0)
    samples = []
    failed = 0
    for i in range(lo, hi):
        rec = run_trajectory(lifted, theta0, run_grid, RngStream(seed, i),
                             ctrl, prop=prop)
        if rec.status == "failed":
            failed += 1
            continue
        row = []
        for s in (rec.snapshots[1:] if prefix else rec.snapshots):
            u, l = split_flat(s)
            row.append(weight * matrix_element(u, A, l))
        samples.append(row)
    return np.asarray(samples, dtype=np.complex128).reshape(-1, len(grid)), failed


def heisenberg_element(model: LindbladModel, phi0, psi0, A, grid, n: int,
                       seed: int, ctrl: StepControl | None = None,
                       t0: float = 0.0, threads: int = 1) -> EstimateSeries:
    """Matrix element <phi0|A(t)|psi0> of the reduced Heisenberg operator,
    estimated as weight * <phi(t)|A|psi(t)> over doubled-space trajectories
    started from the jointly normalized pair (weight = 2 for normalized
    phi0, psi0). Orthogonal initial states are fine."""
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = np.asarray(grid, dtype=np.float64)
    theta = pair(phi0, psi0)
    lifted = lift_to_doubled(model)
    payloads = [(lifted, theta.flat(), theta.weight,
                 np.asarray(A, dtype=np.complex128), grid, t0, ctrl, seed,
                 lo, hi) for lo, hi in _chunk_bounds(n)]
    return _assemble(grid, _collect(_heisenberg_chunk, payloads, threads))


# ---------------------------------------------------------------------------
# multitime correlations

def _check_grid_vs_insertions(schedule: FGSchedule, grid, t0: float):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and non-empty")
    insert_times = schedule.times[:-1]
    last = insert_times[-1] if insert_times else t0
    if grid[0] < last:
        raise ValueError("grid must start at or after the last insertion time")
    return grid, insert_times


def _doubled_correlation_one(model, lifted, prop_single, prop_lifted, spec,
                             schedule, grid, rng, ctrl):
    """One trajectory of the doubled-space method; returns the complex
    sample per grid time (exactly zero on a zero-weight insertion)."""
    insert_times = schedule.times[:-1]
    m_final = schedule.fs[-1].conj().T @ schedule.gs[-1]
    proc = JumpProcess(model, spec.phi0, spec.t0, rng, ctrl, prop=prop_single)
    doubled = False
    weight = 1.0
    for l, r in enumerate(insert_times):
        proc.advance(r)
        snap = proc.normalized()
        if doubled:
            u, lo_ = split_flat(snap)
        else:
            u = lo_ = snap
        try:
            theta = pair(schedule.fs[l] @ u, schedule.gs[l] @ lo_)
        except ZeroWeightInsertionError:
            return np.zeros(len(grid), dtype=np.complex128), "zero-weight"
        weight *= theta.weight
        if doubled:
            proc.reinsert(theta.flat())
        else:
            proc = JumpProcess(lifted, theta.flat(), r, rng, ctrl,
                               prop=prop_lifted)
            doubled = True
    out = np.empty(len(grid), dtype=np.complex128)
    for k, tg in enumerate(grid):
        proc.advance(float(tg))
        snap = proc.normalized()
        if doubled:
            u, lo_ = split_flat(snap)
        else:
            u = lo_ = snap
        out[k] = weight * matrix_element(u, m_final, lo_)
    return out, "completed"


def _correlation_chunk(payload):
    (model, spec, schedule, grid, method, epsilon, ctrl, seed, lo, hi) = payload
    lifted = lift_to_doubled(model)
    prop_single = EffectivePropagator(model, ctrl)
    prop_lifted = EffectivePropagator(lifted, ctrl)
    samples = []
    failed = 0
    from .trajectory import DarkStateError
    for i in range(lo, hi):
        rng = RngStream(seed, i)
        try:
            if method == "doubled":
                row, _ = _doubled_correlation_one(
                    model, lifted, prop_single, prop_lifted, spec, schedule,
                    grid, rng, ctrl)
            elif method in ("kick", "limit"):
                row = _kick_correlation_one(
                    model, lifted, prop_single, prop_lifted, spec, schedule,
                    grid, rng, method, epsilon, ctrl)
            elif method == "four":
                row = _four_correlation_one(
                    model, prop_single, spec, schedule, grid, rng, ctrl)
            else:
                raise ValueError(f"unknown method {method!r}")
        except DarkStateError:
            failed += 1
            continue
        samples.append(row)
    return np.asarray(samples, dtype=np.complex128).reshape(-1, len(grid)), failed


def _require_b_only_insertion(schedule: FGSchedule, method: str):
    if len(schedule) != 2:
        raise ValueError(f"method {method!r} supports two-time specs only")
    dim = schedule.fs[0].shape[0]
    if not np.array_equal(schedule.fs[0], np.eye(dim)):
        raise ValueError(
            f"method {method!r} needs a pure B insertion (no A at t1)")


def _kick_correlation_one(model, lifted, prop_single, prop_lifted, spec,
                          schedule, grid, rng, method, epsilon, ctrl):
    r1 = schedule.times[0]
    b_op = schedule.gs[0]
    m_final = schedule.fs[-1].conj().T @ schedule.gs[-1]
    proc = JumpProcess(model, spec.phi0, spec.t0, rng, ctrl, prop=prop_single)
    proc.advance(r1)
    phi = proc.normalized()
    mode = KickMode("epsilon", epsilon) if method == "kick" else KickMode("limit")
    prefix = grid[0] > r1
    kick_grid = np.concatenate([[r1], grid]) if prefix else grid
    rec = run_trajectory_kick(model, phi, b_op, kick_grid, rng, mode, ctrl,
                              lifted=lifted, lifted_prop=prop_lifted)
    if rec.status == "zero-weight":
        return np.zeros(len(grid), dtype=np.complex128)
    snaps = rec.snapshots[1:] if prefix else rec.snapshots
    out = np.empty(len(grid), dtype=np.complex128)
    for k, s in enumerate(snaps):
        u, l = split_flat(s)
        out[k] = rec.weight * matrix_element(u, m_final, l)
    return out


_POLARIZATION = (1.0, -1.0, 1.0j, -1.0j)


def _four_correlation_one(model, prop_single, spec, schedule, grid, rng, ctrl):
    """Four-trajectory polarization decomposition
    B|phi><phi| = (1/4) sum_a conj(a) (I+aB)|phi><phi|(I+aB)^dag,
    each sub-state propagated by the ordinary single-space process."""
    r1 = schedule.times[0]
    b_op = schedule.gs[0]
    m_final = schedule.fs[-1].conj().T @ schedule.gs[-1]
    eye = np.eye(model.dim, dtype=np.complex128)
    proc = JumpProcess(model, spec.phi0, spec.t0, rng, ctrl, prop=prop_single)
    proc.advance(r1)
    phi = proc.normalized()
    out = np.zeros(len(grid), dtype=np.complex128)
    for alpha in _POLARIZATION:
        chi = (eye + alpha * b_op) @ phi
        w = float(np.real(np.vdot(chi, chi)))
        if w == 0.0:
            continue
        rec = run_trajectory(model, chi / math.sqrt(w), grid, rng, ctrl,
                             prop=prop_single)
        if rec.status == "failed":
            from .trajectory import DarkStateError
            raise DarkStateError("four-trajectory sub-state failed")
        curve = np.array([matrix_element(s, m_final, s)
                          for s in rec.snapshots])
        out += 0.25 * np.conj(alpha) * w * curve
    return out


def correlation(model: LindbladModel, spec: CorrelationSpec, grid, n: int,
                seed: int, method: str = "doubled",
                ctrl: StepControl | None = None, epsilon: float = 1e-4,
                threads: int = 1) -> EstimateSeries:
    """Time-ordered multitime correlation function on a grid of final
    times.

    The schedule's last (F, G) pair is the evaluated operator; all
    earlier entries are insertions, which must precede grid[0]. Methods:
    ``doubled`` (any time-ordered spec), ``kick``/``limit`` (epsilon kick
    and its limit; single pure-B insertion), ``four`` (two-time only).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    schedule = build_fg_schedule(spec)
    grid, _ = _check_grid_vs_insertions(schedule, grid, spec.t0)
    if method in ("kick", "limit", "four"):
        _require_b_only_insertion(schedule, method)
    payloads = [(model, spec, schedule, grid, method, epsilon, ctrl, seed,
                 lo, hi) for lo, hi in _chunk_bounds(n)]
    return _assemble(grid, _collect(_correlation_chunk, payloads, threads))


def stationary_correlation(model: LindbladModel, a_op, b_op, tau_grid,
                           n: int, seed: int, method: str = "doubled",
                           ctrl: StepControl | None = None,
                           t_relax: float = 10.0, initial=None,
                           epsilon: float = 1e-4,
                           threads: int = 1) -> EstimateSeries:
    """Stationary two-time correlation <A(tau) B(0)>_s: burn-in of
    duration t_relax from ``initial`` (default: first basis state), then
    insertion of B at tau = 0 and evaluation of A over the tau grid."""
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    if tau_grid[0] < 0:
        raise ValueError("tau grid must start at tau >= 0")
    if initial is None:
        initial = np.zeros(model.dim, dtype=np.complex128)
        initial[0] = 1.0
    a_op = np.asarray(a_op, dtype=np.complex128)
    b_op = np.asarray(b_op, dtype=np.complex128)
    spec = CorrelationSpec(a_ops=((float(tau_grid[-1]), a_op),),
                           b_ops=((0.0, b_op),),
                           phi0=initial, t0=-float(t_relax))
    return correlation(model, spec, tau_grid, n, seed, method=method,
                       ctrl=ctrl, epsilon=epsilon, threads=threads)


# ---------------------------------------------------------------------------
# spectrum

def spectrum(corr: EstimateSeries, omegas=None) -> EstimateSeries:
    """S(omega) = 2 Re sum_k w_k exp(i omega tau_k) C(tau_k) dtau with
    trapezoid weights, on a uniform tau grid starting at 0."""
    tau = np.asarray(corr.grid, dtype=np.float64)
    if tau.size < 2 or abs(tau[0]) > 1e-12:
        raise ValueError("spectrum needs a uniform tau grid starting at 0")
    dtau = tau[1] - tau[0]
    if np.max(np.abs(np.diff(tau) - dtau)) > 1e-9 * dtau:
        raise ValueError("tau grid must be uniform")
    if omegas is None:
        omegas = np.linspace(-np.pi / dtau, np.pi / dtau, 2 * tau.size + 1)
    omegas = np.asarray(omegas, dtype=np.float64)
    w = np.ones_like(tau)
    w[0] = w[-1] = 0.5
    phases = np.exp(1j * np.outer(omegas, tau))
    s_vals = 2.0 * np.real(phases @ (w * corr.mean)) * dtau
    # independent-point error propagation; same bound at every omega
    se = 2.0 * dtau * float(np.sqrt(np.sum((w * corr.stderr) ** 2)))
    return EstimateSeries(grid=omegas,
                          mean=s_vals.astype(np.complex128),
                          stderr=np.full(omegas.shape, se), n=corr.n)
