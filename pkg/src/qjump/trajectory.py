"""Piecewise deterministic jump process in the single and doubled spaces.

Randomness comes from counter-based Philox streams keyed by
(master_seed, stream_index), so trajectory k is bit-identical whether it
runs serially or on any worker layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LindbladModel, lift_to_doubled
from .propagator import EffectivePropagator, StepControl, find_jump_time

__all__ = [
    "RngStream",
    "DarkStateError",
    "TrajectoryRecord",
    "KickMode",
    "JumpProcess",
    "run_trajectory",
    "select_channel",
    "apply_jump",
    "run_trajectory_kick",
]

_TINY_UNIFORM = float(np.finfo(np.float64).tiny)


class DarkStateError(RuntimeError):
    """All channel weights vanished at a sampled jump time."""


class RngStream:
    """Uniform stream keyed by (master_seed, stream_index) via Philox."""

    def __init__(self, master_seed: int, stream_index: int):
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        key = (self.master_seed & (2**64 - 1)) | (self.stream_index << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self) -> float:
        """Uniform on (0, 1]; an exact 0 draw is remapped to the smallest
        positive double so the jump condition always has a solution."""
        u = float(self._gen.random())
        return u if u > 0.0 else _TINY_UNIFORM


@dataclass
class KickMode:
    mode: str  # "doubled" | "epsilon" | "limit"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.mode not in ("doubled", "epsilon", "limit"):
            raise ValueError(f"unknown kick mode {self.mode!r}")
        if self.mode == "epsilon" and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class TrajectoryRecord:
    jumps: list[tuple[float, int]]
    snapshots: list[np.ndarray]
    weight: float = 1.0
    status: str = "completed"  # completed | zero-weight | failed


def select_channel(state: np.ndarray, model: LindbladModel, eta: float,
                   upper_dim: int | None = None) -> int:
    """Pick the jump channel i with probability gamma_i w_i / sum,
    w_i = |J_i state|^2, by cumulative inversion of the uniform eta."""
    weights = []
    for ch in model.channels:
        img = ch.jump_op @ state
        if upper_dim is not None:
            img = img[:upper_dim]
        weights.append(ch.rate * float(np.real(np.vdot(img, img))))
    total = sum(weights)
    if total <= 0.0:
        raise DarkStateError("all channel weights zero at jump time")
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w / total
        if eta <= acc:
            return i
    return len(weights) - 1


def apply_jump(state: np.ndarray, jump_op: np.ndarray,
               upper_dim: int | None = None) -> np.ndarray:
    """J state / |J state|; in limit mode the denominator is the norm of
    the upper block only (the lower component is slaved to it)."""
    img = jump_op @ state
    if upper_dim is None:
        n = float(np.linalg.norm(img))
    else:
        n = float(np.linalg.norm(img[:upper_dim]))
    if n == 0.0:
        raise DarkStateError("jump image has zero norm")
    return img / n


class JumpProcess:
    """Incremental jump-process engine over one unnormalized state.

    ``upper_dim`` switches on the epsilon->0 limit convention: jump
    times, channel weights and every normalization denominator are taken
    from the leading ``upper_dim`` components only.
    """

    def __init__(self, model: LindbladModel, state: np.ndarray, t: float,
                 rng: RngStream, ctrl: StepControl | None = None,
                 upper_dim: int | None = None,
                 prop: EffectivePropagator | None = None):
        self.model = model
        self.ctrl = ctrl or StepControl()
        self.prop = prop or EffectivePropagator(model, self.ctrl)
        self.rng = rng
        self.upper_dim = upper_dim
        self.t = t
        self.state = np.asarray(state, dtype=np.complex128).copy()
        self.eta = rng.uniform()
        self.jumps: list[tuple[float, int]] = []

    def advance(self, t_target: float) -> None:
        """Run the process forward to t_target, jumping as needed."""
        while True:
            res = find_jump_time(self.state, self.prop, self.t, t_target,
                                 self.eta, upper_dim=self.upper_dim)
            self.t = res.time
            if not res.jumped:
                self.state = res.state
                return
            idx = select_channel(res.state, self.model, self.rng.uniform(),
                                 upper_dim=self.upper_dim)
            self.state = apply_jump(res.state, self.model.channels[idx].jump_op,
                                    upper_dim=self.upper_dim)
            self.jumps.append((res.time, idx))
            self.eta = self.rng.uniform()

    def _denom(self) -> float:
        if self.upper_dim is None:
            return float(np.linalg.norm(self.state))
        return float(np.linalg.norm(self.state[:self.upper_dim]))

    def normalized(self) -> np.ndarray:
        """Current state with the mode's normalization convention."""
        n = self._denom()
        if n == 0.0:
            raise DarkStateError("state norm underflowed to zero")
        return self.state / n

    def reinsert(self, new_state: np.ndarray) -> None:
        """Replace the state (normalized by the caller) and restart the
        waiting-time draw; valid because the conditional threshold of a
        surviving trajectory is again uniform after rescaling."""
        self.state = np.asarray(new_state, dtype=np.complex128).copy()
        self.eta = self.rng.uniform()


def run_trajectory(model: LindbladModel, initial: np.ndarray, grid,
                   rng: RngStream, ctrl: StepControl | None = None,
                   prop: EffectivePropagator | None = None) -> TrajectoryRecord:
    """One realization of the jump process with normalized snapshots on
    the grid. Works unchanged in the doubled space when given a lifted
    model and a flat 2N initial state."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be a non-empty increasing time sequence")
    proc = JumpProcess(model, np.asarray(initial, dtype=np.complex128),
                       float(grid[0]), rng, ctrl, prop=prop)
    snapshots = []
    try:
        for tg in grid:
            proc.advance(float(tg))
            snapshots.append(proc.normalized())
    except DarkStateError:
        return TrajectoryRecord(jumps=proc.jumps, snapshots=snapshots,
                                weight=1.0, status="failed")
    return TrajectoryRecord(jumps=proc.jumps, snapshots=snapshots, weight=1.0)


def run_trajectory_kick(model: LindbladModel, phi: np.ndarray,
                        insertion_op: np.ndarray, grid, rng: RngStream,
                        mode: KickMode, ctrl: StepControl | None = None,
                        lifted: LindbladModel | None = None,
                        lifted_prop: EffectivePropagator | None = None) -> TrajectoryRecord:
    """Kick variant of a doubled-space correlation trajectory.

    ``phi`` is the (normalized) single-space state at the insertion time
    grid[0]. Finite-epsilon mode runs the ordinary doubled process from
    (phi, eps*B*phi) with weight |(phi, eps*B*phi)|^2 / eps; limit mode
    slaves the lower component's jumps and normalizations to phi's
    single-space process. Snapshots are flat 2N doubled-space vectors in
    both modes, so the estimator sample is weight * <upper|A|lower>.
    """
    grid = np.asarray(grid, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.complex128)
    lifted = lifted or lift_to_doubled(model)
    bphi = insertion_op @ phi
    if mode.mode == "epsilon":
        eps = mode.epsilon
        lower0 = eps * bphi
        joint2 = float(np.linalg.norm(phi) ** 2 + np.linalg.norm(lower0) ** 2)
        if joint2 == 0.0:
            return TrajectoryRecord(jumps=[], snapshots=[], weight=0.0,
                                    status="zero-weight")
        theta0 = np.concatenate([phi, lower0]) / math.sqrt(joint2)
        rec = run_trajectory(lifted, theta0, grid, rng, ctrl, prop=lifted_prop)
        rec.weight = joint2 / eps
        return rec
    if mode.mode != "limit":
        raise ValueError("run_trajectory_kick expects epsilon or limit mode")

    # limit mode: joint vector, but all jump statistics from the upper block
    theta0 = np.concatenate([phi, bphi])
    proc = JumpProcess(lifted, theta0, float(grid[0]), rng, ctrl,
                       upper_dim=model.dim, prop=lifted_prop)
    snapshots = []
    try:
        for tg in grid:
            proc.advance(float(tg))
            snapshots.append(proc.normalized())
    except DarkStateError:
        return TrajectoryRecord(jumps=proc.jumps, snapshots=snapshots,
                                weight=1.0, status="failed")
    return TrajectoryRecord(jumps=proc.jumps, snapshots=snapshots, weight=1.0)
