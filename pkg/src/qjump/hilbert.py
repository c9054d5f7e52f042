"""Dense complex linear algebra for single and doubled Hilbert spaces.

States are 1-D complex128 numpy arrays, operators dense square matrices.
A :class:`PairedState` bundles the two components of a doubled-space
vector together with the scalar weight accumulated by operator
insertions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "ZeroWeightInsertionError",
    "PairedState",
    "as_state",
    "as_operator",
    "inner",
    "norm",
    "normalize",
    "matrix_element",
    "pair",
    "split",
]


class DimensionMismatchError(ValueError):
    """Operands live in Hilbert spaces of different dimension."""


class ZeroWeightInsertionError(ValueError):
    """An operator insertion produced the zero vector; the trajectory
    contributes exactly 0 and must be counted as such by the caller."""


def as_state(v) -> np.ndarray:
    """Coerce to a finite 1-D complex vector."""
    arr = np.asarray(v, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("state must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise ValueError("state contains non-finite amplitudes")
    return arr


def as_operator(m, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite square complex matrix, optionally of fixed dim."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("operator must be a square matrix")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatchError(
            f"operator dim {arr.shape[0]} != expected {dim}")
    if not np.all(np.isfinite(arr.view(np.float64))):
        raise ValueError("operator contains non-finite entries")
    return arr


def inner(u, v) -> complex:
    """Scalar product <u|v>, conjugate-linear in the first argument."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dims {u.shape} and {v.shape} differ")
    return complex(np.vdot(u, v))


def norm(v) -> float:
    return float(np.linalg.norm(v))


def normalize(v) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ZeroWeightInsertionError("cannot normalize the zero vector")
    return np.asarray(v) / n


def matrix_element(u, A, v) -> complex:
    """<u|A|v> for a dense operator A."""
    u = np.asarray(u)
    v = np.asarray(v)
    A = np.asarray(A)
    if A.shape != (u.size, v.size) or u.size != v.size:
        raise DimensionMismatchError(
            f"incompatible dims: u {u.size}, A {A.shape}, v {v.size}")
    return complex(np.vdot(u, A @ v))


@dataclass(frozen=True)
class PairedState:
    """Element (upper, lower) of the doubled space H (+) H.

    ``weight`` carries the squared-norm prefactors picked up at operator
    insertions; the components themselves stay jointly normalized.
    """

    upper: np.ndarray
    lower: np.ndarray
    weight: float

    def __post_init__(self):
        if self.upper.shape != self.lower.shape:
            raise DimensionMismatchError("paired components differ in dim")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")

    @property
    def dim(self) -> int:
        return self.upper.size

    def flat(self) -> np.ndarray:
        """The pair as a single 2N vector (upper block first)."""
        return np.concatenate([self.upper, self.lower])


def pair(phi, psi) -> PairedState:
    """Jointly normalize (phi, psi) into a PairedState.

    The carried weight is the squared joint norm; a zero joint norm
    raises :class:`ZeroWeightInsertionError`.
    """
    phi = as_state(phi)
    psi = as_state(psi)
    if phi.size != psi.size:
        raise DimensionMismatchError("pair components differ in dim")
    joint = float(np.linalg.norm(phi) ** 2 + np.linalg.norm(psi) ** 2)
    if joint == 0.0:
        raise ZeroWeightInsertionError("zero joint norm at insertion")
    scale = 1.0 / np.sqrt(joint)
    return PairedState(upper=phi * scale, lower=psi * scale, weight=joint)


def split(theta: PairedState) -> tuple[np.ndarray, np.ndarray, float]:
    """Unpack a PairedState into (upper, lower, weight)."""
    return theta.upper, theta.lower, theta.weight


def split_flat(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat 2N doubled-space vector into its two blocks."""
    if vec.size % 2:
        raise DimensionMismatchError("doubled-space vector has odd length")
    half = vec.size // 2
    return vec[:half], vec[half:]
