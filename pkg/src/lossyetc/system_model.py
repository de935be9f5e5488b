"""Plant, nominal model, feedback gain, and the stacked flow generators.

The closed loop runs three coupled linear systems: the true plant x, the
sensor-side model copy x_s (whose deviation from x drives the event trigger),
and the controller-side model copy x_c (which supplies u = K x_c). Between
events everything flows linearly, so the whole state fits in one stacked
3n-vector with a constant generator; events are jumps that copy x into x_s
(trigger) or x_c (delivery).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .numerics import Matrix


class ModelError(Exception):
    """Raised for malformed plant/model/gain data."""


def _frozen_array(value, shape: tuple[int, ...] | None, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ModelError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Plant:
    """True continuous-time dynamics dx/dt = A x + B u."""

    A: Matrix
    B: Matrix

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ModelError(f"A must be square, got shape {a.shape}")
        b = np.asarray(self.B, dtype=float)
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ModelError(f"B must be {a.shape[0]} x m, got shape {b.shape}")
        object.__setattr__(self, "A", _frozen_array(a, None, "A"))
        object.__setattr__(self, "B", _frozen_array(b, None, "B"))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class NominalModel:
    """Model copy of the dynamics run at both ends of the link."""

    A_hat: Matrix
    B_hat: Matrix

    def __post_init__(self):
        a = np.asarray(self.A_hat, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ModelError(f"A_hat must be square, got shape {a.shape}")
        b = np.asarray(self.B_hat, dtype=float)
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ModelError(f"B_hat must be {a.shape[0]} x m, got shape {b.shape}")
        object.__setattr__(self, "A_hat", _frozen_array(a, None, "A_hat"))
        object.__setattr__(self, "B_hat", _frozen_array(b, None, "B_hat"))

    @property
    def n(self) -> int:
        return self.A_hat.shape[0]


@dataclass(frozen=True)
class Gain:
    """State feedback u = K x_c."""

    K: Matrix

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", _frozen_array(k, None, "K"))


class EstimatorKind(enum.Enum):
    """How the two model copies evolve between events."""

    MODEL_BASED = "mb"
    ZERO_ORDER_HOLD = "zoh"


@dataclass(frozen=True)
class AugmentedState:
    """Snapshot (t, x, x_s, x_c) of the stacked hybrid state."""

    t: float
    x: np.ndarray
    x_s: np.ndarray
    x_c: np.ndarray


def closed_loop(model: NominalModel, gain: Gain) -> Matrix:
    """A_hat + B_hat K, the dynamics both model copies run under MB."""
    return model.A_hat + model.B_hat @ gain.K


def gamma_matrix(plant: Plant, model: NominalModel, gain: Gain) -> Matrix:
    """Generator of (x, x_c) with no deliveries: [[A, BK], [0, A_hat+B_hat K]]."""
    n = plant.n
    top = np.hstack([plant.A, plant.B @ gain.K])
    bottom = np.hstack([np.zeros((n, n)), closed_loop(model, gain)])
    return np.vstack([top, bottom])


def gamma_zoh(plant: Plant, gain: Gain) -> Matrix:
    """Generator of (x, x_c) with a held input: [[A, BK], [0, 0]]."""
    n = plant.n
    top = np.hstack([plant.A, plant.B @ gain.K])
    bottom = np.zeros((n, 2 * n))
    return np.vstack([top, bottom])


def augmented_generator(
    plant: Plant, model: NominalModel, gain: Gain, kind: EstimatorKind
) -> Matrix:
    """Generator of the stacked (x, x_s, x_c) flow between events."""
    n = plant.n
    if model.n != n:
        raise ModelError("plant and model dimensions disagree")
    g = np.zeros((3 * n, 3 * n))
    g[:n, :n] = plant.A
    g[:n, 2 * n :] = plant.B @ gain.K
    if kind is EstimatorKind.MODEL_BASED:
        s = closed_loop(model, gain)
        g[n : 2 * n, n : 2 * n] = s
        g[2 * n :, 2 * n :] = s
    return g


def jump_on_trigger(state: AugmentedState) -> AugmentedState:
    """Sensor-side reset x_s := x at an event instant."""
    return replace(state, x_s=state.x.copy())


def jump_on_delivery(state: AugmentedState) -> AugmentedState:
    """Controller-side reset x_c := x when the packet gets through."""
    return replace(state, x_c=state.x.copy())
