"""Contact-force fusion: constant-force Kalman filter and contact detection.

State is the 3-vector contact force in the tool frame, modeled as a
random walk (zero dynamics, process noise Q per second).  Two sensors
measure it directly (H = I): the simulated F/T sensor at the physics
rate and the tactile kNN estimate at the camera rate.  Measurements are
applied as separate sequential updates; with block-diagonal noise this
is algebraically identical to stacking them, so the asynchronous rates
cost nothing in correctness.

Covariance updates use the Joseph form, which preserves symmetry and
positive semi-definiteness under roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class SensorFaultError(RuntimeError):
    """Raised when a measurement is non-finite; the estimate holds."""


def _as_spd(value: Union[float, np.ndarray], name: str) -> np.ndarray:
    mat = np.asarray(value, dtype=float)
    if mat.ndim == 0:
        mat = float(mat) * np.eye(3)
    mat = mat.reshape(3, 3)
    if np.max(np.abs(mat - mat.T)) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(mat) <= 0.0):
        raise ValueError(f"{name} must be positive definite")
    return mat


@dataclass
class NoiseConfig:
    q: Union[float, np.ndarray] = 0.25  # N^2 per second, random-walk drive
    r_ft: Union[float, np.ndarray] = 0.01  # N^2, F/T channel
    r_tac: Union[float, np.ndarray] = 0.81  # N^2, tactile kNN channel

    def __post_init__(self):
        self.q = _as_spd(self.q, "q")
        self.r_ft = _as_spd(self.r_ft, "r_ft")
        self.r_tac = _as_spd(self.r_tac, "r_tac")


@dataclass
class FusionState:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cov: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: float = 0.0

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.cov = np.asarray(self.cov, dtype=float).reshape(3, 3)
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-12:
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(self.cov) < -1e-12):
            raise ValueError("covariance must be positive semi-definite")


_EYE3 = np.eye(3)


def _mk_fusion(force: np.ndarray, cov: np.ndarray, t: float) -> FusionState:
    # internal constructor: predict/update preserve symmetry and PSD by
    # construction, so skip the eigenvalue check on the 1 kHz path
    out = object.__new__(FusionState)
    out.force, out.cov, out.t = force, cov, t
    return out


def kf_predict(state: FusionState, noise: NoiseConfig, dt: float) -> FusionState:
    """Random-walk prediction: force unchanged, P grows by Q dt."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    return _mk_fusion(state.force.copy(), state.cov + noise.q * dt, state.t + dt)


def kf_update(state: FusionState, z: np.ndarray, which: str, noise: NoiseConfig) -> FusionState:
    """Measurement update with H = I and per-sensor noise, Joseph form."""
    if which == "ft":
        r = noise.r_ft
    elif which == "tac":
        r = noise.r_tac
    else:
        raise ValueError("which must be 'ft' or 'tac'")
    z = np.asarray(z, dtype=float).reshape(3)
    if not np.all(np.isfinite(z)):
        raise SensorFaultError(f"non-finite {which} measurement at t={state.t:.4f}")
    p = state.cov
    gain = p @ np.linalg.inv(p + r)
    imk = _EYE3 - gain
    cov = imk @ p @ imk.T + gain @ r @ gain.T
    cov = 0.5 * (cov + cov.T)
    return _mk_fusion(state.force + gain @ (z - state.force), cov, state.t)


def mean_marker_displacement(feature: np.ndarray) -> float:
    """Mean per-marker displacement magnitude (mm) of a (dx, dy) feature."""
    pairs = np.asarray(feature, dtype=float).reshape(-1, 2)
    return float(np.mean(np.hypot(pairs[:, 0], pairs[:, 1])))


def detect_contact(
    feature: np.ndarray,
    threshold_on: float,
    threshold_off: float,
    previous: bool = False,
) -> bool:
    """Hysteretic contact flag from mean marker displacement.

    Above threshold_on the flag switches on, below threshold_off it
    switches off, and inside the band the previous state persists,
    which keeps the force-control switch from chattering at touch-down.
    """
    if not threshold_on > threshold_off > 0.0:
        raise ValueError("need threshold_on > threshold_off > 0")
    level = mean_marker_displacement(feature)
    if level > threshold_on:
        return True
    if level < threshold_off:
        return False
    return previous


@dataclass
class ContactDetector:
    """Stateful wrapper around detect_contact for the mission loop."""

    threshold_on: float = 0.08
    threshold_off: float = 0.03
    engaged: bool = False

    def __post_init__(self):
        if not self.threshold_on > self.threshold_off > 0.0:
            raise ValueError("need threshold_on > threshold_off > 0")

    def update(self, feature: np.ndarray) -> bool:
        self.engaged = detect_contact(feature, self.threshold_on, self.threshold_off, self.engaged)
        return self.engaged
