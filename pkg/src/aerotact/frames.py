"""Rotation helpers and the frame-tagged wrench type.

Frames used across the package:

    I   inertial (world), z up
    B   body, origin at the vehicle center of mass
    E   end-effector (tool tip), z along the tool axis pointing away
        from the hull toward the contact surface
    W   contact surface (wall)

A rotation written ``R_ab`` maps coordinates of frame ``b`` into frame
``a``; the columns of ``R_ib`` are the body axes expressed in inertial
coordinates.  Wrenches carry the frame they are expressed in and refuse
to be consumed in any other frame, which turns silent frame bugs into
loud ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FRAMES = ("I", "B", "E", "W")


class FrameError(ValueError):
    """A wrench was used in a frame other than the one it carries."""


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of skew for a 3x3 skew-symmetric matrix."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues map from a rotation vector to a rotation matrix.

    Uses the series form of the two trigonometric coefficients below a
    small-angle cutoff so the map stays smooth through zero.
    """
    angle = float(np.linalg.norm(phi))
    k = skew(phi)
    if angle < 1e-8:
        # sin(a)/a ~ 1 - a^2/6, (1-cos a)/a^2 ~ 1/2 - a^2/24
        a = 1.0 - angle**2 / 6.0
        b = 0.5 - angle**2 / 24.0
    else:
        a = np.sin(angle) / angle
        b = (1.0 - np.cos(angle)) / angle**2
    return np.eye(3) + a * k + b * (k @ k)


def orthonormalize(rot: np.ndarray) -> np.ndarray:
    """One symmetric Newton step pulling a near-rotation back onto SO(3).

    For drift at round-off scale a single iteration of
    R <- R (3 I - R^T R) / 2 is accurate to machine precision and much
    cheaper than an SVD.
    """
    return rot @ (1.5 * np.eye(3) - 0.5 * (rot.T @ rot))


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation by ``angle`` about an arbitrary unit axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    return so3_exp(axis * (angle / n))


@dataclass(frozen=True)
class Wrench:
    """A force/torque pair tagged with the frame it is expressed in."""

    force: np.ndarray
    torque: np.ndarray
    frame: str = "B"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise FrameError(f"unknown frame {self.frame!r}, expected one of {FRAMES}")
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "torque", np.asarray(self.torque, dtype=float).reshape(3))

    @staticmethod
    def zero(frame: str = "B") -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3), frame)

    @staticmethod
    def from_array(arr: np.ndarray, frame: str = "B") -> "Wrench":
        arr = np.asarray(arr, dtype=float).reshape(6)
        return Wrench(arr[:3], arr[3:], frame)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def require(self, frame: str) -> "Wrench":
        if self.frame != frame:
            raise FrameError(f"wrench is in frame {self.frame!r}, consumer expects {frame!r}")
        return self

    def __add__(self, other: "Wrench") -> "Wrench":
        if self.frame != other.frame:
            raise FrameError(f"cannot add wrench in {other.frame!r} to wrench in {self.frame!r}")
        return Wrench(self.force + other.force, self.torque + other.torque, self.frame)

    def rotated(self, rot: np.ndarray, frame: str) -> "Wrench":
        """Re-express both components through ``rot`` (same moment point)."""
        return Wrench(rot @ self.force, rot @ self.torque, frame)
