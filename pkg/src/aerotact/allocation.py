"""Thrust allocation for the tilted-rotor hexarotor.

Because every rotor axis is tilted off body z (alternating sign around
the hull), the six per-rotor thrust directions and their moments span
all of R^6: the vehicle can command force and torque independently.
Column i of the allocation matrix holds the unit thrust direction d_i
on top and r_i x d_i + sigma_i (k_m/k_f) d_i below, so that
tau = A f for per-rotor thrusts f.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np

from .dynamics import DegenerateGeometryError, VehicleParams, GRAVITY
from .frames import Wrench, rotation_about

COND_LIMIT = 1e6


def rotor_geometry(params: VehicleParams) -> Tuple[np.ndarray, np.ndarray]:
    """Rotor positions (6,3) and unit thrust directions (6,3), body frame."""
    positions = np.zeros((6, 3))
    directions = np.zeros((6, 3))
    for i in range(6):
        theta = np.deg2rad(60.0 * i)
        arm = np.array([np.cos(theta), np.sin(theta), 0.0])
        positions[i] = params.arm_length * arm
        tilt = params.tilt_signs[i] * params.tilt_angle
        directions[i] = rotation_about(arm, tilt) @ np.array([0.0, 0.0, 1.0])
    return positions, directions


def allocation_matrix(params: VehicleParams) -> np.ndarray:
    """6x6 map from rotor thrusts to the body wrench.

    Raises DegenerateGeometryError when the geometry loses rank (for
    example zero tilt, which collapses lateral force authority).  The
    matrix is cached on the params object; treat params as frozen once
    a simulation is running.
    """
    cached = params.__dict__.get("_alloc_matrix")
    if cached is not None:
        return cached
    positions, directions = rotor_geometry(params)
    a = np.zeros((6, 6))
    for i in range(6):
        a[:3, i] = directions[i]
        a[3:, i] = np.cross(positions[i], directions[i]) + params.spin_signs[i] * params.k_m_over_k_f * directions[i]
    if np.linalg.cond(a) > COND_LIMIT:
        raise DegenerateGeometryError(
            f"rotor geometry is rank deficient (cond {np.linalg.cond(a):.3e} exceeds {COND_LIMIT:.0e})"
        )
    params.__dict__["_alloc_matrix"] = a
    return a


def hover_thrust(params: VehicleParams) -> float:
    """Per-rotor thrust that exactly cancels weight at level attitude.

    By the alternating symmetry every rotor carries the same load and
    only the z component of the tilted axes lifts, so
    f = m g / (6 cos(tilt)).
    """
    return params.mass * GRAVITY / (6.0 * np.cos(params.tilt_angle))


def allocate(
    wrench: Wrench,
    params: VehicleParams,
    matrix_inv: np.ndarray | None = None,
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Invert the allocation and clamp to the thrust envelope.

    Returns (thrusts, rotor_speeds, saturated).  ``matrix_inv`` lets
    callers in a tight loop pass the precomputed inverse.
    """
    wrench.require("B")
    if matrix_inv is None:
        matrix_inv = np.linalg.inv(allocation_matrix(params))
    thrusts = matrix_inv @ wrench.as_array()
    lo, hi = params.thrust_min, params.thrust_max
    clamped = np.clip(thrusts, lo, hi)
    saturated = bool(np.any(clamped != thrusts))
    speeds = np.sqrt(clamped / params.k_f)
    return clamped, speeds, saturated
