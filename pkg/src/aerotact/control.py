"""Hybrid motion-force control for the fully actuated hexarotor.

The cascade per control tick is

    tau_p  = motion_wrench(...)          pose tracking, PD on a feedback
                                         linearized plant
    tau_f  = force_wrench(...)           impedance push regulation
    tau    = hybrid_combine(tau_p, tau_f, cfg)
    tau'   = feedback_linearize(tau, ...)
    f      = allocate(tau', ...)

``feedback_linearize`` cancels the Coriolis and gravity terms exactly,
so the plant seen by the outer loops is M v_dot = tau + tau_c.  The
motion law is therefore a pure PD with feedforward; adding a gravity
term here would compensate weight twice.

Sign conventions for the force path, fixed here and used everywhere:
the wall frame W has z pointing from the vehicle into the wall, and
forces are compression positive (the z component of F_meas is the
magnitude the tool presses with, the z component of F_ref is the push
command, both non-negative in normal operation).  Tracking errors enter
the law with the sign that makes pushing too softly increase the
commanded push:

    F_f = F_ref - k_m (K_sp e_s + K_sd e_s_dot) - K_fp e_f - K_fi int(e_f)

with e_f = F_meas - F_ref and e_s the drift from the operating position
captured at contact onset.  With the wall a stiff spring this loop is
Routh-stable for the default gains and drives the steady-state force
error to zero through the integral term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .dynamics import SimState, VehicleParams, coriolis_matrix, gravity_wrench
from .frames import Wrench, rot_y, vee


@dataclass
class MotionGains:
    kp: float = 12.0  # N/m
    kv: float = 6.0  # N s/m
    kr: float = 2.0  # N m
    komega: float = 0.4  # N m s

    def __post_init__(self):
        for name in ("kp", "kv", "kr", "komega"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ForceGains:
    ksp: float = 20.0  # N/m, impedance spring
    ksd: float = 8.0  # N s/m, impedance damper
    kfp: float = 0.6  # force error proportional
    kfi: float = 0.8  # 1/s, force error integral
    integral_clamp: float = 3.0  # N, per-axis cap on the accumulated error
    mass_ratio: float = 1.0  # actual-to-desired inertia scaling of the impedance terms

    def __post_init__(self):
        if self.ksp < 0.0 or self.ksd < 0.0:
            raise ValueError("impedance gains must be non-negative")
        if self.kfp <= 0.0 or self.kfi <= 0.0:
            raise ValueError("force gains must be positive")
        if self.integral_clamp < 0.0:
            raise ValueError("integral_clamp must be non-negative")
        if self.mass_ratio <= 0.0:
            raise ValueError("mass_ratio must be positive")


@dataclass
class Setpoint:
    """Pose and feedforward command for the motion loop."""

    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.acceleration = np.asarray(self.acceleration, dtype=float).reshape(3)
        self.rot = np.asarray(self.rot, dtype=float).reshape(3, 3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)


@dataclass
class HybridConfig:
    """Everything the force path and the hybrid switch need.

    ``rot_iw`` is the wall frame in inertial coordinates (z into the
    wall, see module docstring), ``rot_be`` the tool frame in body
    coordinates.  ``lam`` is the force-motion switch and must be exactly
    0 or 1.  ``operating_position`` anchors the impedance spring; the
    mission loop freezes it when contact is first detected.
    """

    rot_iw: np.ndarray
    f_ref: np.ndarray
    rot_be: np.ndarray = field(default_factory=lambda: rot_y(np.pi / 2.0))
    lam: float = 0.0
    operating_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rot_iw = np.asarray(self.rot_iw, dtype=float).reshape(3, 3)
        self.rot_be = np.asarray(self.rot_be, dtype=float).reshape(3, 3)
        self.f_ref = np.asarray(self.f_ref, dtype=float).reshape(3)
        self.operating_position = np.asarray(self.operating_position, dtype=float).reshape(3)
        for name in ("rot_iw", "rot_be"):
            rot = getattr(self, name)
            if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9:
                raise ValueError(f"{name} is not a rotation")
        if self.lam not in (0.0, 1.0):
            raise ValueError("lam must be exactly 0 or 1")
        if self.f_ref[2] < 0.0:
            raise ValueError("reference push must be non-negative along the push axis")


def motion_wrench(state: SimState, setpoint: Setpoint, gains: MotionGains, params: VehicleParams) -> Wrench:
    """Geometric pose tracking wrench, body frame.

    Force: R^T (-Kp e_p - Kv e_v + m a_des) with e_p, e_v in inertial
    coordinates.  Torque: -kR e_R - kOmega e_Omega with the attitude
    error e_R = 0.5 vee(Rd^T R - R^T Rd).  Full actuation lets the
    desired attitude come straight from the setpoint.
    """
    e_p = state.p - setpoint.position
    e_v = state.rot @ state.v[:3] - setpoint.velocity
    f_inertial = -gains.kp * e_p - gains.kv * e_v + params.mass * setpoint.acceleration
    rot_d = setpoint.rot
    e_r = 0.5 * vee(rot_d.T @ state.rot - state.rot.T @ rot_d)
    e_w = state.v[3:] - state.rot.T @ (rot_d @ setpoint.omega)
    torque = -gains.kr * e_r - gains.komega * e_w
    return Wrench(state.rot.T @ f_inertial, torque, "B")


def push_frame(wall_normal: np.ndarray) -> np.ndarray:
    """Wall frame R_iw for a wall whose outward (free-space) normal is given.

    z points from the vehicle into the wall, so commanded and measured
    push forces have non-negative z components.
    """
    z = -np.asarray(wall_normal, dtype=float).reshape(3)
    z = z / np.linalg.norm(z)
    seed = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(seed, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def force_wrench(
    f_meas: np.ndarray,
    cfg: HybridConfig,
    gains: ForceGains,
    state: SimState,
    integral: np.ndarray,
    dt: float,
) -> Tuple[Wrench, np.ndarray, bool]:
    """Impedance force regulation wrench, body frame.

    ``f_meas`` is the wall-frame contact force, compression positive.
    ``integral`` carries int(e_f) dt between calls; the returned copy is
    advanced by one step and clamped per axis to +-integral_clamp (the
    wind-up flag reports when the clamp is active).  Torque is zero:
    the force loop commands a pure force through the tool.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    f_meas = np.asarray(f_meas, dtype=float).reshape(3)
    e_s = cfg.rot_iw.T @ (state.p - cfg.operating_position)
    e_s_dot = cfg.rot_iw.T @ (state.rot @ state.v[:3])
    e_f = f_meas - cfg.f_ref

    integral = integral + e_f * dt
    clipped = np.clip(integral, -gains.integral_clamp, gains.integral_clamp)
    windup = bool(np.any(clipped != integral))
    integral = clipped

    f_wall = (
        cfg.f_ref
        - gains.mass_ratio * (gains.ksp * e_s + gains.ksd * e_s_dot)
        - gains.kfp * e_f
        - gains.kfi * integral
    )
    u_body = (state.rot.T @ cfg.rot_iw) @ f_wall
    return Wrench(u_body, np.zeros(3), "B"), integral, windup


def selection_matrix(cfg: HybridConfig) -> np.ndarray:
    """6x6 hybrid selection Lambda = blkdiag(Lambda', 0).

    Lambda' = R_be diag(0, 0, lam) R_be^T projects body forces onto the
    tool axis; the conjugation keeps it symmetric and, at lam = 1,
    idempotent, so force and motion authority split cleanly.
    """
    if cfg.lam not in (0.0, 1.0):
        raise ValueError("lam must be exactly 0 or 1")
    core = cfg.rot_be @ np.diag([0.0, 0.0, cfg.lam]) @ cfg.rot_be.T
    out = np.zeros((6, 6))
    out[:3, :3] = core
    return out


def hybrid_combine(tau_p: Wrench, tau_f: Wrench, cfg: HybridConfig) -> Wrench:
    """tau = (I - Lambda) tau_p + Lambda tau_f.

    lam = 0 returns tau_p unchanged (exact passthrough, not a multiply
    by identity) so a disabled force path is bit-for-bit inert.
    """
    tau_p.require("B")
    if cfg.lam == 0.0:
        return tau_p
    tau_f.require("B")
    sel = selection_matrix(cfg)
    combined = (np.eye(6) - sel) @ tau_p.as_array() + sel @ tau_f.as_array()
    return Wrench.from_array(combined, "B")


def feedback_linearize(tau: Wrench, state: SimState, params: VehicleParams) -> Wrench:
    """Rotor wrench that reduces the plant to M v_dot = tau + tau_c.

    tau' = C v - G + tau.  Subtracting the (downward) gravity wrench is
    what compensates weight: at rest and level the output is tau plus
    an upward m g thrust, and tau = 0 hovers.
    """
    tau.require("B")
    c_v = coriolis_matrix(params, state.v) @ state.v
    g = gravity_wrench(params, state.rot).as_array()
    return Wrench.from_array(c_v - g + tau.as_array(), "B")
