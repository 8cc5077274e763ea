"""Rigid-body simulation of a fully actuated tilted-rotor hexarotor.

State and conventions
---------------------
The vehicle state is (p, R, v):

    p   position of the center of mass, inertial frame, m
    R   attitude R_ib in SO(3), body -> inertial
    v   body twist stacked as [V; Omega], linear velocity V and angular
        rate Omega both expressed in the body frame

Kinematics:  p_dot = R V,  R_dot = R skew(Omega).

Dynamics, with M = blkdiag(m I, J), C = blkdiag(m skew(Omega),
-skew(J Omega)) and the gravity wrench G (body frame, pointing down):

    M v_dot + C v = tau' + tau_c + G

tau' is the body wrench produced by the rotors, tau_c the contact
wrench from the environment.  Written this way gravity is an applied
force like any other; a thrust-less vehicle falls, and the hover wrench
is -G.

Integration is classic RK4 at a fixed step.  Attitude is advanced on
the rotation manifold with the exponential map per stage and given a
cheap symmetric polish afterwards, so orthonormality drift stays at
round-off scale over arbitrarily long runs.

The wall is a unilateral spring-damper half-space probed by the tool
tip, with viscous tangential friction.  Contact never pulls.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .frames import Wrench, orthonormalize, rot_y, skew, so3_exp

GRAVITY = 9.81  # m/s^2

# Re-orthonormality budget enforced after every step.
ROTATION_TOL = 1e-9


class DegenerateGeometryError(ValueError):
    """Rotor geometry does not span the full wrench space."""


class DivergenceError(RuntimeError):
    """The integrator produced a non-finite state."""


@dataclass
class VehicleParams:
    """Physical constants of the hexarotor and its rigid tool.

    Rotor i sits at angle 60 deg * i on a circle of radius
    ``arm_length``, its thrust axis tilted away from body z by
    ``tilt_angle`` about the arm, with the tilt sign and the propeller
    handedness alternating around the hull.  The tool is a rigid rod to
    the sensing pad; ``rot_be`` maps end-effector coordinates to body
    coordinates with the tool axis along z of E.
    """

    mass: float = 4.0  # kg
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.35, 0.35, 0.60]))  # kg m^2
    arm_length: float = 0.48  # m
    tilt_angle: float = np.deg2rad(30.0)  # rad
    tilt_signs: tuple = (1, -1, 1, -1, 1, -1)
    spin_signs: tuple = (1, -1, 1, -1, 1, -1)
    k_f: float = 1.0e-5  # N / (rad/s)^2
    k_m_over_k_f: float = 0.016  # m, drag-to-thrust moment ratio
    rotor_speed_min: float = 0.0  # rad/s
    rotor_speed_max: float = 1200.0  # rad/s
    motor_tau: float = 0.0  # s, first-order rotor lag; 0 disables
    r_tool: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.0]))  # m, body frame
    rot_be: np.ndarray = field(default_factory=lambda: rot_y(np.pi / 2.0))

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.r_tool = np.asarray(self.r_tool, dtype=float).reshape(3)
        self.rot_be = np.asarray(self.rot_be, dtype=float).reshape(3, 3)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0.0):
            raise ValueError("inertia must be positive definite")
        if self.k_f <= 0.0:
            raise ValueError("k_f must be positive")
        if not (0.0 <= self.tilt_angle < np.pi / 2.0):
            raise ValueError("tilt angle must lie in [0, pi/2)")
        if len(self.tilt_signs) != 6 or len(self.spin_signs) != 6:
            raise ValueError("six rotors expected")
        if self.rotor_speed_min < 0.0 or self.rotor_speed_max <= self.rotor_speed_min:
            raise ValueError("rotor speed limits must satisfy 0 <= min < max")
        self._inertia_inv = np.linalg.inv(self.inertia)

    @property
    def thrust_min(self) -> float:
        return self.k_f * self.rotor_speed_min**2

    @property
    def thrust_max(self) -> float:
        return self.k_f * self.rotor_speed_max**2


@dataclass
class SimState:
    """Simulation state at time t."""

    p: np.ndarray
    rot: np.ndarray
    v: np.ndarray  # [V; Omega], body frame
    t: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.rot = np.asarray(self.rot, dtype=float).reshape(3, 3)
        self.v = np.asarray(self.v, dtype=float).reshape(6)

    @staticmethod
    def at_rest(p, rot=None, t: float = 0.0) -> "SimState":
        rot = np.eye(3) if rot is None else rot
        return SimState(np.asarray(p, dtype=float), rot, np.zeros(6), t)

    @property
    def velocity_inertial(self) -> np.ndarray:
        return self.rot @ self.v[:3]

    def tip_position(self, params: VehicleParams) -> np.ndarray:
        return self.p + self.rot @ params.r_tool

    def tip_velocity(self, params: VehicleParams) -> np.ndarray:
        return self.rot @ (self.v[:3] + np.cross(self.v[3:], params.r_tool))


def mass_matrix(params: VehicleParams) -> np.ndarray:
    m = np.zeros((6, 6))
    m[:3, :3] = params.mass * np.eye(3)
    m[3:, 3:] = params.inertia
    return m


def coriolis_matrix(params: VehicleParams, v: np.ndarray) -> np.ndarray:
    omega = np.asarray(v, dtype=float).reshape(6)[3:]
    c = np.zeros((6, 6))
    c[:3, :3] = params.mass * skew(omega)
    c[3:, 3:] = -skew(params.inertia @ omega)
    return c


def gravity_wrench(params: VehicleParams, rot: np.ndarray) -> Wrench:
    """Weight of the vehicle expressed in the body frame (no torque)."""
    g_inertial = np.array([0.0, 0.0, -GRAVITY])
    return Wrench(params.mass * (rot.T @ g_inertial), np.zeros(3), "B")


@dataclass
class WallModel:
    """Unilateral spring-damper half-space with viscous friction.

    ``normal`` is the unit inward normal of the free space: it points
    from the wall surface toward the vehicle.  Penetration of the tool
    tip is delta = (point - tip) . normal, positive inside the wall.
    """

    point: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 1.0]))
    normal: np.ndarray = field(default_factory=lambda: np.array([-1.0, 0.0, 0.0]))
    stiffness: float = 5000.0  # N/m
    damping: float = 50.0  # N s/m
    friction: float = 20.0  # N s/m, viscous tangential gain

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float).reshape(3)
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("wall normal must be a unit vector")
        if self.stiffness < 0.0 or self.damping < 0.0 or self.friction < 0.0:
            raise ValueError("wall coefficients must be non-negative")

    def rot_iw(self) -> np.ndarray:
        """Wall frame with z along the inward normal (completed arbitrarily
        but deterministically)."""
        z = self.normal
        seed = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
        x = np.cross(seed, z)
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        return np.column_stack([x, y, z])

    def penetration(self, tip: np.ndarray) -> float:
        return float(np.dot(self.point - tip, self.normal))


def contact_wrench(state: SimState, wall: Optional[WallModel], params: VehicleParams) -> Wrench:
    """Contact wrench on the body from the tool tip probing the wall.

    Normal force magnitude is max(0, k_w * delta - c_w * s) where s is
    the separation rate of the tip along the wall normal (negative while
    approaching, so the damper stiffens penetration and never sticks).
    Tangential force is -friction * tangential tip velocity.  The tip
    force maps to a body wrench through the tool arm.
    """
    raw = _contact_raw(state.p, state.rot, state.v, wall, params)
    if raw is None:
        return Wrench.zero("B")
    return Wrench(raw[:3], raw[3:], "B")


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross carries ~10x avoidable overhead for single 3-vectors.
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


_EYE3 = np.eye(3)


def _exp_so3(phi: np.ndarray) -> np.ndarray:
    angle_sq = float(phi @ phi)
    if angle_sq < 1e-16:
        a = 1.0 - angle_sq / 6.0
        b = 0.5 - angle_sq / 24.0
    else:
        angle = np.sqrt(angle_sq)
        a = np.sin(angle) / angle
        b = (1.0 - np.cos(angle)) / angle_sq
    x, y, z = phi
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    out = _EYE3 + a * k + b * (k @ k)
    return out


def _contact_raw(
    p: np.ndarray, rot: np.ndarray, v: np.ndarray, wall: Optional[WallModel], params: VehicleParams
) -> Optional[np.ndarray]:
    """Contact wrench as a raw 6-array in the body frame, None when free."""
    if wall is None:
        return None
    tip = p + rot @ params.r_tool
    delta = (wall.point[0] - tip[0]) * wall.normal[0] + (wall.point[1] - tip[1]) * wall.normal[1] + (
        wall.point[2] - tip[2]
    ) * wall.normal[2]
    if delta <= 0.0:
        return None
    v_tip = rot @ (v[:3] + _cross(v[3:], params.r_tool))
    separation_rate = float(v_tip @ wall.normal)
    f_n = wall.stiffness * delta - wall.damping * separation_rate
    if f_n < 0.0:
        f_n = 0.0
    f_inertial = f_n * wall.normal - wall.friction * (v_tip - separation_rate * wall.normal)
    f_body = rot.T @ f_inertial
    out = np.empty(6)
    out[:3] = f_body
    out[3:] = _cross(params.r_tool, f_body)
    return out


def _mk_state(p: np.ndarray, rot: np.ndarray, v: np.ndarray, t: float) -> SimState:
    # stage states skip __post_init__ validation; inputs are already shaped
    s = object.__new__(SimState)
    s.p, s.rot, s.v, s.t = p, rot, v, t
    return s


def _deriv(
    s: SimState,
    wrench_fn: Callable[[SimState], np.ndarray],
    wall: Optional[WallModel],
    params: VehicleParams,
    extra: Optional[np.ndarray],
):
    tau = wrench_fn(s)
    v = s.v
    rot = s.rot
    omega = v[3:]
    rhs = np.array(tau, dtype=float).reshape(6)
    if extra is not None:
        rhs = rhs + extra
    tau_c = _contact_raw(s.p, rot, v, wall, params)
    if tau_c is not None:
        rhs = rhs + tau_c
    m = params.mass
    # gravity in body coordinates: rot.T @ (0, 0, -g) is -g times row 2 of rot
    f = rhs[:3] - (m * GRAVITY) * rot[2, :] - m * _cross(omega, v[:3])
    trq = rhs[3:] + _cross(params.inertia @ omega, omega)
    vdot = np.empty(6)
    vdot[:3] = f / m
    vdot[3:] = params._inertia_inv @ trq
    return rot @ v[:3], omega, vdot


def rk4_step(
    state: SimState,
    wrench_fn: Callable[[SimState], np.ndarray],
    wall: Optional[WallModel],
    params: VehicleParams,
    dt: float,
    extra_wrench: Optional[np.ndarray] = None,
) -> SimState:
    """One RK4 step with the body wrench re-evaluated at every stage.

    ``wrench_fn`` receives the stage state and returns the rotor wrench
    tau' as a 6-array in the body frame.  ``extra_wrench`` is an
    additional body wrench held constant over the step (disturbances).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p0, r0, v0 = state.p, state.rot, state.v
    half = 0.5 * dt

    k1_p, k1_w, k1_v = _deriv(state, wrench_fn, wall, params, extra_wrench)
    s2 = _mk_state(p0 + half * k1_p, r0 @ _exp_so3(half * k1_w), v0 + half * k1_v, state.t + half)
    k2_p, k2_w, k2_v = _deriv(s2, wrench_fn, wall, params, extra_wrench)
    s3 = _mk_state(p0 + half * k2_p, r0 @ _exp_so3(half * k2_w), v0 + half * k2_v, state.t + half)
    k3_p, k3_w, k3_v = _deriv(s3, wrench_fn, wall, params, extra_wrench)
    s4 = _mk_state(p0 + dt * k3_p, r0 @ _exp_so3(dt * k3_w), v0 + dt * k3_v, state.t + dt)
    k4_p, k4_w, k4_v = _deriv(s4, wrench_fn, wall, params, extra_wrench)

    sixth = dt / 6.0
    p1 = p0 + sixth * (k1_p + 2.0 * k2_p + 2.0 * k3_p + k4_p)
    v1 = v0 + sixth * (k1_v + 2.0 * k2_v + 2.0 * k3_v + k4_v)
    r1 = orthonormalize(r0 @ _exp_so3(sixth * (k1_w + 2.0 * k2_w + 2.0 * k3_w + k4_w)))
    t1 = state.t + dt

    if not (np.isfinite(p1[0]) and np.isfinite(p1[1]) and np.isfinite(p1[2])):
        raise DivergenceError(f"position became non-finite at t={t1:.6f}")
    if not np.all(np.isfinite(v1)):
        raise DivergenceError(f"twist became non-finite at t={t1:.6f}")
    if not np.all(np.isfinite(r1)):
        raise DivergenceError(f"attitude became non-finite at t={t1:.6f}")
    return _mk_state(p1, r1, v1, t1)


def step(
    state: SimState,
    thrusts: np.ndarray,
    wall: Optional[WallModel],
    params: VehicleParams,
    dt: float,
    extra_wrench: Optional[np.ndarray] = None,
) -> SimState:
    """Advance one step with rotor thrusts held constant (zero-order hold)."""
    from .allocation import allocation_matrix  # local import, no cycle at module load

    thrusts = np.asarray(thrusts, dtype=float).reshape(6)
    tau = allocation_matrix(params) @ thrusts
    return rk4_step(state, lambda s: tau, wall, params, dt, extra_wrench)


def mechanical_energy(state: SimState, params: VehicleParams) -> float:
    """Kinetic plus gravitational potential energy (J)."""
    v_lin, omega = state.v[:3], state.v[3:]
    kinetic = 0.5 * params.mass * float(v_lin @ v_lin) + 0.5 * float(omega @ (params.inertia @ omega))
    return kinetic + params.mass * GRAVITY * float(state.p[2])
