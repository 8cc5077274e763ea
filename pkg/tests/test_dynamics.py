from __future__ import annotations

import numpy as np
import pytest

from aerotact.dynamics import (
    GRAVITY,
    DivergenceError,
    SimState,
    VehicleParams,
    WallModel,
    contact_wrench,
    coriolis_matrix,
    gravity_wrench,
    mass_matrix,
    mechanical_energy,
    rk4_step,
    step,
)
from aerotact.frames import FrameError, Wrench, rot_y, skew, so3_exp, vee


def make_params(**kw) -> VehicleParams:
    return VehicleParams(**kw)


# ---------------------------------------------------------------- frames


def test_skew_matches_cross_product():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(skew(a) @ b, np.cross(a, b))
        assert np.allclose(vee(skew(a)), a)


def test_so3_exp_is_rotation_and_matches_small_angle():
    rng = np.random.default_rng(8)
    for _ in range(20):
        phi = rng.normal(size=3)
        r = so3_exp(phi)
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(r), 1.0, atol=1e-12)
    tiny = np.array([1e-10, -2e-10, 5e-11])
    assert np.allclose(so3_exp(tiny), np.eye(3) + skew(tiny), atol=1e-18)


def test_wrench_frame_mismatch_raises():
    w = Wrench(np.ones(3), np.zeros(3), "B")
    with pytest.raises(FrameError):
        w.require("I")
    with pytest.raises(FrameError):
        _ = w + Wrench.zero("I")


# ------------------------------------------------------------ parameters


def test_params_validation():
    with pytest.raises(ValueError):
        make_params(mass=-1.0)
    with pytest.raises(ValueError):
        make_params(inertia=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        make_params(tilt_angle=np.pi)
    with pytest.raises(ValueError):
        make_params(k_f=0.0)


# ------------------------------------------------------- dynamics terms


def test_mass_matrix_blocks():
    params = make_params()
    m = mass_matrix(params)
    assert np.allclose(m[:3, :3], params.mass * np.eye(3))
    assert np.allclose(m[3:, 3:], params.inertia)
    assert np.allclose(m[:3, 3:], 0.0)


def test_coriolis_hand_expansion_unit_spin_z():
    # m = 1, J = I, Omega = e3: C = blkdiag(skew(e3), -skew(e3)).
    params = make_params(mass=1.0, inertia=np.eye(3))
    v = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    c = coriolis_matrix(params, v)
    expected = np.zeros((6, 6))
    expected[:3, :3] = skew([0.0, 0.0, 1.0])
    expected[3:, 3:] = -skew([0.0, 0.0, 1.0])
    assert np.allclose(c, expected)


def test_gravity_wrench_level_attitude():
    params = make_params(mass=1.0)
    g = gravity_wrench(params, np.eye(3))
    assert np.allclose(g.force, [0.0, 0.0, -GRAVITY])
    assert np.allclose(g.torque, 0.0)
    assert g.frame == "B"


def test_gravity_wrench_rotated_keeps_magnitude():
    params = make_params()
    g = gravity_wrench(params, rot_y(0.7))
    assert np.isclose(np.linalg.norm(g.force), params.mass * GRAVITY)


# ----------------------------------------------------------------- wall


def test_contact_force_static_tip_spring_only():
    # 1 mm penetration at 5000 N/m must push with 5 N along the normal.
    params = make_params()
    wall = WallModel(point=np.array([1.0, 0.0, 1.0]), normal=np.array([-1.0, 0.0, 0.0]))
    state = SimState.at_rest(p=np.array([0.501, 0.0, 1.0]))
    w = contact_wrench(state, wall, params)
    f_inertial = state.rot @ w.force
    assert np.allclose(f_inertial, [-5.0, 0.0, 0.0], atol=1e-9)
    assert np.allclose(w.torque, np.cross(params.r_tool, w.force), atol=1e-12)


def test_contact_is_unilateral():
    params = make_params()
    wall = WallModel()
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = np.array([rng.uniform(0.0, 0.499), rng.uniform(-1, 1), rng.uniform(0, 2)])
        v = rng.normal(size=6)
        state = SimState(p, np.eye(3), v)
        w = contact_wrench(state, wall, params)
        assert np.allclose(w.as_array(), 0.0)


def test_contact_damping_opposes_approach():
    params = make_params()
    wall = WallModel()
    # Moving into the wall raises the normal force, retracting lowers it.
    push_in = SimState(np.array([0.501, 0.0, 1.0]), np.eye(3), np.array([0.1, 0, 0, 0, 0, 0]))
    pull_out = SimState(np.array([0.501, 0.0, 1.0]), np.eye(3), np.array([-0.1, 0, 0, 0, 0, 0]))
    f_in = -(push_in.rot @ contact_wrench(push_in, wall, params).force)[0]
    f_out = -(pull_out.rot @ contact_wrench(pull_out, wall, params).force)[0]
    assert f_in == pytest.approx(5.0 + wall.damping * 0.1)
    assert f_out == pytest.approx(5.0 - wall.damping * 0.1)


def test_contact_never_pulls():
    params = make_params()
    wall = WallModel()
    # Fast retraction would make the spring-damper negative; it clamps to zero.
    state = SimState(np.array([0.5001, 0.0, 1.0]), np.eye(3), np.array([-10.0, 0, 0, 0, 0, 0]))
    w = contact_wrench(state, wall, params)
    f_inertial = state.rot @ w.force
    assert np.dot(f_inertial, wall.normal) >= 0.0


def test_contact_tangential_friction():
    params = make_params()
    wall = WallModel(friction=20.0)
    state = SimState(np.array([0.501, 0.0, 1.0]), np.eye(3), np.array([0.0, 0.2, 0.0, 0, 0, 0]))
    f_inertial = state.rot @ contact_wrench(state, wall, params).force
    assert f_inertial[1] == pytest.approx(-20.0 * 0.2)


# ------------------------------------------------------------ integrator


def test_free_fall_speed_profile():
    params = make_params()
    state = SimState.at_rest(p=np.array([0.0, 0.0, 50.0]))
    dt = 1e-3
    for _ in range(2000):
        state = step(state, np.zeros(6), None, params, dt)
    speed = np.linalg.norm(state.v[:3])
    assert abs(speed - GRAVITY * 2.0) < 1e-6
    # and it falls, not rises
    assert state.velocity_inertial[2] < 0.0
    assert state.p[2] < 50.0


def test_energy_conservation_unpowered_tumble():
    params = make_params()
    state = SimState(
        np.array([0.0, 0.0, 100.0]),
        np.eye(3),
        np.array([1.0, -0.5, 2.0, 0.5, -0.3, 0.8]),
    )
    e0 = mechanical_energy(state, params)
    dt = 1e-3
    for _ in range(10000):
        state = step(state, np.zeros(6), None, params, dt)
    e1 = mechanical_energy(state, params)
    assert abs(e1 - e0) / abs(e0) < 1e-5


def test_rotation_stays_orthonormal():
    params = make_params()
    state = SimState(np.zeros(3), np.eye(3), np.array([0.0, 0, 0, 1.0, -2.0, 0.7]))
    dt = 1e-3
    worst = 0.0
    for _ in range(10000):
        state = step(state, np.zeros(6), None, params, dt)
        worst = max(worst, np.abs(state.rot.T @ state.rot - np.eye(3)).max())
    assert worst < 1e-9


def test_angular_momentum_magnitude_conserved_torque_free():
    params = make_params()
    state = SimState(np.zeros(3), np.eye(3), np.array([0.0, 0, 0, 1.2, 0.4, -0.9]))
    l0 = np.linalg.norm(params.inertia @ state.v[3:])
    for _ in range(10000):
        state = step(state, np.zeros(6), None, params, 1e-3)
    l1 = np.linalg.norm(params.inertia @ state.v[3:])
    assert abs(l1 - l0) < 1e-8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_quantity():
    params = make_params()
    state = SimState(np.zeros(3), np.eye(3), np.zeros(6))
    with pytest.raises(DivergenceError, match="position|twist|attitude"):
        rk4_step(state, lambda s: np.array([np.inf, 0, 0, 0, 0, 0]), None, params, 1e-3)


def test_step_rejects_bad_dt():
    params = make_params()
    with pytest.raises(ValueError):
        step(SimState.at_rest(np.zeros(3)), np.zeros(6), None, params, 0.0)
