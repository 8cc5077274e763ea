from __future__ import annotations

import numpy as np
import pytest

from aerotact.allocation import allocate, allocation_matrix, hover_thrust, rotor_geometry
from aerotact.dynamics import GRAVITY, DegenerateGeometryError, VehicleParams
from aerotact.frames import Wrench


def test_geometry_shapes_and_unit_directions():
    params = VehicleParams()
    positions, directions = rotor_geometry(params)
    assert positions.shape == (6, 3)
    assert np.allclose(np.linalg.norm(positions, axis=1), params.arm_length)
    assert np.allclose(np.linalg.norm(directions, axis=1), 1.0)
    # alternating tilt: consecutive rotors lean opposite ways
    assert np.allclose(directions[:, 2], np.cos(params.tilt_angle))


def test_uniform_thrust_gives_pure_lift():
    params = VehicleParams()
    a = allocation_matrix(params)
    tau = a @ np.full(6, 2.0)
    assert np.allclose(tau[0:2], 0.0, atol=1e-12)
    assert np.allclose(tau[3:], 0.0, atol=1e-12)
    assert tau[2] == pytest.approx(12.0 * np.cos(params.tilt_angle))


def test_hover_thrust_closed_form():
    params = VehicleParams(mass=4.0)
    f = hover_thrust(params)
    assert f == pytest.approx(4.0 * GRAVITY / (6.0 * np.cos(np.deg2rad(30.0))), abs=1e-12)
    # allocating the hover wrench recovers the same uniform thrust
    wrench = Wrench(np.array([0.0, 0.0, params.mass * GRAVITY]), np.zeros(3), "B")
    thrusts, speeds, saturated = allocate(wrench, params)
    assert not saturated
    assert np.allclose(thrusts, f, atol=1e-9)
    assert np.allclose(speeds, np.sqrt(f / params.k_f))


def test_round_trip_random_feasible_wrenches():
    params = VehicleParams()
    a = allocation_matrix(params)
    a_inv = np.linalg.inv(a)
    rng = np.random.default_rng(42)
    lo, hi = params.thrust_min, params.thrust_max
    worst = 0.0
    for _ in range(1000):
        f0 = rng.uniform(lo + 0.5, hi - 0.5, size=6)
        tau = a @ f0
        f1, _, saturated = allocate(Wrench.from_array(tau, "B"), params, a_inv)
        assert not saturated
        worst = max(worst, np.abs(a @ f1 - tau).max())
    assert worst < 1e-9


def test_saturation_flag_and_clamp():
    params = VehicleParams()
    # demand a wrench that needs negative thrust on some rotor
    wrench = Wrench(np.array([200.0, 0.0, 0.0]), np.zeros(3), "B")
    thrusts, _, saturated = allocate(wrench, params)
    assert saturated
    assert np.all(thrusts >= params.thrust_min - 1e-12)
    assert np.all(thrusts <= params.thrust_max + 1e-12)


def test_zero_tilt_is_degenerate():
    params = VehicleParams(tilt_angle=0.0)
    with pytest.raises(DegenerateGeometryError):
        allocation_matrix(params)


def test_allocation_well_conditioned_at_default_tilt():
    a = allocation_matrix(VehicleParams())
    assert np.linalg.cond(a) < 100.0
