import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wardcart.vehicle import (MotorCommand, VehicleParams, VehicleState,
                              apply_motor, set_leds, set_payload)


def rk4_oracle(state, cmd, params, dt, steps=4000):
    """Independent fine-step integrator for the same continuous model."""
    x, y, th = state.pose
    v_l, v_r = state.wheel_speed
    tau = params.motor_time_constant
    vt_l = max(-1.0, min(1.0, cmd.duty_left)) * params.v_max
    vt_r = max(-1.0, min(1.0, cmd.duty_right)) * params.v_max
    h = dt / steps

    def deriv(s):
        x_, y_, th_, vl_, vr_ = s
        v = 0.5 * (vl_ + vr_)
        w = (vr_ - vl_) / params.track_width
        return np.array([v * math.cos(th_), v * math.sin(th_), w,
                         (vt_l - vl_) / tau, (vt_r - vr_) / tau])

    s = np.array([x, y, th, v_l, v_r])
    for _ in range(steps):
        k1 = deriv(s)
        k2 = deriv(s + h / 2 * k1)
        k3 = deriv(s + h / 2 * k2)
        k4 = deriv(s + h * k3)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


def test_equal_duties_drive_straight():
    params = VehicleParams(motor_time_constant=1e-9, v_max=1.0)
    state = apply_motor(VehicleState(), MotorCommand(0.5, 0.5), params, dt=1.0)
    x, y, th = state.pose
    assert x == pytest.approx(0.5, abs=1e-6)
    assert y == pytest.approx(0.0, abs=1e-9)
    assert th == pytest.approx(0.0, abs=1e-9)


def test_opposite_duties_rotate_in_place():
    params = VehicleParams(motor_time_constant=1e-9)
    state = apply_motor(VehicleState(), MotorCommand(-0.5, 0.5), params, dt=0.8)
    x, y, th = state.pose
    assert x == pytest.approx(0.0, abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-12)
    assert th > 0.1  # right wheel forward spins the cart counterclockwise


def test_single_wheel_arcs_about_the_stopped_wheel():
    params = VehicleParams(track_width=0.2, v_max=1.0, motor_time_constant=0.05)
    cmd = MotorCommand(0.0, 1.0)
    start = VehicleState(wheel_speed=(0.0, 1.0))  # already at commanded speed
    state = apply_motor(start, cmd, params, dt=0.7)
    x, y, th = state.pose
    # closed form: circle of radius track/2 about the left wheel at (0, 0.1)
    r = 0.1
    w = 1.0 / 0.2
    assert th == pytest.approx(w * 0.7, abs=1e-10)
    assert x == pytest.approx(r * math.sin(w * 0.7), abs=1e-9)
    assert y == pytest.approx(r * (1 - math.cos(w * 0.7)), abs=1e-9)
    # and the independent integrator agrees
    ox, oy, oth, ovl, ovr = rk4_oracle(start, cmd, params, 0.7)
    assert x == pytest.approx(ox, abs=1e-6)
    assert y == pytest.approx(oy, abs=1e-6)


def test_flow_matches_rk4_with_motor_lag():
    params = VehicleParams(track_width=0.16, v_max=0.5, motor_time_constant=0.12)
    state = VehicleState(pose=(0.3, -0.2, 0.9), wheel_speed=(0.1, -0.2))
    cmd = MotorCommand(0.7, -0.4)
    got = apply_motor(state, cmd, params, dt=0.5)
    ox, oy, oth, ovl, ovr = rk4_oracle(state, cmd, params, 0.5, steps=20000)
    assert got.pose[0] == pytest.approx(ox, abs=1e-8)
    assert got.pose[1] == pytest.approx(oy, abs=1e-8)
    assert got.pose[2] == pytest.approx(oth, abs=1e-10)
    assert got.wheel_speed[0] == pytest.approx(ovl, abs=1e-9)
    assert got.wheel_speed[1] == pytest.approx(ovr, abs=1e-9)


def test_semigroup_property_over_random_commands():
    rng = np.random.default_rng(7)
    params = VehicleParams()
    for _ in range(200):
        state = VehicleState(
            pose=(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)),
            wheel_speed=(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)))
        cmd = MotorCommand(rng.uniform(-1, 1), rng.uniform(-1, 1))
        dt = rng.uniform(0.005, 0.4)
        once = apply_motor(state, cmd, params, 2 * dt)
        twice = apply_motor(apply_motor(state, cmd, params, dt), cmd, params, dt)
        for a, b in zip(once.pose, twice.pose):
            assert a == pytest.approx(b, abs=1e-9)
        for a, b in zip(once.wheel_speed, twice.wheel_speed):
            assert a == pytest.approx(b, abs=1e-12)


@given(dt=st.floats(min_value=1e-3, max_value=5.0))
@settings(max_examples=40, deadline=None)
def test_zero_duty_from_rest_stays_put(dt):
    state = apply_motor(VehicleState(), MotorCommand(0.0, 0.0), VehicleParams(), dt)
    assert state.pose == (0.0, 0.0, 0.0)
    assert state.wheel_speed == (0.0, 0.0)


def test_swapped_duties_mirror_the_trajectory():
    rng = np.random.default_rng(3)
    params = VehicleParams()
    for _ in range(50):
        dl, dr = rng.uniform(-1, 1), rng.uniform(-1, 1)
        dt = rng.uniform(0.01, 0.5)
        a = apply_motor(VehicleState(), MotorCommand(dl, dr), params, dt)
        b = apply_motor(VehicleState(), MotorCommand(dr, dl), params, dt)
        assert a.pose[0] == pytest.approx(b.pose[0], abs=1e-9)
        assert a.pose[1] == pytest.approx(-b.pose[1], abs=1e-9)
        assert a.pose[2] == pytest.approx(-b.pose[2], abs=1e-9)


def test_wheel_speeds_never_exceed_v_max():
    rng = np.random.default_rng(11)
    params = VehicleParams()
    state = VehicleState()
    for _ in range(300):
        cmd = MotorCommand(rng.uniform(-2, 2), rng.uniform(-2, 2))  # clamped
        state = apply_motor(state, cmd, params, rng.uniform(0.005, 0.2))
        assert abs(state.wheel_speed[0]) <= params.v_max + 1e-12
        assert abs(state.wheel_speed[1]) <= params.v_max + 1e-12


def test_duty_clamping():
    cmd = MotorCommand(3.0, -2.5)
    assert cmd.duty_left == 1.0
    assert cmd.duty_right == -1.0


def test_dt_must_be_positive():
    with pytest.raises(ValueError):
        apply_motor(VehicleState(), MotorCommand(0, 0), VehicleParams(), 0.0)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        VehicleParams(track_width=0.0)
    with pytest.raises(ValueError):
        VehicleParams(v_max=-1.0)


def test_payload_switch_thresholds():
    s = VehicleState()
    assert set_payload(s, 200.0).loaded is True
    assert set_payload(s, 0.0).loaded is False
    assert set_payload(s, 150.0).loaded is False
    assert set_payload(s, 150.0, threshold=100.0).loaded is True


def test_negative_payload_rejected():
    with pytest.raises(ValueError):
        set_payload(VehicleState(), -1.0)


def test_led_flags():
    s = VehicleState()
    assert set_leds(s, False, False) == s
    assert set_leds(s, True, False).led_red is True
    lit = set_leds(s, False, True)
    assert lit.led_yellow is True and lit.led_red is False
