"""Differential-drive cart: PWM-style motor model, pose flow, payload, LEDs.

Wheel speeds relax toward ``duty * v_max`` with a first-order lag. The pose
is advanced by integrating the true continuous-time unicycle flow of those
relaxing speeds: heading has a closed form (it is the wheel displacement
difference over the track width), and position is integrated with composite
Gauss-Legendre quadrature tight enough that stepping dt twice matches one
step of 2*dt to well below 1e-9. Euler integration would not compose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_SWITCH_THRESHOLD = 200.0  # grams, matches the 200 g test weight

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class VehicleParams:
    track_width: float = 0.16
    v_max: float = 0.5
    motor_time_constant: float = 0.1
    switch_threshold: float = DEFAULT_SWITCH_THRESHOLD

    def __post_init__(self):
        for name in ("track_width", "v_max", "motor_time_constant", "switch_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class MotorCommand:
    duty_left: float
    duty_right: float

    def __post_init__(self):
        object.__setattr__(self, "duty_left", min(1.0, max(-1.0, self.duty_left)))
        object.__setattr__(self, "duty_right", min(1.0, max(-1.0, self.duty_right)))


@dataclass(frozen=True)
class VehicleState:
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)  # x m, y m, heading rad
    wheel_speed: tuple[float, float] = (0.0, 0.0)       # left, right m/s
    payload_grams: float = 0.0
    loaded: bool = False
    led_red: bool = False
    led_yellow: bool = False


def _displacement(target: float, dev: float, tau: float, t: float) -> float:
    """Integral of v(s) = target + dev * exp(-s/tau) over [0, t]."""
    return target * t + dev * tau * (1.0 - math.exp(-t / tau))


def apply_motor(state: VehicleState, cmd: MotorCommand, params: VehicleParams,
                dt: float) -> VehicleState:
    """Advance the cart by dt under a motor command.

    Exact in the wheel-speed and heading components; position is integrated
    with composite quadrature of the time-varying twist.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    tau = params.motor_time_constant
    vt_l = cmd.duty_left * params.v_max
    vt_r = cmd.duty_right * params.v_max
    v0_l, v0_r = state.wheel_speed
    dev_l = v0_l - vt_l
    dev_r = v0_r - vt_r

    decay = math.exp(-dt / tau)
    v1_l = vt_l + dev_l * decay
    v1_r = vt_r + dev_r * decay

    x0, y0, th0 = state.pose
    track = params.track_width

    def heading(t: float) -> float:
        s_l = _displacement(vt_l, dev_l, tau, t)
        s_r = _displacement(vt_r, dev_r, tau, t)
        return th0 + (s_r - s_l) / track

    th1 = heading(dt)

    # composite Gauss-Legendre over enough panels to resolve the motor lag
    panels = int(min(64, max(1, math.ceil(dt / tau))))
    h = dt / panels
    x, y = x0, y0
    for p in range(panels):
        a = p * h
        ts = a + (_GL_NODES + 1.0) * (h / 2.0)
        ws = _GL_WEIGHTS * (h / 2.0)
        for t, w in zip(ts, ws):
            e = math.exp(-t / tau)
            v = 0.5 * ((vt_l + dev_l * e) + (vt_r + dev_r * e))
            th = heading(t)
            x += w * v * math.cos(th)
            y += w * v * math.sin(th)

    return replace(state, pose=(x, y, th1), wheel_speed=(v1_l, v1_r))


def set_payload(state: VehicleState, grams: float,
                threshold: float = DEFAULT_SWITCH_THRESHOLD) -> VehicleState:
    """Place or remove mass on the cart; the contact switch trips at threshold."""
    if grams < 0:
        raise ValueError("payload mass cannot be negative")
    return replace(state, payload_grams=grams, loaded=grams >= threshold)


def set_leds(state: VehicleState, red: bool, yellow: bool) -> VehicleState:
    return replace(state, led_red=red, led_yellow=yellow)
