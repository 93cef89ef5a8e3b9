"""Deterministic pendulum swing-up task, reimplemented without a simulator
dependency.

Conventions: theta = 0 is upright, positive torque is counter-clockwise.
Dynamics constants: g = 10, m = 1, L = 1, dt = 0.05; angular velocity is
clipped to [-8, 8] before the angle is integrated, torque to [-2, 2] before
use.  The reward is computed from the pre-step state and the clipped torque:

    r = -(angle_normalize(theta)^2 + 0.1*theta_dot^2 + 0.001*torque^2)

Episodes end after 200 steps; the cutoff is a time horizon, not a physical
terminal state (TD targets bootstrap through it).
"""

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = 10.0
MASS = 1.0
LENGTH = 1.0
DT = 0.05
MAX_SPEED = 8.0
MAX_TORQUE = 2.0
HORIZON = 200
OBS_DIM = 3

_TWO_PI = 2.0 * math.pi


def angle_normalize(theta):
    """Map an angle into (-pi, pi]; -pi itself maps to +pi."""
    a = (theta + math.pi) % _TWO_PI - math.pi
    if a == -math.pi:
        return math.pi
    return a


@dataclass
class PendulumState:
    theta: float
    theta_dot: float
    step_index: int = 0


def observe(state):
    """Observation [cos(theta), sin(theta), theta_dot] as a float64 vector."""
    return np.array(
        [math.cos(state.theta), math.sin(state.theta), state.theta_dot]
    )


def reset(rng):
    """Fresh episode: theta ~ U(-pi, pi), theta_dot ~ U(-1, 1)."""
    theta = rng.uniform(-math.pi, math.pi)
    theta_dot = rng.uniform(-1.0, 1.0)
    state = PendulumState(theta, theta_dot, 0)
    return state, observe(state)


def step(state, torque):
    """Advance one step.  Returns (next_state, next_obs, reward, done)."""
    if not math.isfinite(torque):
        raise ValueError(f"non-finite torque {torque!r}")
    u = min(max(torque, -MAX_TORQUE), MAX_TORQUE)
    th_n = angle_normalize(state.theta)
    reward = -(th_n * th_n + 0.1 * state.theta_dot ** 2 + 0.001 * u * u)

    acc = (3.0 * GRAVITY / (2.0 * LENGTH)) * math.sin(state.theta)
    acc += (3.0 / (MASS * LENGTH * LENGTH)) * u
    theta_dot = state.theta_dot + acc * DT
    theta_dot = min(max(theta_dot, -MAX_SPEED), MAX_SPEED)
    theta = state.theta + theta_dot * DT

    next_state = PendulumState(theta, theta_dot, state.step_index + 1)
    done = next_state.step_index >= HORIZON
    return next_state, observe(next_state), reward, done


def dynamics_constants():
    """Constants recorded into run metadata."""
    return {
        "gravity": GRAVITY,
        "mass": MASS,
        "length": LENGTH,
        "dt": DT,
        "max_speed": MAX_SPEED,
        "max_torque": MAX_TORQUE,
        "horizon": HORIZON,
    }
