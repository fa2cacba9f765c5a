"""Forklift kinematic model: one discrete motion epoch.

The robot travels ``delta_d`` along the direction
``beta + theta + delta_theta / 2`` (steering angle plus midpoint heading)
and turns by ``delta_theta``. Process noise is not added here; it enters
through the simulator and through covariance propagation.

Control-noise coordinates are ``(delta_d, delta_theta)``; the steering angle
is treated as exactly known, so process noise covariances are 2x2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle


@dataclass(frozen=True, slots=True)
class Control:
    """One motion epoch read from odometry.

    Attributes
    ----------
    delta_d:
        Travelled distance ``v * dt`` in meters.
    delta_theta:
        Heading increment ``yaw_rate * dt`` in radians.
    beta:
        Front-wheel steering angle in radians, inside (-pi/2, pi/2).
    dt:
        Epoch length in seconds.
    """

    delta_d: float
    delta_theta: float
    beta: float = 0.0
    dt: float = 0.1

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"control dt must be positive, got {self.dt}")
        if not -math.pi / 2 < self.beta < math.pi / 2:
            raise ValueError(f"steering angle {self.beta} outside (-pi/2, pi/2)")

    def negated(self) -> Control:
        return Control(-self.delta_d, -self.delta_theta, self.beta, self.dt)


@dataclass(frozen=True)
class ProcessNoiseConfig:
    """Odometry noise over (delta_d, delta_theta) plus an additive model-error floor."""

    q: np.ndarray = field(default_factory=lambda: np.diag([0.02**2, 0.01**2]))
    p_pre_ind: np.ndarray = field(default_factory=lambda: np.diag([1e-6, 1e-6, 1e-7]))


def _travel_direction(theta: float, u: Control) -> float:
    return u.beta + theta + 0.5 * u.delta_theta


def evolve_vec(x: np.ndarray, u: Control) -> np.ndarray:
    """Array form of :func:`evolve`, used inside the filter loop."""
    a = _travel_direction(x[2], u)
    return np.array(
        [
            x[0] + u.delta_d * math.cos(a),
            x[1] + u.delta_d * math.sin(a),
            wrap_angle(x[2] + u.delta_theta),
        ]
    )


def evolve(p: Pose2, u: Control) -> Pose2:
    a = _travel_direction(p.theta, u)
    return Pose2(
        p.x + u.delta_d * math.cos(a),
        p.y + u.delta_d * math.sin(a),
        p.theta + u.delta_theta,
    )


def _theta(p) -> float:
    return p.theta if isinstance(p, Pose2) else float(p[2])


def jacobian_state(p, u: Control) -> np.ndarray:
    """d evolve / d (x, y, theta)."""
    a = _travel_direction(_theta(p), u)
    return np.array(
        [
            [1.0, 0.0, -u.delta_d * math.sin(a)],
            [0.0, 1.0, u.delta_d * math.cos(a)],
            [0.0, 0.0, 1.0],
        ]
    )


def jacobian_control(p, u: Control) -> np.ndarray:
    """d evolve / d (delta_d, delta_theta), shape 3x2."""
    a = _travel_direction(_theta(p), u)
    c, s = math.cos(a), math.sin(a)
    return np.array(
        [
            [c, -0.5 * u.delta_d * s],
            [s, 0.5 * u.delta_d * c],
            [0.0, 1.0],
        ]
    )
