"""Planar rigid-transform helpers.

All headings live in the half-open interval (-pi, pi]. Angle differences
are always taken through :func:`wrap_angle`, never by raw subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Map ``theta`` into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta!r}")
    r = theta - TWO_PI * math.ceil((theta - math.pi) / TWO_PI)
    # guard the rounding at the interval edges
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("cannot wrap non-finite angles")
    r = theta - TWO_PI * np.ceil((theta - math.pi) / TWO_PI)
    r = np.where(r <= -math.pi, r + TWO_PI, r)
    return np.where(r > math.pi, r - TWO_PI, r)


@dataclass(frozen=True, slots=True)
class Pose2:
    """Planar pose: position in meters, heading in radians."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def from_array(cls, v) -> Pose2:
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)


IDENTITY = Pose2()


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Return ``a * b``: ``b`` expressed in the frame of ``a``, mapped out."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def between(a: Pose2, b: Pose2) -> Pose2:
    """Pose of ``b`` seen from ``a``, i.e. ``inverse(a) * b``."""
    return compose(inverse(a), b)


def pose_difference(a, b) -> np.ndarray:
    """Coordinate difference ``a - b`` with the heading component wrapped."""
    a = a.as_array() if isinstance(a, Pose2) else np.asarray(a, dtype=float)
    b = b.as_array() if isinstance(b, Pose2) else np.asarray(b, dtype=float)
    d = a - b
    d[2] = wrap_angle(d[2])
    return d


def compose_jacobians(a: Pose2, b: Pose2) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of ``compose(a, b)`` in (x, y, theta) coordinates."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    ja = np.array(
        [
            [1.0, 0.0, -s * b.x - c * b.y],
            [0.0, 1.0, c * b.x - s * b.y],
            [0.0, 0.0, 1.0],
        ]
    )
    jb = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return ja, jb


def inverse_jacobian(a: Pose2) -> np.ndarray:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return np.array(
        [
            [-c, -s, s * a.x - c * a.y],
            [s, -c, c * a.x + s * a.y],
            [0.0, 0.0, -1.0],
        ]
    )


def robot_pose_from_tag_detection(
    tag_global: Pose2, tag_in_camera: Pose2, camera_in_robot: Pose2
) -> Pose2:
    """Global robot pose implied by seeing a mapped tag.

    ``tag_global * inverse(tag_in_camera)`` is the camera's global pose; the
    extrinsic calibration then strips the camera mounting offset.
    """
    return compose(compose(tag_global, inverse(tag_in_camera)), inverse(camera_in_robot))


def detection_jacobian(
    tag_global: Pose2, tag_in_camera: Pose2, camera_in_robot: Pose2
) -> np.ndarray:
    """d(robot_pose_from_tag_detection) / d(tag_in_camera), 3x3."""
    inv_m = inverse(tag_in_camera)
    camera_global = compose(tag_global, inv_m)
    _, j_cam_inv = compose_jacobians(tag_global, inv_m)
    j_robot_cam, _ = compose_jacobians(camera_global, inverse(camera_in_robot))
    return j_robot_cam @ j_cam_inv @ inverse_jacobian(tag_in_camera)


def circular_mean(angles) -> float:
    angles = np.asarray(angles, dtype=float)
    return wrap_angle(math.atan2(float(np.sin(angles).sum()), float(np.cos(angles).sum())))
