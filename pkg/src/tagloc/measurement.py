"""Tag measurement models, screening and adaptive measurement noise.

A detection is either a complete relative pose of the tag in the camera
frame, or a degraded range-only reading (robot origin to tag centre).
Complete detections become a direct global pose measurement with ``H = I``;
range readings are linearised about the predicted position.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import (
    Pose2,
    detection_jacobian,
    pose_difference,
    robot_pose_from_tag_detection,
)
from .split_cif import SplitNoise

H_POSE = np.eye(3)


class UnknownTag(KeyError):
    pass


class DistanceSingularity(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Complete:
    pose_in_camera: Pose2


@dataclass(frozen=True, slots=True)
class DistanceOnly:
    range: float

    def __post_init__(self) -> None:
        if not self.range > 0.0:
            raise ValueError(f"range must be positive, got {self.range}")


Payload = Union[Complete, DistanceOnly]


@dataclass(frozen=True, slots=True)
class TagMeasurement:
    """One detection of one tag.

    ``view_distance`` (L) is the camera-to-tag distance and ``view_angle``
    (alpha) the angle between the camera axis and the direction facing the
    tag head-on; both feed the noise models.
    """

    tag_id: int
    stamp: int
    payload: Payload
    view_distance: float
    view_angle: float

    def __post_init__(self) -> None:
        if not self.view_distance > 0.0:
            raise ValueError("view_distance must be positive")
        if not 0.0 < self.view_angle <= math.pi / 2:
            raise ValueError(f"view_angle {self.view_angle} outside (0, pi/2]")

    @property
    def is_complete(self) -> bool:
        return isinstance(self.payload, Complete)


class ScreeningDecision(enum.Enum):
    ACCEPT = "accept"
    SOFT_ACCEPT = "soft_accept"
    DISCARD = "discard"


@dataclass(frozen=True)
class NoiseModel:
    """Detector standard deviations growing with view distance and angle.

    ``sigma = base * (1 + growth_distance * L) * (1 + growth_angle * alpha)``
    for both the translation and the heading component.
    """

    base_sigma_xy: float = 0.03
    base_sigma_theta: float = 0.01
    growth_distance: float = 0.3
    growth_angle: float = 0.5

    def sigma(self, view_distance: float, view_angle: float) -> tuple[float, float]:
        g = (1.0 + self.growth_distance * view_distance) * (1.0 + self.growth_angle * view_angle)
        return self.base_sigma_xy * g, self.base_sigma_theta * g


def _tag(tag_map, tag_id: int) -> Pose2:
    try:
        return tag_map[tag_id]
    except KeyError:
        raise UnknownTag(tag_id) from None


def complete_measurement(
    meas: TagMeasurement, tag_map, extrinsics: Pose2
) -> tuple[np.ndarray, np.ndarray]:
    """Global robot pose measurement ``z`` and its matrix ``H = I``."""
    if not meas.is_complete:
        raise TypeError("complete_measurement needs a Complete payload")
    tag = _tag(tag_map, meas.tag_id)
    z = robot_pose_from_tag_detection(tag, meas.payload.pose_in_camera, extrinsics)
    return z.as_array(), H_POSE


def detection_covariance(
    meas: TagMeasurement, tag_map, extrinsics: Pose2, model: NoiseModel
) -> np.ndarray:
    """Nominal covariance of the global pose implied by a complete detection.

    The detector noise is diagonal in the camera frame; it is pushed through
    the tag-to-robot transform chain to first order.
    """
    tag = _tag(tag_map, meas.tag_id)
    sxy, sth = model.sigma(meas.view_distance, meas.view_angle)
    j = detection_jacobian(tag, meas.payload.pose_in_camera, extrinsics)
    r = (j * np.array([sxy * sxy, sxy * sxy, sth * sth])) @ j.T
    return 0.5 * (r + r.T)


def residual_norm(predicted, z, angle_weight: float = 1.0) -> float:
    """Norm of the pose residual; the heading part is scaled by ``angle_weight`` (m/rad)."""
    d = pose_difference(z, predicted)
    return math.hypot(d[0], d[1], angle_weight * d[2])


def screen(
    predicted,
    z,
    threshold_hard: float,
    threshold_soft: float,
    angle_weight: float = 1.0,
) -> ScreeningDecision:
    if not 0.0 < threshold_soft < threshold_hard:
        raise ValueError("screening thresholds must satisfy 0 < soft < hard")
    d = residual_norm(predicted, z, angle_weight)
    if d > threshold_hard:
        return ScreeningDecision.DISCARD
    if d > threshold_soft:
        return ScreeningDecision.SOFT_ACCEPT
    return ScreeningDecision.ACCEPT


def adaptive_scale(residual: float, view_distance: float, view_angle: float) -> float:
    """Scalar noise level ``0.25 * L / alpha**2 * |residual|``."""
    return 0.25 * (view_distance / view_angle**2) * residual


def adaptive_noise(
    predicted,
    z,
    view_distance: float,
    view_angle: float,
    *,
    angle_weight: float = 1.0,
    dependent_fraction: float = 0.0,
    r_min: float = 1e-4,
    screen_angle_weight: float = 1.0,
) -> SplitNoise:
    """Measurement noise inflated by the prediction/measurement disagreement.

    The scalar level is spread over the pose diagonal with the heading
    entry scaled by ``angle_weight`` (rad^2 per m^2), then floored by
    ``r_min`` so a perfect agreement never yields a zero covariance.
    """
    if not (view_distance > 0.0 and view_angle > 0.0):
        raise ValueError("view distance and angle must be positive")
    s = adaptive_scale(residual_norm(predicted, z, screen_angle_weight), view_distance, view_angle)
    r = np.diag([s + r_min, s + r_min, s * angle_weight + r_min])
    return SplitNoise.split(r, dependent_fraction)


def linearize_distance(
    predicted, tag_xy, z_range: float, d_min: float = 0.1
) -> tuple[np.ndarray, float]:
    """Linear range model about the predicted position.

    Returns ``h_row = [[C, S, 0]]`` and the pseudo-measurement
    ``z_tilde = z - D + C * x_pred + S * y_pred`` so that
    ``z_tilde ~ h_row @ [x, y, theta]``.
    """
    if isinstance(predicted, Pose2):
        predicted = predicted.as_array()
    px, py = float(predicted[0]), float(predicted[1])
    dx, dy = px - tag_xy[0], py - tag_xy[1]
    dist = math.hypot(dx, dy)
    if dist < d_min:
        raise DistanceSingularity(f"predicted position {dist:.3g} m from tag, below {d_min} m")
    c, s = dx / dist, dy / dist
    return np.array([[c, s, 0.0]]), z_range - dist + c * px + s * py
