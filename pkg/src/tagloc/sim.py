"""Seeded warehouse scenarios: trajectories, tag layouts and sensor streams.

Everything here is a deterministic function of the :class:`Scenario`
(including its seed). The random generator draws the same number of
variates every epoch whatever the visibility pattern, so toggling one noise
feature does not reshuffle the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .geometry import IDENTITY, Pose2, between, compose, wrap_angle
from .localizer import FilterConfig, RunRecord, run_localizer
from .map_builder import MappingSession, Observation, TagMap
from .measurement import Complete, DistanceOnly, NoiseModel, TagMeasurement
from .motion_model import Control, evolve


class UnreachableWaypoint(ValueError):
    pass


@dataclass(frozen=True)
class SensorModel:
    """Simulated tag detector.

    The per-tag detector error is an AR(1) process with lag-one correlation
    ``ar1_rho``, scaled by ``noise.sigma(L, alpha)`` at emission time.
    """

    fov_half_angle: float = 1.0
    max_range: float = 6.0
    min_range: float = 0.3
    max_view_angle: float = 1.3
    alpha_min: float = 0.05
    noise: NoiseModel = field(default_factory=NoiseModel)
    ar1_rho: float = 0.0
    range_sigma: float = 0.05
    partial_probability: float = 0.0
    partial_distance_gain: float = 0.0
    partial_angle_gain: float = 0.0
    outlier_rate: float = 0.0
    outlier_magnitude: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.ar1_rho < 1.0:
            raise ValueError("ar1_rho must lie in [0, 1)")
        for name in ("partial_probability", "outlier_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def partial_prob(self, view_distance: float, view_angle: float) -> float:
        p = (
            self.partial_probability
            + self.partial_distance_gain * view_distance
            + self.partial_angle_gain * view_angle
        )
        return min(max(p, 0.0), 1.0)


@dataclass(frozen=True)
class OdometryNoise:
    sigma_d: float = 0.02
    sigma_theta: float = 0.01

    @property
    def q(self) -> np.ndarray:
        return np.diag([self.sigma_d**2, self.sigma_theta**2])


@dataclass(frozen=True)
class Kidnap:
    epoch: int
    offset: Pose2


@dataclass(frozen=True)
class DelayWindow:
    start: int
    end: int
    m: int


@dataclass(frozen=True)
class OutlierBurst:
    start: int
    end: int
    rate: float


Event = Union[Kidnap, DelayWindow, OutlierBurst]


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_epochs: int
    dt: float
    waypoints: list[Pose2]
    tag_layout: TagMap
    sensor: SensorModel = field(default_factory=SensorModel)
    odometry: OdometryNoise = field(default_factory=OdometryNoise)
    speed: float = 1.0
    yaw_rate: float = 0.8
    loop: bool = False
    extrinsics: Pose2 = IDENTITY
    events: tuple = ()
    filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.duration_epochs < 1:
            raise ValueError("duration_epochs must be positive")


@dataclass(frozen=True)
class Detection:
    arrival: int
    measurement: TagMeasurement
    outlier: bool = False


@dataclass
class Stream:
    truth: list[Pose2]
    odometry: list[Control]  # odometry[k - 1] moves epoch k - 1 to k
    detections: list[Detection]
    true_controls: list[Control] = field(default_factory=list)

    def truth_array(self) -> np.ndarray:
        return np.array([p.as_array() for p in self.truth])

    def deliveries_by_epoch(self) -> dict[int, list[TagMeasurement]]:
        out: dict[int, list[TagMeasurement]] = {}
        for d in self.detections:
            out.setdefault(d.arrival, []).append(d.measurement)
        return out


# -- ground truth -------------------------------------------------------------


def _split_steps(total: float, max_step: float) -> list[float]:
    if abs(total) < 1e-12:
        return []
    n = max(1, math.ceil(abs(total) / max_step - 1e-9))
    return [total / n] * n


def plan_controls(s: Scenario) -> list[Control]:
    """Pivot-and-drive controls visiting every waypoint in order.

    At each waypoint the robot turns on the spot toward the next one, drives
    straight to it, then turns to the waypoint heading. Step sizes are
    equalised so each leg lands exactly.
    """
    if len(s.waypoints) < 2:
        raise ValueError("a path needs at least two waypoints")
    step_d = s.speed * s.dt
    step_th = s.yaw_rate * s.dt
    n_needed = s.duration_epochs - 1
    controls: list[Control] = []

    def turn(delta: float) -> None:
        if abs(delta) < 1e-12:
            return
        if step_th <= 0.0:
            raise UnreachableWaypoint(f"heading change {delta:.3f} rad needed but yaw_rate is {s.yaw_rate}")
        for d in _split_steps(delta, step_th):
            controls.append(Control(0.0, d, 0.0, s.dt))

    targets = list(s.waypoints[1:])
    if s.loop:
        targets.append(s.waypoints[0])
    pose = s.waypoints[0]
    while len(controls) < n_needed:
        before = len(controls)
        for wp in targets:
            dx, dy = wp.x - pose.x, wp.y - pose.y
            dist = math.hypot(dx, dy)
            if dist > 1e-12:
                if step_d <= 0.0:
                    raise UnreachableWaypoint("waypoint needs travel but speed is not positive")
                turn(wrap_angle(math.atan2(dy, dx) - pose.theta))
                heading = math.atan2(dy, dx)
                for d in _split_steps(dist, step_d):
                    controls.append(Control(d, 0.0, 0.0, s.dt))
                pose = Pose2(wp.x, wp.y, heading)
            turn(wrap_angle(wp.theta - pose.theta))
            pose = Pose2(wp.x, wp.y, wp.theta)
        if not s.loop or len(controls) == before:
            break
    while len(controls) < n_needed:
        controls.append(Control(0.0, 0.0, 0.0, s.dt))
    return controls[:n_needed]


def generate_truth(s: Scenario) -> tuple[list[Pose2], list[Control]]:
    """Nominal trajectory (no kidnaps) and the exact controls that produce it."""
    controls = plan_controls(s)
    poses = [s.waypoints[0]]
    for u in controls:
        poses.append(evolve(poses[-1], u))
    return poses, controls


# -- sensor stream ------------------------------------------------------------


def view_geometry(robot: Pose2, tag: Pose2, extrinsics: Pose2):
    """Tag pose in the camera frame, view distance and view angle."""
    rel = between(compose(robot, extrinsics), tag)
    dist = math.hypot(rel.x, rel.y)
    # 0 when the camera looks straight at the tag face
    alpha = abs(wrap_angle(rel.theta + math.pi))
    return rel, dist, alpha


def is_visible(sensor: SensorModel, rel: Pose2, dist: float, alpha: float) -> bool:
    if not sensor.min_range <= dist <= sensor.max_range:
        return False
    if abs(math.atan2(rel.y, rel.x)) > sensor.fov_half_angle:
        return False
    return alpha <= sensor.max_view_angle


def _delay_at(events, k: int) -> int:
    m = 0
    for e in events:
        if isinstance(e, DelayWindow) and e.start <= k < e.end:
            m = e.m
    return m


def _outlier_rate_at(events, k: int, base: float) -> float:
    rate = base
    for e in events:
        if isinstance(e, OutlierBurst) and e.start <= k < e.end:
            rate = e.rate
    return rate


def synthesize_stream(s: Scenario, truth=None) -> Stream:
    """Noisy odometry and tag detections along the true trajectory.

    ``truth`` defaults to :func:`generate_truth`; kidnap events displace the
    true pose and the returned stream carries the displaced trajectory.
    """
    if truth is None:
        truth = generate_truth(s)
    _, controls = truth
    rng = np.random.default_rng(s.seed)
    sensor = s.sensor
    tag_ids = s.tag_layout.ids()
    n_tags = len(tag_ids)
    rho = sensor.ar1_rho
    innov = math.sqrt(1.0 - rho * rho)
    ar_state = rng.standard_normal((n_tags, 3))
    kidnaps = {e.epoch: e.offset for e in s.events if isinstance(e, Kidnap)}

    poses: list[Pose2] = []
    odometry: list[Control] = []
    detections: list[Detection] = []
    for k in range(s.duration_epochs):
        odo_noise = rng.standard_normal(2)
        w = rng.standard_normal((n_tags, 3))
        u_partial = rng.random(n_tags)
        u_outlier = rng.random(n_tags)
        range_noise = rng.standard_normal(n_tags)
        outlier_draw = rng.random((n_tags, 3))

        if k == 0:
            pose = s.waypoints[0]
        else:
            u = controls[k - 1]
            pose = evolve(poses[-1], u)
            odometry.append(
                Control(
                    u.delta_d + s.odometry.sigma_d * odo_noise[0],
                    u.delta_theta + s.odometry.sigma_theta * odo_noise[1],
                    u.beta,
                    u.dt,
                )
            )
        if k in kidnaps:
            off = kidnaps[k]
            pose = Pose2(pose.x + off.x, pose.y + off.y, pose.theta + off.theta)
        poses.append(pose)

        if k > 0:
            ar_state = rho * ar_state + innov * w
        m = _delay_at(s.events, k)
        if k + m >= s.duration_epochs:
            continue
        out_rate = _outlier_rate_at(s.events, k, sensor.outlier_rate)
        for i, tid in enumerate(tag_ids):
            tag = s.tag_layout[tid]
            rel, dist, alpha = view_geometry(pose, tag, s.extrinsics)
            if not is_visible(sensor, rel, dist, alpha):
                continue
            sxy, sth = sensor.noise.sigma(dist, alpha)
            e = ar_state[i]
            noisy = Pose2(rel.x + sxy * e[0], rel.y + sxy * e[1], rel.theta + sth * e[2])
            outlier = u_outlier[i] < out_rate
            if u_partial[i] < sensor.partial_prob(dist, alpha):
                r = math.hypot(pose.x - tag.x, pose.y - tag.y) + sensor.range_sigma * range_noise[i]
                if outlier:
                    sign = 1.0 if outlier_draw[i, 1] < 0.5 else -1.0
                    r += sign * sensor.outlier_magnitude * (0.5 + outlier_draw[i, 0])
                payload = DistanceOnly(max(r, 1e-3))
            else:
                if outlier:
                    mag = sensor.outlier_magnitude * (0.5 + outlier_draw[i, 0])
                    ang = 2.0 * math.pi * outlier_draw[i, 1]
                    noisy = Pose2(
                        noisy.x + mag * math.cos(ang),
                        noisy.y + mag * math.sin(ang),
                        noisy.theta + 0.2 * (outlier_draw[i, 2] - 0.5),
                    )
                payload = Complete(noisy)
            seen_dist = max(math.hypot(noisy.x, noisy.y), 1e-3)
            seen_alpha = min(max(abs(wrap_angle(noisy.theta + math.pi)), sensor.alpha_min), math.pi / 2)
            meas = TagMeasurement(tid, k, payload, seen_dist, seen_alpha)
            detections.append(Detection(k + m, meas, outlier))
    detections.sort(key=lambda d: (d.arrival, d.measurement.stamp, d.measurement.tag_id))
    return Stream(poses, odometry, detections, list(controls))


def run_method(method: str, stream: Stream, s: Scenario, tag_map: TagMap | None = None) -> RunRecord:
    """Run one comparison method; the map defaults to the true layout."""
    return run_localizer(method, stream, s.tag_layout if tag_map is None else tag_map, s.filter)


# -- mapping sessions ---------------------------------------------------------


def _information(sigma_xy: float, sigma_theta: float) -> np.ndarray:
    # inverse noise covariance; unit weight where the noise is switched off
    wxy = 1.0 / sigma_xy**2 if sigma_xy > 0 else 1.0
    wth = 1.0 / sigma_theta**2 if sigma_theta > 0 else 1.0
    return np.diag([wxy, wxy, wth])


def synthesize_mapping_session(
    s: Scenario,
    sigma_xy: float = 0.02,
    sigma_theta: float = math.radians(0.5),
    every: int = 1,
    seed: int | None = None,
) -> MappingSession:
    """Anchored tag observations along the scenario's nominal path.

    Observations are relative tag poses in the robot frame with white
    Gaussian noise; their information matrix is the inverse of the injected
    covariance (unit information if the noise is zero).
    """
    poses, _ = generate_truth(s)
    rng = np.random.default_rng(s.seed if seed is None else seed)
    info = _information(sigma_xy, sigma_theta)
    anchors: dict[int, Pose2] = {}
    obs: list[Observation] = []
    for k in range(0, len(poses), every):
        robot = poses[k]
        for tid in s.tag_layout.ids():
            tag = s.tag_layout[tid]
            _, dist, alpha = view_geometry(robot, tag, s.extrinsics)
            rel_cam = between(compose(robot, s.extrinsics), tag)
            noise = rng.standard_normal(3)
            if not is_visible(s.sensor, rel_cam, dist, alpha):
                continue
            rel = between(robot, tag)
            anchors[k] = robot
            obs.append(
                Observation(
                    k,
                    tid,
                    Pose2(rel.x + sigma_xy * noise[0], rel.y + sigma_xy * noise[1], rel.theta + sigma_theta * noise[2]),
                    info,
                )
            )
    return MappingSession(anchors, obs)



def random_mapping_session(
    n_tags: int = 10,
    obs_per_tag: int = 5,
    sigma_xy: float = 0.02,
    sigma_theta: float = math.radians(0.5),
    seed: int = 0,
    extent: float = 20.0,
    view_range: float = 4.0,
) -> tuple[MappingSession, TagMap]:
    """Random tag layout, each tag seen ``obs_per_tag`` times from nearby anchors.

    Returns the session and the true layout.
    """
    rng = np.random.default_rng(seed)
    truth = {}
    anchors: dict[int, Pose2] = {}
    obs: list[Observation] = []
    info = _information(sigma_xy, sigma_theta)
    epoch = 0
    for tid in range(n_tags):
        tag = Pose2(*rng.uniform(0.0, extent, 2), rng.uniform(-math.pi, math.pi))
        truth[tid] = tag
        for _ in range(obs_per_tag):
            r = rng.uniform(0.5, view_range)
            b = rng.uniform(-math.pi, math.pi)
            robot = Pose2(tag.x + r * math.cos(b), tag.y + r * math.sin(b), rng.uniform(-math.pi, math.pi))
            rel = between(robot, tag)
            n = rng.standard_normal(3)
            anchors[epoch] = robot
            obs.append(
                Observation(
                    epoch,
                    tid,
                    Pose2(rel.x + sigma_xy * n[0], rel.y + sigma_xy * n[1], rel.theta + sigma_theta * n[2]),
                    info,
                )
            )
            epoch += 1
    return MappingSession(anchors, obs), TagMap(truth, {"origin": "random layout"})
