"""Recursive localisation loop against a tag map.

One :class:`Localizer` instance runs one method variant over a stream of
odometry controls and tag detections. The variants differ only by the
switches in :class:`MethodFlags`.
"""

from __future__ import annotations

import dataclasses
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .delay import HistoryBuffer, StaleMeasurement
from .geometry import IDENTITY, Pose2, circular_mean
from .initializer import (
    InitConfig,
    KidnapMonitor,
    MonitorState,
    init_from_measurement,
    observe_decision,
)
from .measurement import (
    DistanceSingularity,
    NoiseModel,
    ScreeningDecision,
    UnknownTag,
    adaptive_noise,
    complete_measurement,
    detection_covariance,
    linearize_distance,
    screen,
)
from .motion_model import Control
from .split_cif import SingularInnovation, SplitNoise, SplitState, predict, update_split


@dataclass(frozen=True)
class MethodFlags:
    fusion: bool = True
    split: bool = True
    adaptive: bool = True
    partial: bool = True
    back_projection: bool = True


METHODS: dict[str, MethodFlags] = {
    "TagSLAM": MethodFlags(fusion=False),
    "EKF-Full": MethodFlags(split=False),
    "SCIF-nonMA": MethodFlags(adaptive=False),
    "SCIF-nonP": MethodFlags(partial=False),
    "SCIF-nonBP": MethodFlags(back_projection=False),
    "SCIF-Full": MethodFlags(),
}


def method_flags(name: str) -> MethodFlags:
    try:
        return METHODS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; valid: {', '.join(METHODS)}") from None


@dataclass(frozen=True)
class FilterConfig:
    """Tuning of the localisation filter.

    ``noise`` is the filter's belief about detector accuracy (used for the
    nominal measurement covariance); ``dependent_share`` is the fraction of
    that covariance booked as correlated with past measurements.
    """

    init: InitConfig = field(default_factory=InitConfig)
    q: np.ndarray = field(default_factory=lambda: np.diag([0.02**2, 0.01**2]))
    p_pre_ind: np.ndarray = field(default_factory=lambda: np.diag([1e-6, 1e-6, 1e-7]))
    noise: NoiseModel = field(default_factory=NoiseModel)
    range_sigma: float = 0.05
    dependent_share: float = 0.0
    soft_threshold: float = 0.5
    hard_threshold: float = 3.0
    screen_angle_weight: float = 1.0
    adaptive_angle_weight: float = 1.0
    r_min: float = 1e-4
    d_min: float = 0.1
    max_delay_epochs: int = 200
    extrinsics: Pose2 = IDENTITY


@dataclass
class EpochOutput:
    mean: np.ndarray | None
    p_ind: np.ndarray | None
    p_dep: np.ndarray | None
    decisions: list[str]
    reliable: bool


class Localizer:
    def __init__(self, tag_map, cfg: FilterConfig, flags: MethodFlags = MethodFlags()):
        self.tag_map = tag_map
        self.cfg = cfg
        self.flags = flags
        self.state: SplitState | None = None
        self.monitor = KidnapMonitor()
        self.history = HistoryBuffer(cfg.max_delay_epochs)
        self._controls: dict[int, Control] = {}
        self.diagnostics: Counter = Counter()
        self._share = cfg.dependent_share if flags.split else 0.0

    # -- filter primitives -------------------------------------------------

    def _predict(self, state: SplitState, u: Control) -> SplitState:
        out = predict(state, u, self.cfg.q, self.cfg.p_pre_ind)
        if not self.flags.split:
            out = dataclasses.replace(out, p_ind=out.p_ind + out.p_dep, p_dep=np.zeros((3, 3)))
        return out

    def _fuse(self, state, z, h, noise: SplitNoise) -> SplitState:
        out = update_split(state, z, h, noise)
        if not self.flags.split:
            out = dataclasses.replace(out, p_ind=out.p_ind + out.p_dep, p_dep=np.zeros((3, 3)))
        return out

    def update(self, state: SplitState, meas):
        """Screen and fuse one detection; returns ``(state, decision)``."""
        cfg = self.cfg
        try:
            if meas.is_complete:
                z, h = complete_measurement(meas, self.tag_map, cfg.extrinsics)
                decision = screen(
                    state.mean, z, cfg.hard_threshold, cfg.soft_threshold, cfg.screen_angle_weight
                )
                if decision is ScreeningDecision.DISCARD:
                    return state, decision
                r = detection_covariance(meas, self.tag_map, cfg.extrinsics, cfg.noise)
                if decision is ScreeningDecision.SOFT_ACCEPT and self.flags.adaptive:
                    r = r + adaptive_noise(
                        state.mean,
                        z,
                        meas.view_distance,
                        meas.view_angle,
                        angle_weight=cfg.adaptive_angle_weight,
                        r_min=cfg.r_min,
                        screen_angle_weight=cfg.screen_angle_weight,
                    ).total
                noise = SplitNoise.split(r, self._share)
            else:
                tag = self.tag_map[meas.tag_id]
                h, z = linearize_distance(state.mean, (tag.x, tag.y), meas.payload.range, cfg.d_min)
                # no adaptive path for ranges: anything past the soft bound is dropped
                if abs(z - float(h[0] @ state.mean)) > cfg.soft_threshold:
                    return state, ScreeningDecision.DISCARD
                decision = ScreeningDecision.ACCEPT
                noise = SplitNoise(np.array([[cfg.range_sigma**2]]), np.zeros((1, 1)))
            return self._fuse(state, z, h, noise), decision
        except (SingularInnovation, DistanceSingularity):
            return state, ScreeningDecision.DISCARD

    # -- loop --------------------------------------------------------------

    def _initialize(self, meas, epoch: int) -> None:
        if self.flags.back_projection and meas.stamp < epoch and meas.stamp in self._controls:
            start = meas.stamp
        else:
            start = epoch
            meas = dataclasses.replace(meas, stamp=epoch)
        state = init_from_measurement(meas, self.tag_map, self.cfg.extrinsics, self.cfg.init)
        self.history.clear()
        self.history.record_epoch(state, None)
        for j in range(start + 1, epoch + 1):
            state = self._predict(state, self._controls[j])
            self.history.record_epoch(state, self._controls[j])
        self.state = state
        self.monitor = self.monitor.recovered()
        self.diagnostics["initializations"] += 1

    def step(self, epoch: int, control: Control | None, deliveries) -> EpochOutput:
        if control is not None:
            self._controls[epoch] = control
            self._controls.pop(epoch - self.cfg.max_delay_epochs - 1, None)
        if not self.flags.fusion:
            return self._tag_only(epoch, deliveries)

        if self.state is not None and control is not None:
            self.state = self._predict(self.state, control)
            self.history.record_epoch(self.state, control)

        decisions: list[str] = []
        for meas in deliveries:
            if meas.tag_id not in self.tag_map:
                self.diagnostics["unknown_tag"] += 1
                continue
            if self.state is None or self.monitor.state is MonitorState.REINITIALIZING:
                if meas.is_complete:
                    self._initialize(meas, epoch)
                    decisions.append("init")
                continue
            if not meas.is_complete and not self.flags.partial:
                self.diagnostics["partial_skipped"] += 1
                continue
            if not self.flags.back_projection and meas.stamp != epoch:
                meas = dataclasses.replace(meas, stamp=epoch)
            try:
                self.state, decision = self.history.apply_delayed(meas, self.update, self._predict)
            except StaleMeasurement:
                self.diagnostics["stale"] += 1
                continue
            decisions.append(decision.value)
            self.diagnostics[decision.value] += 1
            if meas.is_complete:
                self.monitor, reinit = observe_decision(
                    self.monitor, decision, self.cfg.init.kidnap_discard_limit
                )
                if reinit:
                    self.diagnostics["kidnap_detected"] += 1

        if self.state is None:
            return EpochOutput(None, None, None, decisions, False)
        reliable = self.monitor.state is MonitorState.TRACKING
        return EpochOutput(
            self.state.mean.copy(), self.state.p_ind.copy(), self.state.p_dep.copy(), decisions, reliable
        )

    def _tag_only(self, epoch: int, deliveries) -> EpochOutput:
        poses = []
        for meas in deliveries:
            if meas.is_complete and meas.tag_id in self.tag_map:
                z, _ = complete_measurement(meas, self.tag_map, self.cfg.extrinsics)
                poses.append(z)
        if not poses:
            return EpochOutput(None, None, None, [], False)
        p = np.array(poses)
        mean = np.array([p[:, 0].mean(), p[:, 1].mean(), circular_mean(p[:, 2])])
        return EpochOutput(mean, None, None, ["tag"] * len(poses), True)


@dataclass
class RunRecord:
    """Per-epoch output of one method on one stream."""

    method: str
    truth: np.ndarray  # (T, 3)
    estimates: np.ndarray  # (T, 3), NaN where no estimate exists
    p_ind: np.ndarray  # (T, 3, 3), NaN where no estimate exists
    p_dep: np.ndarray
    decisions: list[list[str]]
    reliable: np.ndarray
    diagnostics: dict
    timing: np.ndarray  # seconds per epoch; not part of any written file

    @property
    def cov(self) -> np.ndarray:
        return self.p_ind + self.p_dep


def run_localizer(method: str, stream, tag_map, cfg: FilterConfig) -> RunRecord:
    """Drive one method over a full stream (see :mod:`tagloc.sim`)."""
    flags = method_flags(method)
    loc = Localizer(tag_map, cfg, flags)
    n = len(stream.truth)
    est = np.full((n, 3), np.nan)
    p_ind = np.full((n, 3, 3), np.nan)
    p_dep = np.full((n, 3, 3), np.nan)
    decisions: list[list[str]] = []
    reliable = np.zeros(n, dtype=bool)
    timing = np.zeros(n)
    by_arrival = stream.deliveries_by_epoch()
    for k in range(n):
        t0 = time.perf_counter()
        u = stream.odometry[k - 1] if k > 0 else None
        out = loc.step(k, u, by_arrival.get(k, ()))
        timing[k] = time.perf_counter() - t0
        decisions.append(out.decisions)
        reliable[k] = out.reliable
        if out.mean is not None:
            est[k] = out.mean
            if out.p_ind is not None:
                p_ind[k] = out.p_ind
                p_dep[k] = out.p_dep
    return RunRecord(
        method, stream.truth_array(), est, p_ind, p_dep, decisions, reliable, dict(loc.diagnostics), timing
    )
