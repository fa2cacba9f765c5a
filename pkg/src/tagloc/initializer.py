"""Start-up from the first mapped detection and kidnap recovery."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose2
from .measurement import ScreeningDecision, TagMeasurement, complete_measurement
from .split_cif import SplitState


class NotInitializable(ValueError):
    """The detection cannot seed a pose (range-only payload)."""


@dataclass(frozen=True)
class InitConfig:
    p0: np.ndarray = field(default_factory=lambda: np.diag([0.05**2, 0.05**2, 0.02**2]))
    kidnap_discard_limit: int = 5

    def __post_init__(self) -> None:
        if self.kidnap_discard_limit < 1:
            raise ValueError("kidnap_discard_limit must be >= 1")
        if np.linalg.eigvalsh(self.p0)[0] < -1e-12:
            raise ValueError("p0 must be positive semi-definite")


class MonitorState(enum.Enum):
    TRACKING = "tracking"
    REINITIALIZING = "reinitializing"


@dataclass(frozen=True)
class KidnapMonitor:
    consecutive_discards: int = 0
    state: MonitorState = MonitorState.TRACKING

    def recovered(self) -> KidnapMonitor:
        return KidnapMonitor()


def init_from_measurement(
    meas: TagMeasurement, tag_map, extrinsics: Pose2, cfg: InitConfig
) -> SplitState:
    """Seed the filter from one complete detection; all covariance independent."""
    if not meas.is_complete:
        raise NotInitializable(f"tag {meas.tag_id}: range-only detection cannot seed a pose")
    z, _ = complete_measurement(meas, tag_map, extrinsics)
    return SplitState.from_independent(z, cfg.p0, epoch=meas.stamp)


def observe_decision(
    mon: KidnapMonitor, d: ScreeningDecision, limit: int = 5
) -> tuple[KidnapMonitor, bool]:
    """Count consecutive discards; reaching ``limit`` asks for re-initialisation."""
    if d is not ScreeningDecision.DISCARD:
        return replace(mon, consecutive_discards=0), False
    n = mon.consecutive_discards + 1
    if n >= limit:
        return KidnapMonitor(n, MonitorState.REINITIALIZING), True
    return replace(mon, consecutive_discards=n), False
