"""Back-projection of late measurements through stored history.

Each epoch keeps the posterior state, the control that led into it, and
the measurements that were offered to the filter at that epoch. A
measurement stamped ``k - m`` that arrives at ``k`` is fused into the stored
state at ``k - m``; the estimate is then carried forward again with the
stored controls, re-offering any measurement already recorded at the
intermediate epochs, so the head matches an in-order run of the filter.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .motion_model import Control
from .split_cif import SplitState

DEFAULT_CAPACITY = 200

UpdateFn = Callable[[SplitState, object], tuple]
PredictFn = Callable[[SplitState, Control], SplitState]


class StaleMeasurement(LookupError):
    """Measurement older than anything still held in the buffer."""


class NonContiguousEpoch(ValueError):
    pass


@dataclass
class EpochRecord:
    epoch: int
    state: SplitState
    control: Control | None
    offered: list = field(default_factory=list)


class HistoryBuffer:
    """Ring of recent epochs, oldest evicted first."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._records: deque[EpochRecord] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._records)

    @property
    def epochs(self) -> list[int]:
        return [r.epoch for r in self._records]

    @property
    def head(self) -> SplitState:
        return self._records[-1].state

    def records(self) -> list[EpochRecord]:
        return list(self._records)

    def clear(self) -> None:
        self._records.clear()

    def record_epoch(self, state: SplitState, u: Control | None = None) -> HistoryBuffer:
        if self._records and state.epoch != self._records[-1].epoch + 1:
            raise NonContiguousEpoch(
                f"epoch {state.epoch} does not follow {self._records[-1].epoch}"
            )
        self._records.append(EpochRecord(state.epoch, state, u))
        return self

    def _index_for(self, stamp: float) -> int:
        if not self._records:
            raise StaleMeasurement("history is empty")
        # nearest stored epoch, ties go to the older one
        epoch = math.ceil(stamp - 0.5)
        first, last = self._records[0].epoch, self._records[-1].epoch
        if epoch < first:
            raise StaleMeasurement(f"stamp {stamp} precedes oldest stored epoch {first}")
        if epoch > last:
            raise ValueError(f"stamp {stamp} is ahead of the current epoch {last}")
        return epoch - first

    def apply_delayed(self, meas, update_fn: UpdateFn, predict_fn: PredictFn):
        """Fuse ``meas`` at its own epoch and carry the result to the head.

        ``update_fn(state, meas)`` returns ``(state, decision)``. Returns the
        new head state and the decision taken for ``meas``.
        """
        i = self._index_for(meas.stamp)
        rec = self._records[i]
        state, decision = update_fn(rec.state, meas)
        rec.state = state
        rec.offered.append(meas)
        for rec in list(self._records)[i + 1 :]:
            state = predict_fn(state, rec.control)
            for m in rec.offered:
                state, _ = update_fn(state, m)
            rec.state = state
        return state, decision
