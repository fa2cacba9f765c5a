import numpy as np
import pytest

from oracles import random_psd
from tagloc.delay import HistoryBuffer, NonContiguousEpoch, StaleMeasurement
from tagloc.measurement import ScreeningDecision
from tagloc.motion_model import Control
from tagloc.split_cif import SplitNoise, SplitState, predict, update_split

Q = np.diag([0.02**2, 0.01**2])
PRE = np.diag([1e-6, 1e-6, 1e-7])


class Obs:
    """Minimal measurement: full-state observation with its own noise."""

    def __init__(self, stamp, z, r_ind, r_dep):
        self.stamp = stamp
        self.z = z
        self.noise = SplitNoise(r_ind, r_dep)


def update_fn(state, m):
    return update_split(state, m.z, np.eye(3), m.noise), ScreeningDecision.ACCEPT


def predict_fn(state, u):
    return predict(state, u, Q, PRE)


def random_run(rng, n_epochs, n_meas):
    controls = [Control(rng.uniform(0, 0.2), rng.uniform(-0.1, 0.1)) for _ in range(n_epochs)]
    obs = []
    for _ in range(n_meas):
        k = int(rng.integers(0, n_epochs))
        obs.append(Obs(k, rng.normal(size=3) * 0.5, random_psd(rng, scale=0.1), random_psd(rng, scale=0.05)))
    return controls, obs


def replay(x0, controls, obs_by_epoch):
    """Reference: predict, then fuse that epoch's measurements in the given order."""
    s = x0
    for m in obs_by_epoch.get(0, []):
        s, _ = update_fn(s, m)
    for k, u in enumerate(controls[1:], start=1):
        s = predict_fn(s, u)
        for m in obs_by_epoch.get(k, []):
            s, _ = update_fn(s, m)
    return s


def run_with_one_delay(x0, controls, on_time, late, arrival):
    buf = HistoryBuffer(50)
    s = x0
    buf.record_epoch(s, None)
    for k in range(len(controls)):
        if k > 0:
            s = predict_fn(s, controls[k])
            buf.record_epoch(s, controls[k])
        for m in on_time.get(k, []):
            s, _ = buf.apply_delayed(m, update_fn, predict_fn)
        if k == arrival:
            s, _ = buf.apply_delayed(late, update_fn, predict_fn)
    return s, buf


def test_back_projection_matches_in_order_replay():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(8, 15))
        controls, obs = random_run(rng, n, 10)
        x0 = SplitState(np.array([0.0, 0.0, 0.1]), random_psd(rng, scale=0.1), random_psd(rng, scale=0.05))
        late_i = int(rng.integers(0, len(obs)))
        late = obs[late_i]
        m = int(rng.integers(1, 6))
        if late.stamp + m >= n:
            continue
        on_time: dict[int, list] = {}
        for i, o in enumerate(obs):
            if i != late_i:
                on_time.setdefault(o.stamp, []).append(o)
        head, _ = run_with_one_delay(x0, controls, on_time, late, late.stamp + m)
        # in order: the late one is fused after the measurements already at its epoch
        ordered = {k: list(v) for k, v in on_time.items()}
        ordered.setdefault(late.stamp, []).append(late)
        ref = replay(x0, controls, ordered)
        np.testing.assert_allclose(head.mean, ref.mean, atol=1e-9)
        np.testing.assert_allclose(head.p_ind, ref.p_ind, atol=1e-9)
        np.testing.assert_allclose(head.p_dep, ref.p_dep, atol=1e-9)


def test_zero_delay_is_plain_update(rng):
    buf = HistoryBuffer(5)
    s = SplitState.from_independent(np.zeros(3), np.eye(3) * 0.1)
    buf.record_epoch(s)
    o = Obs(0, np.ones(3) * 0.1, np.eye(3) * 0.01, np.zeros((3, 3)))
    head, d = buf.apply_delayed(o, update_fn, predict_fn)
    ref, _ = update_fn(s, o)
    np.testing.assert_array_equal(head.mean, ref.mean)
    assert d is ScreeningDecision.ACCEPT


def test_stale_and_future():
    buf = HistoryBuffer(3)
    s = SplitState.from_independent(np.zeros(3), np.eye(3))
    buf.record_epoch(s)
    for _ in range(4):
        s = predict_fn(s, Control(0.1, 0.0))
        buf.record_epoch(s, Control(0.1, 0.0))
    assert buf.epochs == [2, 3, 4]
    o = Obs(1, np.zeros(3), np.eye(3), np.zeros((3, 3)))
    with pytest.raises(StaleMeasurement):
        buf.apply_delayed(o, update_fn, predict_fn)
    with pytest.raises(ValueError):
        buf.apply_delayed(Obs(9, np.zeros(3), np.eye(3), np.zeros((3, 3))), update_fn, predict_fn)


def test_nearest_epoch_ties_to_older():
    buf = HistoryBuffer(5)
    s = SplitState.from_independent(np.zeros(3), np.eye(3))
    buf.record_epoch(s)
    buf.record_epoch(predict_fn(s, Control(0.1, 0.0)), Control(0.1, 0.0))
    assert buf._index_for(0.5) == 0
    assert buf._index_for(0.6) == 1


def test_non_contiguous():
    buf = HistoryBuffer(5)
    buf.record_epoch(SplitState.from_independent(np.zeros(3), np.eye(3), epoch=0))
    with pytest.raises(NonContiguousEpoch):
        buf.record_epoch(SplitState.from_independent(np.zeros(3), np.eye(3), epoch=2))


def test_capacity_evicts_oldest():
    buf = HistoryBuffer(2)
    s = SplitState.from_independent(np.zeros(3), np.eye(3))
    buf.record_epoch(s)
    for _ in range(3):
        s = predict_fn(s, Control(0.1, 0.0))
        buf.record_epoch(s, Control(0.1, 0.0))
    assert len(buf) == 2 and buf.epochs == [2, 3]
