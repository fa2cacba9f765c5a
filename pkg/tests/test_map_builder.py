import logging
import math

import numpy as np
import pytest

from tagloc.geometry import Pose2, circular_mean, compose, pose_difference
from tagloc.map_builder import MappingSession, Observation, build_graph, optimize
from tagloc.sim import random_mapping_session

I3 = np.eye(3)


def test_single_observation_initialisation():
    a = Pose2(1.0, 2.0, 0.5)
    rel = Pose2(3.0, -1.0, 1.0)
    g = build_graph(MappingSession({0: a}, [Observation(0, 4, rel, I3)]))
    np.testing.assert_array_equal(g.values[4], compose(a, rel).as_array())
    m = optimize(g)
    assert np.all(np.abs(pose_difference(m[4], compose(a, rel))) < 1e-15)


def test_disjoint_tags_independent():
    anchors = {0: Pose2(0, 0, 0), 1: Pose2(5, 0, 1)}
    obs = [
        Observation(0, 1, Pose2(1, 0, 0), I3),
        Observation(0, 1, Pose2(1.2, 0, 0), I3),
        Observation(1, 2, Pose2(2, 1, 0), I3),
        Observation(1, 2, Pose2(2, 1.4, 0), I3),
    ]
    joint = optimize(build_graph(MappingSession(anchors, obs)))
    one = optimize(build_graph(MappingSession(anchors, obs[:2])))
    two = optimize(build_graph(MappingSession(anchors, obs[2:])))
    np.testing.assert_allclose(joint[1].as_array(), one[1].as_array(), atol=1e-12)
    np.testing.assert_allclose(joint[2].as_array(), two[2].as_array(), atol=1e-12)


def test_conflicting_pair_gives_mean():
    a = Pose2(0, 0, 0)
    obs = [Observation(0, 0, Pose2(1, 0, 3.0), I3), Observation(0, 0, Pose2(2, 1, -3.0), I3)]
    m = optimize(build_graph(MappingSession({0: a}, obs)))
    assert m[0].x == pytest.approx(1.5) and m[0].y == pytest.approx(0.5)
    assert abs(pose_difference(Pose2(0, 0, m[0].theta), Pose2(0, 0, circular_mean([3.0, -3.0])))[2]) < 1e-9


def test_zero_noise_exact():
    s, truth = random_mapping_session(sigma_xy=0.0, sigma_theta=0.0, seed=3)
    m = optimize(build_graph(s))
    assert m.source["cost"] < 1e-16
    for t in truth:
        assert np.all(np.abs(pose_difference(m[t], truth[t])) < 1e-9)


def test_initialisation_within_noise_bound():
    s, truth = random_mapping_session(n_tags=10, obs_per_tag=5, seed=11)
    g = build_graph(s)
    for t in truth:
        # first observation only: position error bounded by rotated xy noise
        err = math.hypot(g.values[t][0] - truth[t].x, g.values[t][1] - truth[t].y)
        assert err < 5 * 0.02 * math.sqrt(2)


def test_cost_non_increasing():
    s, _ = random_mapping_session(seed=5)
    m = optimize(build_graph(s))
    h = m.source["cost_history"]
    assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))
    assert m.source["converged"]
    assert m.source["n_observations"] == 50


def test_gauge_independence():
    s, truth = random_mapping_session(seed=8)
    t = Pose2(3.0, -7.0, 2.1)
    moved = MappingSession({k: compose(t, p) for k, p in s.robot_poses.items()}, s.observations)
    a = optimize(build_graph(s))
    b = optimize(build_graph(moved))
    for k in truth:
        assert np.all(np.abs(pose_difference(b[k], compose(t, a[k]))) < 1e-9)


def test_non_convergence_flag():
    s, _ = random_mapping_session(seed=2)
    g = build_graph(s)
    # perturb the start far away so one iteration cannot finish
    for k in g.values:
        g.values[k] = g.values[k] + np.array([3.0, -2.0, 1.0])
    m = optimize(g, max_iters=1)
    assert m.source["converged"] is False
    assert m.source["cost"] <= m.source["initial_cost"]


def test_excluded_tag_warning(caplog):
    s, _ = random_mapping_session(n_tags=2, seed=1)
    with caplog.at_level(logging.WARNING):
        g = build_graph(s, tag_ids=[0, 1, 42])
    assert g.excluded == [42]
    assert "42" in caplog.text


def test_missing_anchor_rejected():
    with pytest.raises(ValueError):
        build_graph(MappingSession({}, [Observation(3, 0, Pose2(), I3)]))
