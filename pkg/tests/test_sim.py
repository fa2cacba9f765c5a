import dataclasses
import math

import numpy as np
import pytest

from tagloc.config import load_raw, scenario_with
from tagloc.geometry import Pose2, compose, pose_difference
from tagloc.localizer import METHODS
from tagloc.map_builder import TagMap
from tagloc.metrics import position_errors
from tagloc.motion_model import evolve
from tagloc.sim import (
    DelayWindow,
    UnreachableWaypoint,
    generate_truth,
    run_method,
    synthesize_stream,
    view_geometry,
)

RAW = load_raw("path1")

QUIET = dict(
    sensor__noise={"base_sigma_xy": 0.0, "base_sigma_theta": 0.0},
    sensor__range_sigma=0.0,
    sensor__outlier_rate=0.0,
    odometry={"sigma_d": 0.0, "sigma_theta": 0.0},
)


def scenario(**kw):
    return scenario_with(RAW, **kw)


class TestTruth:
    def test_collinear_is_straight(self):
        s = scenario(waypoints=[[0, 0, 0], [5, 0, 0]], motion={"loop": False}, duration_epochs=40)
        poses, controls = generate_truth(s)
        assert all(u.delta_theta == 0.0 for u in controls)
        assert all(abs(p.y) < 1e-15 and p.theta == 0.0 for p in poses)

    def test_square_loop_closes(self):
        s = scenario(
            waypoints=[[0, 0, 0], [4, 0, math.pi / 2], [4, 4, math.pi], [0, 4, -math.pi / 2]],
            duration_epochs=1000,
        )
        poses, controls = generate_truth(s)
        # replay controls and find the first return to the start
        p = s.waypoints[0]
        for k, u in enumerate(controls):
            p = evolve(p, u)
            assert np.all(np.abs(pose_difference(p, poses[k + 1])) < 1e-12)
        lap = [k for k, q in enumerate(poses[1:], 1) if np.all(np.abs(pose_difference(q, poses[0])) < 1e-9)]
        assert lap, "loop never returned to the start"

    def test_single_waypoint(self):
        with pytest.raises(ValueError):
            generate_truth(scenario(waypoints=[[0, 0, 0]]))

    def test_unreachable(self):
        with pytest.raises(UnreachableWaypoint):
            generate_truth(scenario(waypoints=[[0, 0, 0], [0, 0, 1.0]], motion={"yaw_rate": 0.0}))

    def test_length(self):
        poses, controls = generate_truth(scenario(duration_epochs=57))
        assert len(poses) == 57 and len(controls) == 56


class TestStream:
    def test_zero_noise_reproduces_truth(self):
        s = scenario(**QUIET, sensor__partial_probability=0.0)
        st = synthesize_stream(s)
        assert st.detections
        for d in st.detections:
            m = d.measurement
            assert d.arrival == m.stamp
            rel, _, _ = view_geometry(st.truth[m.stamp], s.tag_layout[m.tag_id], s.extrinsics)
            assert np.all(np.abs(pose_difference(m.payload.pose_in_camera, rel)) < 1e-12)
        for u, v in zip(st.odometry, st.true_controls):
            assert u == v

    def test_ar1_autocorrelation(self):
        s = scenario(duration_epochs=2500, sensor__ar1_rho=0.9, sensor__partial_probability=0.0, sensor__outlier_rate=0.0)
        st = synthesize_stream(s)
        series: dict[int, dict[int, float]] = {}
        for d in st.detections:
            m = d.measurement
            tag = s.tag_layout[m.tag_id]
            rel, dist, alpha = view_geometry(st.truth[m.stamp], tag, s.extrinsics)
            sxy, _ = s.sensor.noise.sigma(dist, alpha)
            series.setdefault(m.tag_id, {})[m.stamp] = (m.payload.pose_in_camera.x - rel.x) / sxy
        a, b = [], []
        for per_tag in series.values():
            for k, v in per_tag.items():
                if k + 1 in per_tag:
                    a.append(v)
                    b.append(per_tag[k + 1])
        assert len(a) >= 5000
        r = np.corrcoef(a, b)[0, 1]
        assert 0.85 <= r <= 0.95

    def test_outlier_fraction(self):
        s = scenario(duration_epochs=2500, sensor__outlier_rate=0.05)
        st = synthesize_stream(s)
        assert len(st.detections) >= 5000
        frac = np.mean([d.outlier for d in st.detections])
        assert abs(frac - 0.05) <= 0.01

    def test_delay_window(self):
        s = dataclasses.replace(scenario(), events=(DelayWindow(10, 20, 4),))
        st = synthesize_stream(s)
        for d in st.detections:
            k = d.measurement.stamp
            assert d.arrival - k == (4 if 10 <= k < 20 else 0)

    def test_deterministic(self):
        a = synthesize_stream(scenario(seed=4))
        b = synthesize_stream(scenario(seed=4))
        assert a.detections == b.detections and a.odometry == b.odometry
        c = synthesize_stream(scenario(seed=5))
        assert a.detections != c.detections

    def test_visibility_rotation_invariant(self):
        s = scenario(**QUIET)
        t = Pose2(10.0, -4.0, 0.9)
        moved = dataclasses.replace(
            s,
            waypoints=[compose(t, w) for w in s.waypoints],
            tag_layout=TagMap({k: compose(t, p) for k, p in s.tag_layout.entries.items()}),
        )
        a = {(d.measurement.stamp, d.measurement.tag_id) for d in synthesize_stream(s).detections}
        b = {(d.measurement.stamp, d.measurement.tag_id) for d in synthesize_stream(moved).detections}
        assert a == b


class TestRunMethod:
    def test_zero_noise_every_method_exact(self):
        s = scenario(**QUIET, duration_epochs=120)
        st = synthesize_stream(s)
        for m in METHODS:
            r = run_method(m, st, s)
            err = position_errors(r.estimates, r.truth)
            assert np.nanmax(err) < 1e-9, m

    def test_ekf_equals_scif_without_dependence(self):
        s = scenario(sensor__ar1_rho=0.0, filter__dependent_share=0.0, duration_epochs=150)
        st = synthesize_stream(s)
        a = run_method("EKF-Full", st, s)
        b = run_method("SCIF-Full", st, s)
        assert np.nanmax(np.abs(b.p_dep)) < 1e-12
        np.testing.assert_allclose(a.estimates, b.estimates, atol=1e-9)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-9)

    def test_no_delay_bp_is_identity(self):
        s = scenario(duration_epochs=150)
        st = synthesize_stream(s)
        a = run_method("SCIF-nonBP", st, s)
        b = run_method("SCIF-Full", st, s)
        np.testing.assert_allclose(a.estimates, b.estimates, atol=1e-12, rtol=0)

    def test_record_has_one_entry_per_epoch(self):
        s = scenario(duration_epochs=80)
        r = run_method("SCIF-Full", synthesize_stream(s), s)
        assert len(r.truth) == len(r.estimates) == len(r.decisions) == len(r.timing) == 80
