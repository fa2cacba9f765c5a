import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_diff, wrap
from tagloc.geometry import (
    IDENTITY,
    Pose2,
    between,
    circular_mean,
    compose,
    compose_jacobians,
    detection_jacobian,
    inverse,
    pose_difference,
    robot_pose_from_tag_detection,
    wrap_angle,
    wrap_angles,
)

angles = st.floats(-1e3, 1e3, allow_nan=False)
coords = st.floats(-50, 50, allow_nan=False)
poses = st.builds(Pose2, coords, coords, st.floats(-4, 4))


def close(a: Pose2, b: Pose2, tol=1e-12):
    d = pose_difference(a, b)
    return np.all(np.abs(d) <= tol)


class TestWrapAngle:
    def test_zero(self):
        assert wrap_angle(0.0) == 0.0

    def test_three_pi(self):
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-15)

    def test_minus_pi_maps_to_pi(self):
        assert wrap_angle(-math.pi) == math.pi

    def test_pi_stays(self):
        assert wrap_angle(math.pi) == math.pi

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(ValueError):
            wrap_angle(bad)

    @given(angles)
    def test_range_and_period(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        k = (a - w) / (2 * math.pi)
        assert abs(k - round(k)) < 1e-9

    @given(angles)
    def test_idempotent(self, a):
        w = wrap_angle(a)
        assert wrap_angle(w) == w

    @given(angles)
    def test_matches_atan2_oracle(self, a):
        assert abs(wrap_angle(a) - wrap(a)) < 1e-9 or abs(abs(wrap_angle(a)) - math.pi) < 1e-9

    def test_vectorised(self):
        a = np.array([0.0, 3 * math.pi, -math.pi, 7.0])
        np.testing.assert_allclose(wrap_angles(a), [wrap_angle(v) for v in a])


class TestCompose:
    def test_identity_left(self):
        p = Pose2(1.0, -2.0, 0.3)
        assert close(compose(IDENTITY, p), p)

    def test_translation(self):
        assert close(compose(Pose2(1, 0, 0), Pose2(1, 0, 0)), Pose2(2, 0, 0))

    def test_quarter_turn(self):
        assert close(compose(Pose2(0, 0, math.pi / 2), Pose2(1, 0, 0)), Pose2(0, 1, math.pi / 2), 1e-15)

    def test_constructor_wraps(self):
        assert Pose2(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)

    @given(poses, poses, poses)
    def test_associative(self, a, b, c):
        assert close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9)


class TestInverse:
    def test_identity(self):
        assert close(inverse(IDENTITY), IDENTITY)

    def test_translation(self):
        assert close(inverse(Pose2(1, 0, 0)), Pose2(-1, 0, 0))

    def test_rotation(self):
        assert close(inverse(Pose2(0, 0, math.pi / 2)), Pose2(0, 0, -math.pi / 2))

    @given(poses)
    def test_two_sided(self, a):
        assert close(compose(a, inverse(a)), IDENTITY, 1e-12 * (1 + abs(a.x) + abs(a.y)))
        assert close(compose(inverse(a), a), IDENTITY, 1e-12 * (1 + abs(a.x) + abs(a.y)))

    @given(poses, poses)
    def test_between_roundtrip(self, a, b):
        assert close(compose(a, between(a, b)), b, 1e-9)


class TestTagDetection:
    def test_identity_chain(self):
        assert close(robot_pose_from_tag_detection(IDENTITY, IDENTITY, IDENTITY), IDENTITY)

    def test_collinear(self):
        r = robot_pose_from_tag_detection(Pose2(5, 0, 0), Pose2(2, 0, 0), IDENTITY)
        assert close(r, Pose2(3, 0, 0))

    @given(poses, poses, poses)
    def test_forward_simulation_roundtrip(self, robot, tag, extr):
        # forward: what the camera would see, then recover the robot
        seen = between(compose(robot, extr), tag)
        rec = robot_pose_from_tag_detection(tag, seen, extr)
        assert close(rec, robot, 1e-9)

    def test_detection_jacobian_fd(self, rng):
        for _ in range(50):
            tag = Pose2(*rng.uniform(-5, 5, 2), rng.uniform(-3, 3))
            m = Pose2(*rng.uniform(0.5, 4, 2), rng.uniform(-3, 3))
            e = Pose2(*rng.uniform(-0.5, 0.5, 2), rng.uniform(-3, 3))
            base = robot_pose_from_tag_detection(tag, m, e)

            def f(v):
                return pose_difference(robot_pose_from_tag_detection(tag, Pose2.from_array(v), e), base)

            np.testing.assert_allclose(detection_jacobian(tag, m, e), central_diff(f, m.as_array()), atol=1e-6)

    def test_compose_jacobians_fd(self, rng):
        for _ in range(50):
            a = Pose2(*rng.normal(size=3))
            b = Pose2(*rng.normal(size=3))
            ja, jb = compose_jacobians(a, b)
            base = compose(a, b)
            fa = central_diff(lambda v: pose_difference(compose(Pose2.from_array(v), b), base), a.as_array())
            fb = central_diff(lambda v: pose_difference(compose(a, Pose2.from_array(v)), base), b.as_array())
            np.testing.assert_allclose(ja, fa, atol=1e-6)
            np.testing.assert_allclose(jb, fb, atol=1e-6)


def test_pose_difference_wraps():
    d = pose_difference(Pose2(0, 0, math.pi - 0.1), Pose2(0, 0, -math.pi + 0.1))
    assert d[2] == pytest.approx(-0.2)


def test_circular_mean_across_seam():
    assert abs(wrap_angle(circular_mean([math.pi - 0.1, -math.pi + 0.1]) - math.pi)) < 1e-12
