import math

import numpy as np
import pytest

from oracles import central_diff
from tagloc.geometry import Pose2, pose_difference
from tagloc.motion_model import Control, evolve, evolve_vec, jacobian_control, jacobian_state


def random_sample(rng):
    p = np.array([*rng.uniform(-10, 10, 2), rng.uniform(-math.pi, math.pi)])
    u = Control(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1.2, 1.2), 0.1)
    return p, u


def test_zero_control_keeps_pose():
    p = Pose2(1.0, 2.0, 0.5)
    for beta in (-1.0, 0.0, 1.0):
        assert evolve(p, Control(0.0, 0.0, beta)) == p


def test_unit_step_forward():
    q = evolve(Pose2(), Control(1.0, 0.0))
    np.testing.assert_allclose(q.as_array(), [1, 0, 0], atol=1e-15)


def test_midpoint_heading_arc():
    q = evolve(Pose2(), Control(1.0, math.pi / 2))
    np.testing.assert_allclose(q.as_array(), [math.cos(math.pi / 4), math.sin(math.pi / 4), math.pi / 2], atol=1e-15)


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": -1.0}, {"beta": math.pi / 2}, {"beta": -2.0}])
def test_control_validation(kw):
    with pytest.raises(ValueError):
        Control(1.0, 0.0, **kw)


def test_state_jacobian_zero_travel_is_identity():
    np.testing.assert_array_equal(jacobian_state(Pose2(1, 2, 0.3), Control(0.0, 0.4)), np.eye(3))


def test_state_jacobian_analytic_point():
    g = jacobian_state(Pose2(), Control(1.0, 0.0))
    assert g[0, 2] == pytest.approx(0.0)
    assert g[1, 2] == pytest.approx(1.0)


def test_control_jacobian_points():
    g = jacobian_control(Pose2(), Control(0.0, 0.0))
    assert g[0, 0] == 1.0 and g[1, 0] == 0.0
    g = jacobian_control(Pose2(3, 1, 2.0), Control(0.0, 0.7))
    assert g[2, 1] == 1.0


def test_jacobians_match_finite_differences(rng):
    for _ in range(200):
        p, u = random_sample(rng)
        base = evolve_vec(p, u)

        def fx(v):
            return pose_difference(evolve_vec(v, u), base)

        def fu(v):
            return pose_difference(evolve_vec(p, Control(v[0], v[1], u.beta, u.dt)), base)

        np.testing.assert_allclose(jacobian_state(p, u), central_diff(fx, p), atol=1e-5)
        np.testing.assert_allclose(
            jacobian_control(p, u), central_diff(fu, [u.delta_d, u.delta_theta]), atol=1e-5
        )


def test_straight_segment_reversible(rng):
    for _ in range(100):
        p = Pose2(*rng.uniform(-10, 10, 2), rng.uniform(-3, 3))
        u = Control(rng.uniform(-2, 2), 0.0, rng.uniform(-1.2, 1.2))
        back = evolve(evolve(p, u), u.negated())
        assert np.all(np.abs(pose_difference(back, p)) < 1e-12)
