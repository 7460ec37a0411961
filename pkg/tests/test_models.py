import numpy as np
import pytest

from hetddf.errors import DimensionError, NotPositiveDefiniteError
from hetddf.factor_graph import position_dims, robot_pose, target_state
from hetddf.gaussian import DimKey, condition
from hetddf.models import (
    RelativePositionMeasurement,
    TargetDynamics,
    dynamics_factor,
    linear_gaussian_potential,
    measurement_factor,
)


def test_transition_matrices_for_dt():
    dyn = TargetDynamics.with_noise(0.5)
    np.testing.assert_array_equal(dyn.F, [[1, 0.5, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0.5], [0, 0, 0, 1]])
    np.testing.assert_array_equal(dyn.G, [[0.125, 0], [0.5, 0], [0, 0.125], [0, 0.5]])
    np.testing.assert_array_equal(dyn.Q, 0.08 * np.eye(4))


def test_dynamics_rejects_bad_noise():
    with pytest.raises(NotPositiveDefiniteError):
        TargetDynamics(0.1, -np.eye(4))
    with pytest.raises(DimensionError):
        TargetDynamics(0.1, np.eye(3))


def test_dynamics_factor_conditional_is_transition():
    # conditioning the pairwise factor on t_k gives N(F t_k + G u, Q)
    dyn = TargetDynamics.with_noise(0.2, 0.3)
    u = np.array([1.0, -2.0])
    f = dynamics_factor(dyn, 7, 4, u)
    assert f.scope == (target_state(7, 4), target_state(7, 5))
    x = np.array([1.0, 0.5, -2.0, 0.1])
    c = condition(f.potential, target_state(7, 4).dims(), x)
    mean, cov = c.to_moments()
    np.testing.assert_allclose(mean, dyn.F @ x + dyn.G @ u, atol=1e-12)
    np.testing.assert_allclose(cov, dyn.Q, atol=1e-12)


def test_measurement_factor_sign_convention():
    # y = robot position minus target position
    R = np.diag([0.1, 0.2])
    m = RelativePositionMeasurement(0, 3, 2, [1.0, -1.0], R)
    f = measurement_factor(m, robot_pose(0, 2))
    assert f.scope == (robot_pose(0, 2), target_state(3, 2))
    pose = np.array([4.0, 5.0, 0.3])
    c = condition(f.potential, position_dims(robot_pose(0, 2)), pose[:2])
    assert c.dims == position_dims(target_state(3, 2))
    mean, cov = c.to_moments()
    np.testing.assert_allclose(mean, pose[:2] - m.y, atol=1e-12)
    np.testing.assert_allclose(cov, R, atol=1e-12)


def test_measurement_validation():
    with pytest.raises(DimensionError):
        RelativePositionMeasurement(0, 1, 0, [0, 0], np.eye(3))
    m = RelativePositionMeasurement(0, 1, 0, [0, 0], np.eye(2))
    with pytest.raises(DimensionError):
        measurement_factor(m, target_state(1, 0), target_state(1, 0))


def test_linear_gaussian_potential_shape_check():
    with pytest.raises(DimensionError):
        linear_gaussian_potential([DimKey("a", 0)], np.eye(2), np.zeros(2), np.eye(2))
