import json

import numpy as np
import pytest

from hetddf.errors import ConfigError
from hetddf.models import TargetDynamics
from hetddf.scenario import PRESETS, TopologyConfig, default_scenario, load_scenario
from hetddf.world import World, rng_for, Stream, waypoint_path


def test_waypoint_path_speed_and_heading():
    path = waypoint_path([[0.0, 0.0], [1.0, 0.0]], speed=1.0, dt=0.1, steps=15)
    assert path.shape == (16, 3)
    np.testing.assert_allclose(path[5, :2], [0.5, 0.0], atol=1e-12)
    # stops at the last waypoint
    np.testing.assert_allclose(path[-1, :2], [1.0, 0.0], atol=1e-12)
    assert path[3, 2] == pytest.approx(0.0)


def test_world_is_deterministic_per_seed():
    sc = default_scenario(4, horizon=10)
    a, b = World.create(sc), World.create(sc)
    np.testing.assert_array_equal(a.target_truth[2], b.target_truth[2])
    oa, ob = a.observe(0, 0), b.observe(0, 0)
    np.testing.assert_array_equal(oa.prior, ob.prior)
    c = World.create(sc, seed=5)
    assert not np.array_equal(a.target_truth[2], c.target_truth[2])


def test_streams_are_independent():
    # adding a robot must not change another robot's noise
    x = rng_for(1, Stream.ODOMETRY, 0).normal(size=3)
    y = rng_for(1, Stream.ODOMETRY, 1).normal(size=3)
    z = rng_for(1, Stream.ODOMETRY, 0).normal(size=3)
    assert not np.allclose(x, y)
    np.testing.assert_array_equal(x, z)


def test_target_process_noise_statistics():
    # sample covariance of w = t[k+1] - F t[k] matches Q
    sc = default_scenario(0, horizon=2000)
    w = World.create(sc)
    dyn = TargetDynamics.with_noise(sc.dt, sc.process_noise)
    traj = w.target_truth[0]
    res = traj[1:] - traj[:-1] @ dyn.F.T
    np.testing.assert_allclose(np.cov(res.T), dyn.Q, atol=0.015)


def test_observation_contents():
    sc = default_scenario(0, horizon=5)
    w = World.create(sc)
    o0 = w.observe(0, 0)
    assert o0.prior is not None and o0.odometry is None
    assert {m.target for m in o0.targets} <= {t.id for t in sc.targets}
    assert all(np.hypot(*(w.robot_pose(0, 0)[:2] - w.landmarks[s.landmark])) <= 6.0 for s in o0.landmarks)
    o1 = w.observe(0, 1)
    assert o1.prior is None and o1.odometry.shape == (3,)


def test_scenario_json_round_trip(tmp_path):
    sc = default_scenario(3)
    path = tmp_path / "s.json"
    path.write_text(sc.to_json())
    back = load_scenario(path)
    assert back.to_dict() == sc.to_dict()
    assert json.loads(sc.to_json())["schema"] == "hetddf.scenario/1"


@pytest.mark.parametrize(
    "patch",
    [
        lambda d: d["robots"][0].update(engine="lidar"),
        lambda d: d["robots"][0].update(targets=[99]),
        lambda d: d["topology"].update(edges=[[0, 0]]),
        lambda d: d["topology"].update(period=0),
        lambda d: d.update(horizon=-1),
        lambda d: d["targets"][0].update(prior_std=[1, 1, 1]),
    ],
)
def test_invalid_configs_rejected(patch):
    data = default_scenario().to_dict()
    patch(data)
    with pytest.raises(ConfigError):
        from hetddf.scenario import Scenario

        Scenario.from_dict(data).validate()


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_presets_validate():
    for make in PRESETS.values():
        make(0).validate()
    assert TopologyConfig(edges=[[0, 1]], periods={"0-1": 3}).period_of(1, 0) == 3
