import json

import numpy as np
import pytest

from hetddf.errors import GraphError
from hetddf.factor_graph import (
    Factor,
    FactorGraph,
    FactorIdSource,
    FactorOrigin,
    VariablePartition,
    dims_of,
    landmark,
    robot_pose,
    target_state,
)
from hetddf.gaussian import CanonicalGaussian, marginalize, multiply_all, parameter_difference
from hetddf.models import TargetDynamics, dynamics_factor, odometry_factor, pose_prior_factor, target_prior_factor

IDS = FactorIdSource(0)


def chain_graph(n=5):
    """Pose chain with a prior and odometry; covariance known in closed form."""
    g = FactorGraph("chain")
    poses = [robot_pose(0, k) for k in range(n)]
    for p in poses:
        g.add_variable(p)
    g.add_factor(pose_prior_factor(poses[0], np.zeros(3), np.eye(3), fid=IDS(FactorOrigin.PRIOR)))
    for a, b in zip(poses, poses[1:]):
        g.add_factor(odometry_factor(a, b, np.ones(3), 0.5 * np.eye(3), fid=IDS(FactorOrigin.ODOMETRY)))
    return g, poses


def test_chain_marginal_matches_random_walk():
    # pose k = prior + k odometry steps: mean k, variance 1 + 0.5 k
    g, poses = chain_graph(6)
    for k in (0, 3, 5):
        mean, cov = g.marginal([poses[k]]).to_moments()
        np.testing.assert_allclose(mean, k * np.ones(3), atol=1e-10)
        np.testing.assert_allclose(cov, (1 + 0.5 * k) * np.eye(3), atol=1e-10)


def test_joint_equals_product_of_factors():
    g, _ = chain_graph(4)
    prod = multiply_all(f.potential for f in g.factors)
    assert parameter_difference(g.joint(), prod) < 1e-12


def test_moments_agree_with_marginal():
    g, poses = chain_graph(5)
    dims, mean, cov = g.moments([poses[4], poses[1]])
    m = g.marginal([poses[1], poses[4]])
    mm, mc = m.to_moments()
    assert dims == m.dims
    np.testing.assert_allclose(mean, mm, atol=1e-10)
    np.testing.assert_allclose(cov, mc, atol=1e-10)


def test_eliminate_preserves_remaining_marginals():
    g, poses = chain_graph(6)
    before = g.marginal(poses[3:])
    new = g.eliminate(poses[:3], IDS(FactorOrigin.MARGINAL))
    assert new.origin is FactorOrigin.MARGINAL
    assert poses[0] not in g
    assert parameter_difference(g.marginal(poses[3:]), before) < 1e-10
    g.rebuild()
    assert parameter_difference(g.marginal(poses[3:]), before) < 1e-10


def test_eliminate_keeps_provenance():
    g, poses = chain_graph(3)
    natives = g.provenance()
    g.eliminate([poses[0]], IDS(FactorOrigin.MARGINAL))
    assert g.provenance() == natives


def test_absorb_into_matches_separate_factor():
    g1, poses = chain_graph(4)
    g2, _ = chain_graph(4)
    acc = Factor(IDS(FactorOrigin.POSE_FROM_SLAM), CanonicalGaussian.flat(poses[0].dims()))
    g1.add_factor(acc)
    extra = [
        Factor(IDS(FactorOrigin.POSE_FROM_SLAM), CanonicalGaussian.from_moments(np.full(3, k), np.eye(3), poses[k].dims()))
        for k in (1, 3)
    ]
    for f in extra:
        g1.absorb_into(acc.id, f)
        g2.add_factor(f)
    assert parameter_difference(g1.joint(), g2.joint()) < 1e-12
    merged = g1.factor(acc.id)
    assert set(merged.merged) == {f.id for f in extra}
    assert set(merged.potential.dims) == set(dims_of([poses[0], poses[1], poses[3]]))
    g1.rebuild()
    assert parameter_difference(g1.joint(), g2.joint()) < 1e-12


def test_remove_factor_restores_joint():
    g, poses = chain_graph(3)
    before = g.joint()
    f = pose_prior_factor(poses[2], np.zeros(3), np.eye(3), fid=IDS(FactorOrigin.PRIOR))
    g.add_factor(f)
    g.remove_factor(f.id)
    assert parameter_difference(g.joint(), before) < 1e-14


def test_errors():
    g, poses = chain_graph(2)
    with pytest.raises(GraphError):
        g.add_variable(poses[0])
    with pytest.raises(GraphError):
        g.add_factor(pose_prior_factor(robot_pose(0, 9), np.zeros(3), np.eye(3), fid=IDS(FactorOrigin.PRIOR)))
    f = g.factors[0]
    with pytest.raises(GraphError):
        g.add_factor(f)
    with pytest.raises(GraphError):
        g.marginal([robot_pose(0, 9)])


def test_dump_round_trip(tmp_path):
    g, _ = chain_graph(3)
    path = tmp_path / "g.json"
    g.dump_json(path)
    data = json.loads(path.read_text())
    assert data["schema"] == "hetddf.graph/1"
    assert len(data["factors"]) == len(g.factors)
    assert len(data["variables"]) == 3


def test_copy_is_independent():
    g, poses = chain_graph(3)
    c = g.copy()
    g.add_factor(pose_prior_factor(poses[2], np.zeros(3), np.eye(3), fid=IDS(FactorOrigin.PRIOR)))
    assert len(c.factors) == len(g.factors) - 1


def test_variable_kinds_and_partition():
    assert len(landmark(0, 1).dims()) == 2
    assert len(target_state(3, 0).dims()) == 4
    part = VariablePartition(0, frozenset({1, 2, 3}), {1: frozenset({2}), 2: frozenset({2, 3})})
    assert part.common_targets == {2, 3}
    assert part.local_targets == {1}
    assert part.non_mutual_targets(1) == {1, 3}
    vs = [target_state(2, 0), target_state(1, 0), robot_pose(0, 0)]
    assert part.common_variables(1, vs) == [target_state(2, 0)]
    with pytest.raises(GraphError):
        VariablePartition(0, frozenset({1}), {1: frozenset({5})})


def test_target_chain_elimination_matches_kalman_prediction():
    dyn = TargetDynamics.with_noise(0.1)
    g = FactorGraph()
    m0, P0 = np.array([0.0, 1.0, 0.0, -1.0]), np.eye(4)
    g.add_variable(target_state(0, 0))
    g.add_factor(target_prior_factor(0, m0, P0, fid=IDS(FactorOrigin.PRIOR)))
    m, P = m0, P0
    for k in range(1, 4):
        g.add_variable(target_state(0, k))
        u = np.array([0.2, -0.1])
        g.add_factor(dynamics_factor(dyn, 0, k - 1, u, fid=IDS(FactorOrigin.DYNAMICS)))
        g.eliminate([target_state(0, k - 1)], IDS(FactorOrigin.MARGINAL))
        m, P = dyn.predict(m, P, u)
    gm, gc = g.marginal([target_state(0, 3)]).to_moments()
    np.testing.assert_allclose(gm, m, atol=1e-10)
    np.testing.assert_allclose(gc, P, atol=1e-10)


def test_nested_marginals():
    g, poses = chain_graph(5)
    both, inner = g.nested_marginals(poses[:2], poses[4:])
    assert parameter_difference(both, g.marginal(poses[:2] + poses[4:])) < 1e-12
    assert parameter_difference(inner, marginalize(both, dims_of(poses[4:]))) < 1e-12
    with pytest.raises(GraphError):
        g.nested_marginals(poses[:2], poses[1:2])
