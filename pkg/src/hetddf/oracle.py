"""
Centralized benchmark: one graph holding every robot's data.

The oracle sees exactly the factors the robots create (same observation
bundles, same detection gating) but keeps them in a single graph, so its
marginals are the centralized posterior the decentralized system should
reproduce on a tree.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .factor_graph import FactorGraph, FactorIdSource, FactorOrigin, VariableId, landmark, robot_pose, target_state
from .gaussian import CanonicalGaussian
from .models import (
    TargetDynamics,
    dynamics_factor,
    landmark_factor,
    measurement_factor,
    odometry_factor,
    pose_fix_factor,
    pose_prior_factor,
    target_prior_factor,
)
from .scenario import Scenario


def usable_detections(scenario: Scenario, obs) -> list:
    """Target measurements a robot actually uses at this step."""
    cfg = scenario.robot(obs.robot)
    if cfg.detection_steps is not None:
        start, stop = cfg.detection_steps
        if not start <= obs.step < stop:
            return []
    tracked = set(cfg.targets)
    return [m for m in obs.targets if m.target in tracked]


class CentralizedFusion:
    """Monolithic posterior over all robots' poses and maps and all targets.

    ``roll_targets`` eliminates past target states as it goes; this is exact
    for every remaining marginal and keeps the graph small.
    """

    def __init__(self, scenario: Scenario, *, roll_targets: bool = True):
        self.scenario = scenario
        self.roll_targets = roll_targets
        self.graph = FactorGraph("centralized")
        self.ids = FactorIdSource(-2)
        self.dynamics = TargetDynamics.with_noise(scenario.dt, scenario.filter_process_noise)
        self.current_step = -1
        self._tracked = sorted({t for r in scenario.robots for t in r.targets})
        for t in self._tracked:
            cfg = scenario.target(t)
            self.graph.add_variable(target_state(t, 0))
            self.graph.add_factor(target_prior_factor(t, cfg.prior_mean, cfg.prior_cov(), fid=self.ids(FactorOrigin.PRIOR)))

    def step(self, k: int, observations: Mapping[int, object]) -> None:
        """Ingest every robot's bundle for step ``k``."""
        g = self.graph
        if k > 0:
            for t in self._tracked:
                g.add_variable(target_state(t, k))
                u = self.scenario.estimator_inputs(t)
                uk = u[k - 1] if u is not None and k - 1 < len(u) else None
                g.add_factor(dynamics_factor(self.dynamics, t, k - 1, uk, fid=self.ids(FactorOrigin.DYNAMICS)))
                if self.roll_targets:
                    g.eliminate([target_state(t, k - 1)], self.ids(FactorOrigin.MARGINAL))
        for rid in sorted(observations):
            obs = observations[rid]
            cfg = self.scenario.robot(rid)
            pose = robot_pose(rid, k)
            g.add_variable(pose)
            if k == 0:
                g.add_factor(pose_prior_factor(pose, obs.prior, cfg.prior_cov(), fid=self.ids(FactorOrigin.PRIOR)))
            else:
                g.add_factor(
                    odometry_factor(robot_pose(rid, k - 1), pose, obs.odometry, cfg.odometry_cov(), fid=self.ids(FactorOrigin.ODOMETRY))
                )
            if cfg.engine == "landmark":
                for s in obs.landmarks:
                    lm = landmark(rid, s.landmark)
                    if lm not in g:
                        g.add_variable(lm)
                    g.add_factor(landmark_factor(pose, lm, s.y, s.R, fid=self.ids(FactorOrigin.LOCAL_MEASUREMENT)))
            elif obs.pose_fix is not None:
                g.add_factor(pose_fix_factor(pose, obs.pose_fix.z, obs.pose_fix.cov, fid=self.ids(FactorOrigin.LOCAL_MEASUREMENT)))
            for m in usable_detections(self.scenario, obs):
                g.add_factor(measurement_factor(m, pose, target_state(m.target, k), fid=self.ids(FactorOrigin.LOCAL_MEASUREMENT)))
        self.current_step = k

    def marginal(self, variables: Iterable[VariableId]) -> CanonicalGaussian:
        return self.graph.marginal(variables)

    def target_marginal(self, targets: Iterable[int]) -> CanonicalGaussian:
        return self.graph.marginal([target_state(t, self.current_step) for t in sorted(targets)])

    def target_estimates(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        vs = [target_state(t, self.current_step) for t in self._tracked]
        dims, mean, cov = self.graph.moments(vs)
        index = {d: i for i, d in enumerate(dims)}
        out = {}
        for v in vs:
            idx = [index[d] for d in v.dims()]
            out[v.owner] = (mean[idx], cov[np.ix_(idx, idx)])
        return out
