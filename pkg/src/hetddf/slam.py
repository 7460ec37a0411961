"""
Local SLAM engines behind a common interface.

The tracking module only ever asks two things of an engine: the joint
marginal over a set of pose timesteps (the "blue" factor), and to take a
pose factor back (the "orange" factor). Two engines implement it so that
robots can run different algorithms:

* :class:`LandmarkSlamEngine` keeps poses and a sparse landmark map.
* :class:`OdometrySlamEngine` dead-reckons and takes scheduled absolute
  pose fixes (a stand-in for loop closures).

Both are linear-Gaussian: odometry is composed in world coordinates with the
heading treated as a linear coordinate.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import GraphError, StepError
from .factor_graph import (
    Factor,
    FactorGraph,
    FactorId,
    FactorIdSource,
    FactorOrigin,
    VariableId,
    landmark,
    robot_pose,
)
from .models import landmark_factor, odometry_factor, pose_fix_factor, pose_prior_factor


@dataclass(frozen=True)
class LandmarkSighting:
    landmark: int
    y: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class PoseFix:
    z: np.ndarray
    cov: np.ndarray


class SlamEngine(ABC):
    """Shared machinery: pose chain, marginal requests, pose-factor intake."""

    kind = "abstract"

    def __init__(self, robot: int, prior_cov, odometry_cov, ids: FactorIdSource | None = None):
        self.robot = robot
        self.prior_cov = np.asarray(prior_cov, dtype=float)
        self.odometry_cov = np.asarray(odometry_cov, dtype=float)
        self.ids = ids if ids is not None else FactorIdSource(robot)
        self.graph = FactorGraph(f"slam[{robot}]")
        self.current_step = -1
        self.native_factors: list[Factor] = []
        self._tracking_acc: FactorId | None = None

    def _add_native(self, factor: Factor) -> None:
        self.graph.add_factor(factor)
        self.native_factors.append(factor)

    def pose(self, k: int) -> VariableId:
        return robot_pose(self.robot, k)

    def advance(self, odometry, observations, k: int) -> None:
        """Add pose ``k``: prior at ``k = 0``, odometry factor afterwards.

        ``observations`` carries the step's sensor data; at ``k = 0`` it must
        provide ``prior`` (initial pose estimate).
        """
        if k != self.current_step + 1:
            raise StepError(f"slam[{self.robot}]: advance to {k} from {self.current_step}")
        pose = self.pose(k)
        if k == 0:
            prior = getattr(observations, "prior", None)
            if prior is None:
                raise StepError(f"slam[{self.robot}]: no initial pose estimate at step 0")
            mean = prior[0] if isinstance(prior, tuple) else prior
            factor = pose_prior_factor(pose, mean, self.prior_cov, fid=self.ids(FactorOrigin.PRIOR))
        else:
            if odometry is None:
                raise StepError(f"slam[{self.robot}]: missing odometry at step {k}")
            factor = odometry_factor(self.pose(k - 1), pose, odometry, self.odometry_cov, fid=self.ids(FactorOrigin.ODOMETRY))
        self.graph.add_variable(pose)
        self._add_native(factor)
        self.current_step = k
        self._observe(k, observations)

    @abstractmethod
    def _observe(self, k: int, observations) -> None:
        """Engine-specific sensor intake at step ``k``."""

    def pose_marginal(self, timesteps: Iterable[int]) -> Factor:
        """Joint marginal over the poses at ``timesteps`` as one factor."""
        ks = sorted(set(timesteps))
        for k in ks:
            if not 0 <= k <= self.current_step:
                raise GraphError(f"slam[{self.robot}]: no pose at step {k}")
        pot = self.graph.marginal([self.pose(k) for k in ks])
        return Factor(self.ids(FactorOrigin.POSE_FROM_SLAM), pot, self.graph.provenance())

    def integrate_pose_factor(self, factor: Factor) -> None:
        """Take a pose factor from the tracking module into the SLAM graph."""
        if factor.origin is not FactorOrigin.POSE_FROM_TRACKING:
            raise GraphError(f"expected a pose_from_tracking factor, got {factor.origin.value}")
        for v in factor.scope:
            if v.kind != "pose" or v.owner != self.robot or v not in self.graph:
                raise GraphError(f"pose factor touches {v}, not one of this robot's poses")
        if self._tracking_acc is None:
            self.graph.add_factor(factor)
            self._tracking_acc = factor.id
        else:
            self.graph.absorb_into(self._tracking_acc, factor)

    def pose_moments(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        _, mean, cov = self.graph.moments([self.pose(k)])
        return mean, cov

    def map_variables(self) -> list[VariableId]:
        return self.graph.variables_of_kind("landmark")


class LandmarkSlamEngine(SlamEngine):
    """Pose chain plus a landmark map built from relative sightings."""

    kind = "landmark"

    def _observe(self, k: int, observations) -> None:
        for s in getattr(observations, "landmarks", ()) or ():
            lm = landmark(self.robot, s.landmark)
            if lm not in self.graph:
                self.graph.add_variable(lm)
            self._add_native(landmark_factor(self.pose(k), lm, s.y, s.R, fid=self.ids(FactorOrigin.LOCAL_MEASUREMENT)))


class OdometrySlamEngine(SlamEngine):
    """Dead reckoning with scheduled absolute pose fixes."""

    kind = "odometry"

    def _observe(self, k: int, observations) -> None:
        fix = getattr(observations, "pose_fix", None)
        if fix is not None:
            self._add_native(pose_fix_factor(self.pose(k), fix.z, fix.cov, fid=self.ids(FactorOrigin.LOCAL_MEASUREMENT)))


ENGINES = {cls.kind: cls for cls in (LandmarkSlamEngine, OdometrySlamEngine)}


def make_engine(kind: str, robot: int, prior_cov, odometry_cov, ids: FactorIdSource | None = None) -> SlamEngine:
    try:
        cls = ENGINES[kind]
    except KeyError:
        raise GraphError(f"unknown SLAM engine {kind!r}; choose from {sorted(ENGINES)}") from None
    return cls(robot, prior_cov, odometry_cov, ids)

