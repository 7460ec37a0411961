"""
Ground-truth world: scripted robot paths, stochastic targets, landmarks.

Every random quantity comes from its own seeded stream (keyed by purpose and
robot/target id), so changing one robot's sensor does not reshuffle another
robot's noise, and equal seeds give equal measurement streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .models import RelativePositionMeasurement, TargetDynamics
from .scenario import RobotConfig, Scenario
from .slam import LandmarkSighting, PoseFix


class Stream(IntEnum):
    TARGET_INIT = 1
    TARGET_PROCESS = 2
    ROBOT_PRIOR = 3
    ODOMETRY = 4
    LANDMARK = 5
    TARGET_MEAS = 6
    POSE_FIX = 7


def rng_for(seed: int, stream: Stream, owner: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream), int(owner)])


def waypoint_path(waypoints, speed: float, dt: float, steps: int) -> np.ndarray:
    """Poses ``(steps + 1, 3)`` moving at ``speed`` along the polyline.

    The robot stops at the last waypoint. Heading follows the current segment
    and is unwrapped so it can be treated as a linear coordinate.
    """
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    s = np.minimum(speed * dt * np.arange(steps + 1), cum[-1])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = np.divide(s - cum[i], seg_len[i], out=np.zeros_like(s), where=seg_len[i] > 0)
    xy = pts[i] + frac[:, None] * seg[i]
    return np.column_stack([xy, np.unwrap(headings[i])])


@dataclass(frozen=True)
class RobotObservation:
    """Everything robot ``robot`` senses at step ``step``."""

    robot: int
    step: int
    prior: np.ndarray | None = None
    odometry: np.ndarray | None = None
    landmarks: tuple[LandmarkSighting, ...] = ()
    targets: tuple[RelativePositionMeasurement, ...] = ()
    pose_fix: PoseFix | None = None


@dataclass
class World:
    """Truth for one scenario and seed.

    ``robot_truth[i]`` is ``(horizon + 1, 3)``; ``target_truth[t]`` is
    ``(horizon + 1, 4)`` and is generated up front by propagating
    ``t[k+1] = F t[k] + G u[k] + w``.
    """

    scenario: Scenario
    seed: int
    robot_truth: dict[int, np.ndarray] = field(default_factory=dict)
    target_truth: dict[int, np.ndarray] = field(default_factory=dict)
    landmarks: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    _streams: dict = field(default_factory=dict, repr=False)

    @classmethod
    def create(cls, scenario: Scenario, seed: int | None = None) -> World:
        scenario.validate()
        seed = scenario.seed if seed is None else seed
        w = cls(scenario, int(seed))
        sc = scenario
        w.landmarks = np.asarray(sc.landmarks, dtype=float).reshape(-1, 2)
        for r in sc.robots:
            w.robot_truth[r.id] = waypoint_path(r.waypoints, r.speed, sc.dt, sc.horizon)
        dyn = TargetDynamics.with_noise(sc.dt, sc.process_noise)
        for t in sc.targets:
            init = rng_for(w.seed, Stream.TARGET_INIT, t.id)
            proc = rng_for(w.seed, Stream.TARGET_PROCESS, t.id)
            x = init.multivariate_normal(np.asarray(t.prior_mean, float), t.prior_cov())
            traj = np.empty((sc.horizon + 1, 4))
            traj[0] = x
            u = t.input_array()
            for k in range(sc.horizon):
                uk = u[k] if u is not None and k < len(u) else np.zeros(2)
                traj[k + 1] = dyn.F @ traj[k] + dyn.G @ uk + proc.multivariate_normal(np.zeros(4), dyn.Q)
            w.target_truth[t.id] = traj
        return w

    def _rng(self, stream: Stream, owner: int) -> np.random.Generator:
        key = (stream, owner)
        if key not in self._streams:
            self._streams[key] = rng_for(self.seed, stream, owner)
        return self._streams[key]

    def observe(self, robot: int, k: int) -> RobotObservation:
        """Sensor bundle for ``robot`` at ``k``; call once per (robot, k) in order."""
        cfg: RobotConfig = self.scenario.robot(robot)
        truth = self.robot_truth[robot]
        pose = truth[k]
        prior = odometry = fix = None
        if k == 0:
            prior = pose + self._rng(Stream.ROBOT_PRIOR, robot).normal(0.0, cfg.prior_std)
        else:
            odometry = (pose - truth[k - 1]) + self._rng(Stream.ODOMETRY, robot).normal(0.0, cfg.odometry_std)
        sightings = []
        if cfg.engine == "landmark":
            lrng = self._rng(Stream.LANDMARK, robot)
            for idx, lm in enumerate(self.landmarks):
                if np.hypot(*(pose[:2] - lm)) <= cfg.landmark_range:
                    y = pose[:2] - lm + lrng.normal(0.0, cfg.landmark_std, size=2)
                    sightings.append(LandmarkSighting(idx, y, cfg.landmark_std**2 * np.eye(2)))
        if cfg.engine == "odometry" and cfg.fix_every and k > 0 and k % cfg.fix_every == 0:
            fix = PoseFix(pose + self._rng(Stream.POSE_FIX, robot).normal(0.0, cfg.fix_std), cfg.fix_cov())
        meas = []
        mrng = self._rng(Stream.TARGET_MEAS, robot)
        R = cfg.measurement_cov()
        for t in self.scenario.targets:
            tx = self.target_truth[t.id][k]
            rel = pose[:2] - tx[[0, 2]]
            if np.hypot(*rel) <= cfg.detection_range:
                y = rel + mrng.multivariate_normal(np.zeros(2), R)
                meas.append(RelativePositionMeasurement(robot, t.id, k, y, R))
        return RobotObservation(robot, k, prior, odometry, tuple(sightings), tuple(meas), fix)

    def target_state(self, target: int, k: int) -> np.ndarray:
        return self.target_truth[target][k]

    def robot_pose(self, robot: int, k: int) -> np.ndarray:
        return self.robot_truth[robot][k]
