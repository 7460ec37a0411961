"""
Scenario configuration: robots, targets, landmarks, topology, seeds.

A scenario is plain JSON. Every field has a default except the lists of
robots and targets; :func:`default_scenario` returns the two-robot,
five-target setup used by the demos and the consistency tests.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .models import DEFAULT_MEASUREMENT_NOISE, DEFAULT_PROCESS_NOISE
from .slam import ENGINES

SCHEMA = "hetddf.scenario/1"


@dataclass
class TargetConfig:
    """One target. ``prior_mean`` is also the centre the true start is drawn around."""

    id: int
    prior_mean: list[float]
    prior_std: list[float] = field(default_factory=lambda: [0.5, 0.2, 0.5, 0.2])
    inputs: list[list[float]] | None = None

    def prior_cov(self) -> np.ndarray:
        return np.diag(np.square(self.prior_std))

    def input_array(self) -> np.ndarray | None:
        return None if self.inputs is None else np.asarray(self.inputs, dtype=float).reshape(-1, 2)


@dataclass
class RobotConfig:
    id: int
    waypoints: list[list[float]]
    targets: list[int]
    engine: str = "landmark"
    speed: float = 1.0
    prior_std: list[float] = field(default_factory=lambda: [0.2, 0.2, 0.05])
    odometry_std: list[float] = field(default_factory=lambda: [0.05, 0.05, 0.01])
    landmark_std: float = 0.2
    landmark_range: float = 6.0
    detection_range: float = 8.0
    measurement_var: float = DEFAULT_MEASUREMENT_NOISE
    detection_steps: list[int] | None = None
    fix_every: int | None = None
    fix_std: list[float] = field(default_factory=lambda: [0.1, 0.1, 0.02])

    def prior_cov(self) -> np.ndarray:
        return np.diag(np.square(self.prior_std))

    def odometry_cov(self) -> np.ndarray:
        return np.diag(np.square(self.odometry_std))

    def fix_cov(self) -> np.ndarray:
        return np.diag(np.square(self.fix_std))

    def measurement_cov(self) -> np.ndarray:
        return self.measurement_var * np.eye(2)


@dataclass
class TopologyConfig:
    """Undirected edges with a per-edge period (steps between exchanges)."""

    edges: list[list[int]] = field(default_factory=list)
    period: int = 1
    periods: dict[str, int] = field(default_factory=dict)  # "i-j" -> period
    rounds: int = 1
    drop_prob: float = 0.0
    exact: bool = True

    def period_of(self, i: int, j: int) -> int:
        a, b = sorted((i, j))
        return int(self.periods.get(f"{a}-{b}", self.period))


@dataclass
class Scenario:
    robots: list[RobotConfig]
    targets: list[TargetConfig]
    landmarks: list[list[float]] = field(default_factory=list)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    name: str = "scenario"
    seed: int = 0
    horizon: int = 100
    dt: float = 0.1
    process_noise: float = DEFAULT_PROCESS_NOISE
    # process noise the estimators assume; None means the true value
    model_process_noise: float | None = None
    target_history: str = "common"
    # whether estimators are told the scripted target inputs
    known_target_inputs: bool = False

    @property
    def filter_process_noise(self) -> float:
        return self.process_noise if self.model_process_noise is None else self.model_process_noise

    def estimator_inputs(self, tid: int) -> np.ndarray | None:
        """Target inputs as the estimators see them (None when unknown)."""
        return self.target(tid).input_array() if self.known_target_inputs else None

    # -- lookup ------------------------------------------------------------
    def robot(self, rid: int) -> RobotConfig:
        for r in self.robots:
            if r.id == rid:
                return r
        raise ConfigError(f"no robot {rid}")

    def target(self, tid: int) -> TargetConfig:
        for t in self.targets:
            if t.id == tid:
                return t
        raise ConfigError(f"no target {tid}")

    def common_targets(self, i: int, j: int) -> frozenset:
        return frozenset(self.robot(i).targets) & frozenset(self.robot(j).targets)

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=int(seed))

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        rids = [r.id for r in self.robots]
        tids = [t.id for t in self.targets]
        if len(set(rids)) != len(rids):
            raise ConfigError("duplicate robot ids")
        if len(set(tids)) != len(tids):
            raise ConfigError("duplicate target ids")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.process_noise <= 0:
            raise ConfigError("process_noise must be positive")
        if self.model_process_noise is not None and self.model_process_noise <= 0:
            raise ConfigError("model_process_noise must be positive")
        if self.target_history not in ("common", "full"):
            raise ConfigError("target_history must be 'common' or 'full'")
        for t in self.targets:
            if len(t.prior_mean) != 4 or len(t.prior_std) != 4:
                raise ConfigError(f"target {t.id}: prior needs 4 components")
            if min(t.prior_std) <= 0:
                raise ConfigError(f"target {t.id}: prior_std must be positive")
            if t.inputs is not None and np.asarray(t.inputs).reshape(-1).size % 2:
                raise ConfigError(f"target {t.id}: inputs must be pairs")
        for r in self.robots:
            if r.engine not in ENGINES:
                raise ConfigError(f"robot {r.id}: unknown engine {r.engine!r}")
            if not r.waypoints or any(len(w) != 2 for w in r.waypoints):
                raise ConfigError(f"robot {r.id}: waypoints must be a non-empty list of [x, y]")
            if unknown := set(r.targets) - set(tids):
                raise ConfigError(f"robot {r.id}: unknown targets {sorted(unknown)}")
            if min(r.prior_std) <= 0 or min(r.odometry_std) <= 0 or r.landmark_std <= 0 or r.measurement_var <= 0:
                raise ConfigError(f"robot {r.id}: noise parameters must be positive")
            if r.fix_every is not None and r.fix_every <= 0:
                raise ConfigError(f"robot {r.id}: fix_every must be positive")
            if r.detection_steps is not None and len(r.detection_steps) != 2:
                raise ConfigError(f"robot {r.id}: detection_steps is [start, stop]")
        for lm in self.landmarks:
            if len(lm) != 2:
                raise ConfigError("landmarks are [x, y] pairs")
        topo = self.topology
        for e in topo.edges:
            if len(e) != 2 or e[0] == e[1] or not set(e) <= set(rids):
                raise ConfigError(f"bad edge {e}")
        if topo.period <= 0 or any(p <= 0 for p in topo.periods.values()):
            raise ConfigError("exchange periods must be positive")
        if topo.rounds <= 0:
            raise ConfigError("rounds must be positive")
        if not 0.0 <= topo.drop_prob < 1.0:
            raise ConfigError("drop_prob must be in [0, 1)")

    # -- serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {"schema": SCHEMA, **asdict(self)}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scenario:
        data = dict(data)
        schema = data.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported scenario schema {schema!r}")
        try:
            robots = [RobotConfig(**r) for r in data.pop("robots")]
            targets = [TargetConfig(**t) for t in data.pop("targets")]
            topology = TopologyConfig(**data.pop("topology", {}))
            sc = cls(robots=robots, targets=targets, topology=topology, **data)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario: {exc}") from None
        sc.validate()
        return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return Scenario.from_dict(data)


def default_scenario(seed: int = 0, *, horizon: int = 100) -> Scenario:
    """Two robots sweeping past five slow targets; one target is common."""
    robots = [
        RobotConfig(id=0, waypoints=[[-5.0, -3.0], [5.0, -3.0]], targets=[0, 1, 2]),
        RobotConfig(id=1, waypoints=[[5.0, 3.0], [-5.0, 3.0]], targets=[2, 3, 4]),
    ]
    targets = [
        TargetConfig(id=0, prior_mean=[-4.0, 0.1, -5.0, 0.0]),
        TargetConfig(id=1, prior_mean=[0.0, 0.0, -6.0, 0.1]),
        TargetConfig(id=2, prior_mean=[0.0, 0.1, 0.0, -0.1]),
        TargetConfig(id=3, prior_mean=[0.0, -0.1, 6.0, 0.0]),
        TargetConfig(id=4, prior_mean=[4.0, 0.0, 5.0, -0.1]),
    ]
    landmarks = [[-4.0, -1.0], [0.0, -1.5], [4.0, -1.0], [-4.0, 1.0], [0.0, 1.5], [4.0, 1.0]]
    return Scenario(
        robots=robots,
        targets=targets,
        landmarks=landmarks,
        topology=TopologyConfig(edges=[[0, 1]]),
        name="default",
        seed=seed,
        horizon=horizon,
    )


def common_targets_scenario(seed: int = 0, *, horizon: int = 50) -> Scenario:
    """Two robots that both track the same two targets and nothing else."""
    robots = [
        RobotConfig(id=0, waypoints=[[-5.0, -3.0], [5.0, -3.0]], targets=[0, 1]),
        RobotConfig(id=1, waypoints=[[5.0, 3.0], [-5.0, 3.0]], targets=[0, 1]),
    ]
    targets = [
        TargetConfig(id=0, prior_mean=[-1.5, 0.1, 0.0, 0.0]),
        TargetConfig(id=1, prior_mean=[1.5, -0.1, 0.5, 0.0]),
    ]
    landmarks = [[-4.0, -1.0], [0.0, -1.5], [4.0, -1.0], [-4.0, 1.0], [0.0, 1.5], [4.0, 1.0]]
    return Scenario(
        robots=robots,
        targets=targets,
        landmarks=landmarks,
        topology=TopologyConfig(edges=[[0, 1]]),
        name="common2",
        seed=seed,
        horizon=horizon,
    )


def chain_scenario(seed: int = 0, *, horizon: int = 40, period: int = 1) -> Scenario:
    """Three robots on a line graph 0 - 1 - 2; two hops need two rounds."""
    robots = [
        RobotConfig(id=0, waypoints=[[-6.0, -3.0], [0.0, -3.0]], targets=[0, 1]),
        RobotConfig(id=1, waypoints=[[-3.0, 3.0], [3.0, 3.0]], targets=[1, 2]),
        RobotConfig(id=2, waypoints=[[6.0, -3.0], [0.0, -3.0]], targets=[1, 2, 3]),
    ]
    targets = [
        TargetConfig(id=0, prior_mean=[-5.0, 0.0, -5.0, 0.1]),
        TargetConfig(id=1, prior_mean=[0.0, 0.1, 0.0, 0.0]),
        TargetConfig(id=2, prior_mean=[2.0, 0.0, 1.0, -0.1]),
        TargetConfig(id=3, prior_mean=[5.0, -0.1, -5.0, 0.0]),
    ]
    landmarks = [[-4.0, -1.0], [0.0, -1.5], [4.0, -1.0], [-2.0, 1.5], [2.0, 1.5]]
    return Scenario(
        robots=robots,
        targets=targets,
        landmarks=landmarks,
        topology=TopologyConfig(edges=[[0, 1], [1, 2]], period=period, rounds=2),
        name="chain3",
        seed=seed,
        horizon=horizon,
    )


def single_robot_scenario(seed: int = 0, *, horizon: int = 20) -> Scenario:
    """One robot, three landmarks, one target; keeps every target state."""
    robots = [RobotConfig(id=0, waypoints=[[-3.0, -2.0], [3.0, -2.0]], targets=[0])]
    targets = [TargetConfig(id=0, prior_mean=[0.0, 0.1, 1.0, 0.0])]
    landmarks = [[-2.0, 0.0], [0.0, -0.5], [2.0, 0.0]]
    return Scenario(
        robots=robots,
        targets=targets,
        landmarks=landmarks,
        name="single",
        seed=seed,
        horizon=horizon,
        target_history="full",
    )


PRESETS = {
    "default": default_scenario,
    "common2": common_targets_scenario,
    "chain3": chain_scenario,
    "single": single_robot_scenario,
}
