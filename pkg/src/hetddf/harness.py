"""
Scenario runner, centralized comparison and run reports.

A :class:`Simulation` advances everything in lock step. Each step has three
phases:

1. ``sense``: the world produces observation bundles and every agent (and
   the oracle, if attached) takes its step;
2. ``communicate``: the network runs the exchanges due at this step;
3. ``finish``: agents push pending pose information back to SLAM.

Tests hook between phases; :func:`run_scenario` just loops.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from .agent import RobotAgent, TargetPrior, tracked_targets
from .errors import ConfigError
from .factor_graph import VariablePartition, robot_pose
from .gaussian import relative_difference
from .metrics import nees, nees_report, position_error
from .models import TargetDynamics
from .network import Network, Topology
from .oracle import CentralizedFusion
from .scenario import Scenario, load_scenario
from .slam import make_engine
from .world import RobotObservation, World

REPORT_SCHEMA = "hetddf.report/1"
CSV_COLUMNS = [
    "source",
    "robot",
    "step",
    "target",
    "x",
    "vx",
    "y",
    "vy",
    "var_x",
    "var_vx",
    "var_y",
    "var_vy",
    "true_x",
    "true_vx",
    "true_y",
    "true_vy",
    "nees",
    "pos_err",
    "oracle_delta",
]


def build_agents(scenario: Scenario) -> dict[int, RobotAgent]:
    """One agent per robot with channels to tree neighbours."""
    topo = Topology.from_scenario(scenario)
    dyn = TargetDynamics.with_noise(scenario.dt, scenario.filter_process_noise)
    agents = {}
    for r in scenario.robots:
        common = {}
        for j in topo.neighbors(r.id):
            shared = scenario.common_targets(r.id, j)
            if shared:
                common[j] = frozenset(shared)
        partition = VariablePartition(r.id, frozenset(r.targets), common)
        priors = {}
        for t in r.targets:
            tc = scenario.target(t)
            priors[t] = TargetPrior(np.asarray(tc.prior_mean, float), tc.prior_cov(), scenario.estimator_inputs(t))
        engine = make_engine(r.engine, r.id, r.prior_cov(), r.odometry_cov())
        agents[r.id] = RobotAgent(
            r.id,
            engine,
            priors,
            dyn,
            partition,
            detection_range=r.detection_range,
            detection_steps=tuple(r.detection_steps) if r.detection_steps else None,
            target_history=scenario.target_history,
        )
    return agents


def scenario_fingerprint(scenario: Scenario) -> str:
    data = scenario.to_dict()
    data.pop("seed", None)
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunReport:
    """Per-(robot, step) estimates, errors and oracle deltas for one run."""

    scenario: str
    seed: int
    horizon: int
    fingerprint: str
    source: str = "decentralized"
    records: list[dict] = field(default_factory=list)
    oracle_deltas: list[dict] = field(default_factory=list)

    def add(self, record: dict) -> None:
        self.records.append(record)

    def nees_array(self) -> dict[tuple[int, int], np.ndarray]:
        out: dict = {}
        for rec in self.records:
            for t, tr in rec["targets"].items():
                out.setdefault((rec["robot"], int(t)), []).append(tr["nees"])
        return {k: np.asarray(v) for k, v in out.items()}

    def error_array(self) -> dict[tuple[int, int], np.ndarray]:
        out: dict = {}
        for rec in self.records:
            for t, tr in rec["targets"].items():
                out.setdefault((rec["robot"], int(t)), []).append(tr["pos_err"])
        return {k: np.asarray(v) for k, v in out.items()}

    def max_oracle_delta(self, exchange_steps_only: bool = True) -> float:
        vals = [d["delta"] for d in self.oracle_deltas if d["exchange_step"] or not exchange_steps_only]
        return max(vals, default=0.0)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "scenario": self.scenario,
            "seed": self.seed,
            "horizon": self.horizon,
            "fingerprint": self.fingerprint,
            "source": self.source,
            "records": self.records,
            "oracle_deltas": self.oracle_deltas,
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunReport:
        if data.get("schema") != REPORT_SCHEMA:
            raise ConfigError(f"unsupported report schema {data.get('schema')!r}")
        return cls(
            scenario=data["scenario"],
            seed=data["seed"],
            horizon=data["horizon"],
            fingerprint=data["fingerprint"],
            source=data.get("source", "decentralized"),
            records=data["records"],
            oracle_deltas=data.get("oracle_deltas", []),
        )

    def to_csv(self) -> str:
        delta = {(d["robot"], d["step"]): d["delta"] for d in self.oracle_deltas}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in self.records:
            for t, tr in sorted(rec["targets"].items(), key=lambda kv: int(kv[0])):
                var = np.diag(np.asarray(tr["cov"]))
                d = delta.get((rec["robot"], rec["step"]), "")
                w.writerow(
                    [self.source, rec["robot"], rec["step"], t]
                    + [f"{v:.10g}" for v in tr["mean"]]
                    + [f"{v:.10g}" for v in var]
                    + [f"{v:.10g}" for v in tr["truth"]]
                    + [f"{tr['nees']:.10g}", f"{tr['pos_err']:.10g}", d if d == "" else f"{d:.3e}"]
                )
        return buf.getvalue()

    def write(self, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or f"{self.source}-seed{self.seed}"
        jp, cp = out / f"{stem}.json", out / f"{stem}.csv"
        jp.write_text(json.dumps(self.to_dict()))
        cp.write_text(self.to_csv())
        return jp, cp


def _target_record(mean, cov, truth) -> dict:
    return {
        "mean": mean.tolist(),
        "cov": cov.tolist(),
        "truth": truth.tolist(),
        "nees": nees(mean, cov, truth),
        "pos_err": position_error(mean, truth),
    }


class Simulation:
    """Lock-step run of world, agents, network and (optionally) the oracle."""

    def __init__(
        self,
        scenario: Scenario,
        seed: int | None = None,
        *,
        with_oracle: bool = False,
        record: bool = True,
        trace_file: TextIO | None = None,
        state_file: TextIO | None = None,
    ):
        scenario.validate()
        self.scenario = scenario if seed is None else scenario.with_seed(seed)
        self.world = World.create(self.scenario)
        self.agents = build_agents(self.scenario)
        self.topology = Topology.from_scenario(self.scenario)
        self.topology.validate(tracked_targets(self.agents.values()))
        self.network = Network(self.topology, self.scenario.seed, trace_file=trace_file)
        self.oracle = CentralizedFusion(self.scenario) if with_oracle else None
        self.state_file = state_file
        self.record = record
        self.k = -1
        self.observations: dict[int, RobotObservation] = {}
        fp = scenario_fingerprint(self.scenario)
        self.report = RunReport(self.scenario.name, self.scenario.seed, self.scenario.horizon, fp)
        self.oracle_report = (
            RunReport(self.scenario.name, self.scenario.seed, self.scenario.horizon, fp, source="oracle")
            if with_oracle
            else None
        )

    # -- phases --------------------------------------------------------------
    def sense(self, k: int) -> None:
        self.observations = {rid: self.world.observe(rid, k) for rid in sorted(self.agents)}
        for rid in sorted(self.agents):
            self.agents[rid].step(k, self.observations[rid])
        if self.oracle is not None:
            self.oracle.step(k, self.observations)
        self.k = k

    def communicate(self, k: int) -> None:
        self.network.run_schedule(self.agents, k)

    def finish(self, k: int) -> None:
        for rid in sorted(self.agents):
            self.agents[rid].complete_step()
            if self.state_file is not None:
                self.agents[rid].write_state(self.state_file)
        if self.record:
            self._record(k)

    def step(self) -> int:
        k = self.k + 1
        self.sense(k)
        self.communicate(k)
        self.finish(k)
        return k

    def run(self, until: int | None = None, callback: Callable[[Simulation, int], None] | None = None) -> RunReport:
        stop = self.scenario.horizon if until is None else until
        while self.k < stop:
            k = self.step()
            if callback is not None:
                callback(self, k)
        return self.report

    # -- recording ---------------------------------------------------------------
    def is_exchange_step(self, k: int) -> bool:
        """All edges exchanged at ``k`` and nothing could be dropped."""
        topo = self.topology
        return topo.drop_prob == 0 and len(topo.due(k)) == len(topo.edges)

    def _record(self, k: int) -> None:
        world = self.world
        for rid, ag in sorted(self.agents.items()):
            pose_mean, pose_cov = ag.slam.pose_moments(k)
            targets = {
                str(t): _target_record(m, c, world.target_state(t, k)) for t, (m, c) in ag.target_estimates().items()
            }
            self.report.add(
                {
                    "robot": rid,
                    "step": k,
                    "pose": {"mean": pose_mean.tolist(), "cov": pose_cov.tolist(), "truth": world.robot_pose(rid, k).tolist()},
                    "targets": targets,
                }
            )
        if self.oracle is None:
            return
        est = self.oracle.target_estimates()
        for rid, ag in sorted(self.agents.items()):
            _, pm, pc = self.oracle.graph.moments([ag.slam.pose(k)])
            self.oracle_report.add(
                {
                    "robot": rid,
                    "step": k,
                    "pose": {"mean": pm.tolist(), "cov": pc.tolist(), "truth": world.robot_pose(rid, k).tolist()},
                    "targets": {str(t): _target_record(*est[t], world.target_state(t, k)) for t in ag.targets},
                }
            )
            if ag.partition.common_targets:
                delta = relative_difference(
                    ag.common_target_marginal(), self.oracle.target_marginal(ag.partition.common_targets)
                )
                self.report.oracle_deltas.append(
                    {"robot": rid, "step": k, "delta": delta, "exchange_step": self.is_exchange_step(k)}
                )


def _as_scenario(config) -> Scenario:
    if isinstance(config, Scenario):
        return config
    return load_scenario(config)


def run_scenario(config, seed: int | None = None, out: str | Path | None = None, *, with_oracle: bool = False) -> RunReport:
    """Run the decentralized system over the horizon; write JSON and CSV if ``out``."""
    sc = _as_scenario(config)
    out_path = Path(out) if out is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        with open(out_path / "messages.jsonl", "w") as tf, open(out_path / "states.jsonl", "w") as sf:
            sim = Simulation(sc, seed, with_oracle=with_oracle, trace_file=tf, state_file=sf)
            report = sim.run()
        report.write(out_path)
        if sim.oracle_report is not None:
            sim.oracle_report.write(out_path)
    else:
        sim = Simulation(sc, seed, with_oracle=with_oracle)
        report = sim.run()
    return report


def centralized_oracle(config, seed: int | None = None, out: str | Path | None = None) -> RunReport:
    """Run only the centralized benchmark on the same measurement streams."""
    sc = _as_scenario(config)
    sc = sc if seed is None else sc.with_seed(seed)
    sc.validate()
    world = World.create(sc)
    oracle = CentralizedFusion(sc)
    report = RunReport(sc.name, sc.seed, sc.horizon, scenario_fingerprint(sc), source="oracle")
    for k in range(sc.horizon + 1):
        oracle.step(k, {r.id: world.observe(r.id, k) for r in sc.robots})
        est = oracle.target_estimates()
        for r in sc.robots:
            _, pm, pc = oracle.graph.moments([robot_pose(r.id, k)])
            report.add(
                {
                    "robot": r.id,
                    "step": k,
                    "pose": {"mean": pm.tolist(), "cov": pc.tolist(), "truth": world.robot_pose(r.id, k).tolist()},
                    "targets": {str(t): _target_record(*est[t], world.target_state(t, k)) for t in r.targets},
                }
            )
    if out is not None:
        report.write(out)
    return report


@dataclass
class Comparison:
    max_delta: float
    tolerance: float
    steps_compared: int
    report: RunReport

    @property
    def passed(self) -> bool:
        return self.max_delta <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "schema": "hetddf.compare/1",
            "max_delta": self.max_delta,
            "tolerance": self.tolerance,
            "steps_compared": self.steps_compared,
            "passed": self.passed,
        }


def compare(config, seed: int | None = None, tolerance: float = 1e-9, out: str | Path | None = None) -> Comparison:
    """Decentralized vs centralized common-target marginals at exchange steps."""
    sc = _as_scenario(config)
    if sc.topology.drop_prob > 0:
        raise ConfigError("exactness comparison needs a lossless network (drop_prob = 0)")
    report = run_scenario(sc, seed, out, with_oracle=True)
    steps = {d["step"] for d in report.oracle_deltas if d["exchange_step"]}
    return Comparison(report.max_oracle_delta(), tolerance, len(steps), report)


def monte_carlo(config, runs: int, first_seed: int = 0) -> list[RunReport]:
    sc = _as_scenario(config)
    return [Simulation(sc, first_seed + s).run() for s in range(runs)]


def run_nees(config, runs: int = 50, first_seed: int = 0):
    return nees_report(monte_carlo(config, runs, first_seed))


def with_engines(scenario: Scenario, engines: dict[int, str], fix_every: int = 20) -> Scenario:
    """Copy of ``scenario`` with robot engines swapped (heterogeneous runs)."""
    robots = []
    for r in scenario.robots:
        kind = engines.get(r.id, r.engine)
        robots.append(replace(r, engine=kind, fix_every=(r.fix_every or fix_every) if kind == "odometry" else r.fix_every))
    return replace(scenario, robots=robots)
