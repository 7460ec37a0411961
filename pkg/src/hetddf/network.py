"""
Simulated peer-to-peer links and the lock-step exchange schedule.

Each exchange round is synchronous: every due edge prepares both messages
from the pre-round state, then all messages are delivered in sorted edge
order. Information therefore travels one hop per round, and ``rounds``
equal to the tree diameter gives every robot the full common information
at each exchange step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

import networkx as nx
import numpy as np

from .agent import RobotAgent
from .errors import ConfigError, StepError
from .fusion import FusionMessage


@dataclass
class Topology:
    nodes: list[int]
    edges: list[tuple[int, int]]
    period: int = 1
    periods: dict[tuple[int, int], int] = field(default_factory=dict)
    rounds: int = 1
    drop_prob: float = 0.0
    exact: bool = True

    def __post_init__(self):
        self.nodes = sorted(self.nodes)
        self.edges = sorted(tuple(sorted(e)) for e in self.edges)
        self.periods = {tuple(sorted(e)): int(p) for e, p in self.periods.items()}

    @classmethod
    def from_scenario(cls, scenario) -> Topology:
        t = scenario.topology
        periods = {tuple(int(x) for x in key.split("-")): p for key, p in t.periods.items()}
        return cls(
            nodes=[r.id for r in scenario.robots],
            edges=[tuple(e) for e in t.edges],
            period=t.period,
            periods=periods,
            rounds=t.rounds,
            drop_prob=t.drop_prob,
            exact=t.exact,
        )

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def period_of(self, edge: tuple[int, int]) -> int:
        return self.periods.get(tuple(sorted(edge)), self.period)

    def due(self, k: int) -> list[tuple[int, int]]:
        return [e for e in self.edges if k % self.period_of(e) == 0]

    def neighbors(self, node: int) -> list[int]:
        return sorted(j for e in self.edges for j in e if node in e and j != node)

    def diameter(self) -> int:
        """Longest shortest path over all components (0 without edges)."""
        g = self.graph()
        return max((nx.diameter(g.subgraph(c)) for c in nx.connected_components(g)), default=0)

    def validate(self, tracked: Mapping[int, Iterable[int]] | None = None) -> None:
        """Reject cycles in exact mode, unknown nodes, and split target groups.

        ``tracked`` maps target id -> robots tracking it. In exact mode every
        such group must form a connected subtree, otherwise two robots holding
        the same target would have no channel between them.
        """
        for i, j in self.edges:
            if i == j or i not in self.nodes or j not in self.nodes:
                raise ConfigError(f"edge ({i}, {j}) is not between two known robots")
        if len(set(self.edges)) != len(self.edges):
            raise ConfigError("duplicate edges")
        if self.period <= 0 or any(p <= 0 for p in self.periods.values()) or self.rounds <= 0:
            raise ConfigError("periods and rounds must be positive")
        if not self.exact:
            return
        g = self.graph()
        try:
            cycle = nx.find_cycle(g)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            path = " - ".join(str(u) for u, _ in cycle)
            raise ConfigError(f"topology has a cycle ({path}); exact channel filtering needs a tree")
        for t, robots in (tracked or {}).items():
            robots = sorted(set(robots))
            if len(robots) > 1 and not nx.is_connected(g.subgraph(robots)):
                raise ConfigError(f"robots tracking target {t} ({robots}) are not connected among themselves")


@dataclass
class Network:
    """Runs exchanges on a topology and keeps a message trace."""

    topology: Topology
    seed: int = 0
    trace: list[dict] = field(default_factory=list)
    trace_file: TextIO | None = None

    def __post_init__(self):
        self._rng = np.random.default_rng([int(self.seed), 99])

    def _log(self, entry: dict) -> None:
        self.trace.append(entry)
        if self.trace_file is not None:
            self.trace_file.write(json.dumps(entry) + "\n")

    def run_schedule(self, agents: Mapping[int, RobotAgent], k: int) -> list[FusionMessage]:
        """Execute every exchange due at step ``k``; returns delivered messages."""
        for rid, ag in agents.items():
            if ag.current_step != k:
                raise StepError(f"robot {rid} is at step {ag.current_step}, scheduler at {k}")
        edges = [(i, j) for i, j in self.topology.due(k) if j in agents[i].neighbor_cfs]
        delivered: list[FusionMessage] = []
        for r in range(self.topology.rounds):
            active = edges
            if self.topology.drop_prob > 0:
                keep = self._rng.random(len(edges)) >= self.topology.drop_prob
                for e, ok in zip(edges, keep):
                    if not ok:
                        self._log({"step": k, "round": r, "edge": list(e), "dropped": True})
                active = [e for e, ok in zip(edges, keep) if ok]
            outbox = []
            for i, j in active:
                outbox.append(agents[i].prepare(j, k, r))
                outbox.append(agents[j].prepare(i, k, r))
            for msg in outbox:
                agents[msg.receiver].receive(msg)
                delivered.append(msg)
                self._log(
                    {
                        "step": k,
                        "round": r,
                        "id": msg.msg_id,
                        "sender": msg.sender,
                        "receiver": msg.receiver,
                        "dims": msg.marginal.size,
                        "provenance": len(msg.provenance),
                    }
                )
        return delivered
