import io
import json
from dataclasses import replace

import pytest

from hetddf.errors import ConfigError, StepError
from hetddf.harness import Simulation, compare
from hetddf.network import Topology
from hetddf.scenario import chain_scenario, default_scenario


def test_cycle_rejected_in_exact_mode():
    topo = Topology([0, 1, 2], [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(ConfigError, match="cycle"):
        topo.validate()
    Topology([0, 1, 2], [(0, 1), (1, 2), (2, 0)], exact=False).validate()


def test_split_tracker_group_rejected():
    topo = Topology([0, 1, 2], [(0, 1), (1, 2)])
    topo.validate({5: [0, 1, 2], 6: [1, 2]})
    with pytest.raises(ConfigError, match="not connected"):
        topo.validate({5: [0, 2]})


def test_edge_checks():
    with pytest.raises(ConfigError):
        Topology([0, 1], [(0, 3)]).validate()
    with pytest.raises(ConfigError):
        Topology([0, 1], [(0, 1), (1, 0)]).validate()
    with pytest.raises(ConfigError):
        Topology([0, 1], [(0, 1)], rounds=0).validate()


def test_schedule_and_shape():
    topo = Topology([0, 1, 2], [(1, 0), (2, 1)], period=2, periods={(2, 1): 3})
    assert topo.edges == [(0, 1), (1, 2)]
    assert topo.due(0) == [(0, 1), (1, 2)]
    assert topo.due(2) == [(0, 1)]
    assert topo.due(3) == [(1, 2)]
    assert topo.neighbors(1) == [0, 2]
    assert topo.diameter() == 2


def test_trace_and_message_ids():
    sc = chain_scenario(0, horizon=2)
    fh = io.StringIO()
    sim = Simulation(sc, trace_file=fh, record=False)
    sim.run()
    lines = [json.loads(x) for x in fh.getvalue().splitlines()]
    # 2 edges * 2 directions * 2 rounds * 3 steps
    assert len(lines) == 24
    assert lines[0]["id"] == "0>1@0.0"
    assert {x["round"] for x in lines} == {0, 1}


def test_scheduler_checks_agent_steps():
    sim = Simulation(default_scenario(0, horizon=3), record=False)
    sim.sense(0)
    with pytest.raises(StepError):
        sim.network.run_schedule(sim.agents, 1)


def test_periodic_exchange_exact_at_exchange_steps():
    sc = default_scenario(1, horizon=30)
    sc = replace(sc, topology=replace(sc.topology, period=10))
    sim = Simulation(sc, with_oracle=True)
    rep = sim.run()
    at = [d["delta"] for d in rep.oracle_deltas if d["exchange_step"]]
    off = [d["delta"] for d in rep.oracle_deltas if not d["exchange_step"]]
    assert len(at) == 2 * 4 and max(at) < 1e-9
    # between exchanges the robots lack each other's data
    assert max(off) > 1e-3


def test_chain_needs_diameter_rounds():
    sc = chain_scenario(0, horizon=10)
    assert compare(sc).passed
    one = replace(sc, topology=replace(sc.topology, rounds=1))
    assert not compare(one).passed


def test_drops_logged_and_consistent_without_exactness():
    sc = default_scenario(0, horizon=20)
    sc = replace(sc, topology=replace(sc.topology, drop_prob=0.5))
    sim = Simulation(sc)
    rep = sim.run()
    dropped = [x for x in sim.network.trace if x.get("dropped")]
    assert 0 < len(dropped) < 21
    assert not any(sim.is_exchange_step(k) for k in range(21))
    with pytest.raises(ConfigError):
        compare(sc)
    assert len(rep.records) == 2 * 21
