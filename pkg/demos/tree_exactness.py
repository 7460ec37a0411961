"""
Decentralized fusion on tree networks matches the centralized solution.

Runs a two-robot team with shared targets and a three-robot chain next to the
centralized oracle and prints the relative difference of the common target
marginals at every exchange step.

    python demos/tree_exactness.py
"""

from hetddf.harness import Simulation
from hetddf.scenario import chain_scenario, common_targets_scenario


def show(sc):
    report = Simulation(sc, with_oracle=True).run()
    print(f"\n{sc.name}: {len(sc.robots)} robots, edges {sc.topology.edges}, {sc.topology.rounds} round(s) per step")
    print(" step  robot  delta")
    for d in report.oracle_deltas:
        if d["exchange_step"] and d["step"] % 10 == 0:
            print(f" {d['step']:4d}  {d['robot']:5d}  {d['delta']:.2e}")
    print(f" max over exchange steps: {report.max_oracle_delta():.2e}")


if __name__ == "__main__":
    show(common_targets_scenario(0, horizon=50))
    show(chain_scenario(0, horizon=40))
