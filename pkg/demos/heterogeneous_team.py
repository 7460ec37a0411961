"""
A landmark-SLAM robot and an odometry-only robot tracking targets together.

Robot 0 stops detecting its targets after step 10. Its next exchange still
shrinks the uncertainty of its map and of targets it alone tracks, because
information about the shared target flows back through the correlations.

    python demos/heterogeneous_team.py
"""

from dataclasses import replace

import numpy as np

from hetddf.harness import Simulation, with_engines
from hetddf.scenario import default_scenario


def main():
    sc = with_engines(default_scenario(1, horizon=30), {1: "odometry"})
    sc = replace(sc, robots=[replace(sc.robots[0], detection_steps=[0, 11]), sc.robots[1]])
    sim = Simulation(sc)
    sim.run(until=10)

    k = 11
    sim.sense(k)
    robot = sim.agents[0]
    before = {t: np.trace(c) for t, (_, c) in robot.target_estimates().items()}
    sim.communicate(k)
    sim.finish(k)
    after = {t: np.trace(c) for t, (_, c) in robot.target_estimates().items()}
    print("robot 0 target covariance trace at step 11 (no detections since step 10)")
    for t in sorted(before):
        print(f"  target {t}: {before[t]:.4f} -> {after[t]:.4f}")

    sim.run()
    print("\nfinal estimates vs truth")
    for rid, ag in sorted(sim.agents.items()):
        for t, (mean, _) in sorted(ag.target_estimates().items()):
            truth = sim.world.target_state(t, sc.horizon)
            err = np.hypot(mean[0] - truth[0], mean[2] - truth[2])
            print(f"  robot {rid} ({ag.slam.kind}) target {t}: position error {err:.3f}")


if __name__ == "__main__":
    main()
