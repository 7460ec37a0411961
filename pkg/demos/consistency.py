"""
Monte-Carlo NEES check of the decentralized estimates.

    python demos/consistency.py --runs 20
"""

import argparse

from hetddf.harness import monte_carlo
from hetddf.metrics import nees_report
from hetddf.scenario import default_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--horizon", type=int, default=100)
    args = ap.parse_args()
    summary = nees_report(monte_carlo(default_scenario(0, horizon=args.horizon), args.runs))
    lo, hi = summary.bounds
    print(f"{args.runs} runs, 95% bounds on averaged NEES: [{lo:.3f}, {hi:.3f}]")
    for key, ok in sorted(summary.passed.items()):
        print(f"  robot {key[0]} target {key[1]}: {summary.mean_nees[key]:.3f} {'ok' if ok else 'OUT OF BOUNDS'}")


if __name__ == "__main__":
    main()
