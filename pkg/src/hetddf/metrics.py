"""
Estimator metrics: NEES, RMSE and chi-square consistency bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .errors import ConfigError


def nees(estimate: np.ndarray, cov: np.ndarray, truth: np.ndarray) -> float:
    """``(x_hat - x)' P^-1 (x_hat - x)`` via a Cholesky solve."""
    e = np.asarray(estimate, float) - np.asarray(truth, float)
    c = linalg.cho_factor(np.asarray(cov, float), lower=True)
    return float(e @ linalg.cho_solve(c, e))


def position_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Euclidean position error for a ``[X, Xdot, Y, Ydot]`` state."""
    d = np.asarray(estimate, float)[[0, 2]] - np.asarray(truth, float)[[0, 2]]
    return float(np.hypot(*d))


def rmse(errors) -> float:
    e = np.asarray(errors, float)
    return float(np.sqrt(np.mean(e**2))) if e.size else float("nan")


def chi2_bounds(dof: int, runs: int, alpha: float = 0.05) -> tuple[float, float]:
    """Two-sided bounds on the mean of ``runs`` chi-square(``dof``) samples."""
    lo, hi = stats.chi2.ppf([alpha / 2, 1 - alpha / 2], dof * runs)
    return float(lo / runs), float(hi / runs)


@dataclass
class NeesSummary:
    """Monte-Carlo consistency summary for each (robot, target) pair."""

    runs: int
    dof: int
    bounds: tuple[float, float]
    mean_nees: dict[tuple[int, int], float] = field(default_factory=dict)
    step_nees: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    fraction_inside: dict[tuple[int, int], float] = field(default_factory=dict)
    rmse: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def passed(self) -> dict[tuple[int, int], bool]:
        lo, hi = self.bounds
        return {key: lo <= v <= hi for key, v in self.mean_nees.items()}

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "schema": "hetddf.nees/1",
            "runs": self.runs,
            "dof": self.dof,
            "bounds": list(self.bounds),
            "pairs": [
                {
                    "robot": r,
                    "target": t,
                    "mean_nees": self.mean_nees[(r, t)],
                    "fraction_inside": self.fraction_inside[(r, t)],
                    "final_rmse": float(self.rmse[(r, t)][-1]),
                    "passed": self.passed[(r, t)],
                }
                for r, t in sorted(self.mean_nees)
            ],
            "passed": self.all_passed,
        }


def nees_report(reports, dof: int = 4, alpha: float = 0.05) -> NeesSummary:
    """Average NEES per (robot, target) over Monte-Carlo runs.

    ``reports`` are :class:`~hetddf.harness.RunReport` objects from the same
    scenario with different seeds. The pass test compares the time average
    of the run-averaged NEES with the chi-square bounds for ``len(reports)``
    runs; the per-step fraction inside the bounds is reported alongside.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ConfigError("NEES consistency needs at least 2 Monte-Carlo runs")
    fp = {r.fingerprint for r in reports}
    if len(fp) != 1:
        raise ConfigError("Monte-Carlo runs come from different scenario configurations")
    n = len(reports)
    lo, hi = chi2_bounds(dof, n, alpha)
    out = NeesSummary(runs=n, dof=dof, bounds=(lo, hi))
    arrays = [r.nees_array() for r in reports]
    errs = [r.error_array() for r in reports]
    for key in sorted(arrays[0]):
        stack = np.stack([a[key] for a in arrays])  # runs x steps
        per_step = stack.mean(axis=0)
        out.step_nees[key] = per_step
        out.mean_nees[key] = float(per_step.mean())
        out.fraction_inside[key] = float(np.mean((per_step >= lo) & (per_step <= hi)))
        e = np.stack([x[key] for x in errs])
        out.rmse[key] = np.sqrt(np.mean(e**2, axis=0))
    return out
