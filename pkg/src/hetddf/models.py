"""
Motion and measurement models expressed as factor builders.

Every model here is linear-Gaussian, ``z = A x + b + noise`` with
``noise ~ N(0, C)``, so each factor is exactly
``Lam = A' C^-1 A`` and ``eta = A' C^-1 (z - b)`` over the stacked dims.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import DimensionError, NotPositiveDefiniteError
from .factor_graph import (
    Factor,
    FactorId,
    FactorOrigin,
    VariableId,
    _anonymous_ids,
    position_dims,
    target_state,
)
from .gaussian import CanonicalGaussian, DimKey

DEFAULT_PROCESS_NOISE = 0.08
DEFAULT_MEASUREMENT_NOISE = 0.25


def _spd_inverse(cov: np.ndarray, what: str) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise NotPositiveDefiniteError(f"{what} is not symmetric")
    try:
        c = linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from None
    return linalg.cho_solve(c, np.eye(cov.shape[0]))


def linear_gaussian_potential(
    dims: Sequence[DimKey], A: np.ndarray, z: np.ndarray, cov: np.ndarray, offset=None
) -> CanonicalGaussian:
    """Potential of ``z = A x + offset + v``, ``v ~ N(0, cov)`` over ``dims``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    z = np.asarray(z, dtype=float).reshape(-1)
    if A.shape != (z.shape[0], len(dims)):
        raise DimensionError(f"model matrix {A.shape} does not fit {len(dims)} dims / {z.shape[0]} rows")
    if offset is not None:
        z = z - np.asarray(offset, dtype=float).reshape(-1)
    W = _spd_inverse(cov, "noise covariance")
    AtW = A.T @ W
    return CanonicalGaussian(dims, AtW @ A, AtW @ z)


def _fid(fid: FactorId | None, origin: FactorOrigin) -> FactorId:
    return fid if fid is not None else _anonymous_ids(origin)


# -- target model -------------------------------------------------------


@dataclass(frozen=True)
class TargetDynamics:
    """Discrete constant-velocity target model on ``[X, Xdot, Y, Ydot]``.

    ``t[k+1] = F t[k] + G u[k] + w``, ``w ~ N(0, Q)``; ``G`` maps an
    acceleration input ``u = [ax, ay]`` into the state.
    """

    dt: float
    Q: np.ndarray = field(default_factory=lambda: DEFAULT_PROCESS_NOISE * np.eye(4))

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (4, 4):
            raise DimensionError("process noise must be 4x4")
        _spd_inverse(Q, "process noise")
        object.__setattr__(self, "Q", Q)

    @classmethod
    def with_noise(cls, dt: float, q: float = DEFAULT_PROCESS_NOISE) -> TargetDynamics:
        return cls(dt, q * np.eye(4))

    @property
    def F(self) -> np.ndarray:
        dt = self.dt
        return np.array([[1, dt, 0, 0], [0, 1, 0, 0], [0, 0, 1, dt], [0, 0, 0, 1]], dtype=float)

    @property
    def G(self) -> np.ndarray:
        dt = self.dt
        h = 0.5 * dt * dt
        return np.array([[h, 0], [dt, 0], [0, h], [0, dt]], dtype=float)

    @functools.cached_property
    def transition_info(self) -> tuple[np.ndarray, np.ndarray]:
        """``(A' Q^-1 A, A' Q^-1)`` for ``A = [-F, I]``; the factor is affine in ``u``."""
        A = np.hstack([-self.F, np.eye(4)])
        AtW = A.T @ _spd_inverse(self.Q, "process noise")
        return AtW @ A, AtW

    def predict(self, mean, cov, u=None):
        """Moment-form prediction ``(F m + G u, F P F' + Q)``."""
        u = np.zeros(2) if u is None else np.asarray(u, dtype=float)
        F = self.F
        return F @ np.asarray(mean) + self.G @ u, F @ np.asarray(cov) @ F.T + self.Q


def dynamics_factor(
    dyn: TargetDynamics, target: int, k: int, u=None, *, fid: FactorId | None = None
) -> Factor:
    """Transition factor between ``target`` at ``k`` and at ``k + 1``."""
    u = np.zeros(2) if u is None else np.asarray(u, dtype=float).reshape(2)
    src, dst = target_state(target, k), target_state(target, k + 1)
    lam, AtW = dyn.transition_info
    pot = CanonicalGaussian(src.dims() + dst.dims(), lam, AtW @ (dyn.G @ u))
    return Factor(_fid(fid, FactorOrigin.DYNAMICS), pot)


def target_prior_factor(target: int, mean, cov, k: int = 0, *, fid: FactorId | None = None) -> Factor:
    v = target_state(target, k)
    pot = CanonicalGaussian.from_moments(mean, cov, v.dims())
    return Factor(_fid(fid, FactorOrigin.PRIOR), pot)


@dataclass(frozen=True)
class RelativePositionMeasurement:
    """``y = [X_robot - X_target, Y_robot - Y_target] + v``, ``v ~ N(0, R)``."""

    robot: int
    target: int
    step: int
    y: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(2))
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2):
            raise DimensionError("measurement noise must be 2x2")
        object.__setattr__(self, "R", R)


_RELATIVE = np.hstack([np.eye(2), -np.eye(2)])


def relative_position_potential(first: VariableId, second: VariableId, y, R) -> CanonicalGaussian:
    """Potential for ``y = pos(first) - pos(second) + v``."""
    dims = position_dims(first) + position_dims(second)
    return linear_gaussian_potential(dims, _RELATIVE, y, R)


def measurement_factor(
    m: RelativePositionMeasurement,
    robot_pose_var: VariableId,
    target_var: VariableId | None = None,
    *,
    fid: FactorId | None = None,
) -> Factor:
    """Robot-to-target relative position factor (position dims only)."""
    if target_var is None:
        target_var = target_state(m.target, m.step)
    if robot_pose_var.kind != "pose" or target_var.kind != "target":
        raise DimensionError("measurement factor needs a pose and a target variable")
    pot = relative_position_potential(robot_pose_var, target_var, m.y, m.R)
    return Factor(_fid(fid, FactorOrigin.LOCAL_MEASUREMENT), pot)


# -- robot / map models used by the SLAM engines ---------------------------


def pose_prior_factor(pose: VariableId, mean, cov, *, fid: FactorId | None = None) -> Factor:
    pot = CanonicalGaussian.from_moments(mean, cov, pose.dims())
    return Factor(_fid(fid, FactorOrigin.PRIOR), pot)


def odometry_factor(prev: VariableId, cur: VariableId, delta, cov, *, fid: FactorId | None = None) -> Factor:
    """``pose[k] - pose[k-1] = delta + n`` in world coordinates (x, y, heading)."""
    A = np.hstack([-np.eye(3), np.eye(3)])
    pot = linear_gaussian_potential(prev.dims() + cur.dims(), A, delta, cov)
    return Factor(_fid(fid, FactorOrigin.ODOMETRY), pot)


def landmark_factor(pose: VariableId, lm: VariableId, y, R, *, fid: FactorId | None = None) -> Factor:
    """Same sign convention as the target measurement: ``pose - landmark``."""
    pot = relative_position_potential(pose, lm, y, R)
    return Factor(_fid(fid, FactorOrigin.LOCAL_MEASUREMENT), pot)


def pose_fix_factor(pose: VariableId, z, cov, *, fid: FactorId | None = None) -> Factor:
    """Absolute pose fix (GPS-like); stands in for a loop closure."""
    pot = linear_gaussian_potential(pose.dims(), np.eye(3), z, cov)
    return Factor(_fid(fid, FactorOrigin.LOCAL_MEASUREMENT), pot)
