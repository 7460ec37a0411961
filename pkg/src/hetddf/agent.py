"""
One robot's inner loop: SLAM engine, tracking graph and channel filters.

The robot's full local posterior is split across two graphs joined at the
ego poses at which targets were seen::

    p(poses, map, targets) = p_slam(poses, map) * p_track(poses, targets) / p_common(poses)

``p_common`` is held by the internal channel filter. Pose information moves
SLAM -> tracking (the "blue" factor) whenever the SLAM pose marginal changes
and tracking -> SLAM (the "orange" factor) once per step after new target
data (measurements or peer fusion). Both directions divide by the channel's
common density first, so neither module ever counts the other's data twice.

Peers exchange marginals over their common targets only; see
:mod:`hetddf.fusion`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .channel_filter import ChannelFilter
from .errors import ChannelError, ConfigError, HetDDFError, StepError
from .factor_graph import (
    Factor,
    FactorGraph,
    FactorId,
    FactorIdSource,
    FactorOrigin,
    VariableId,
    VariablePartition,
    dims_of,
    robot_pose,
    target_state,
)
from .fusion import FusionMessage, fuse, fused_common, prepare_message
from .gaussian import CanonicalGaussian, divide, marginalize, multiply
from .models import TargetDynamics, dynamics_factor, measurement_factor, target_prior_factor
from .slam import SlamEngine

ROLL_BATCH = 10
TARGET_HISTORY_MODES = ("common", "full")


@dataclass(frozen=True)
class TargetPrior:
    """What a robot knows about a target before any measurement."""

    mean: np.ndarray
    cov: np.ndarray
    inputs: np.ndarray | None = None  # (steps, 2) acceleration script

    def input_at(self, k: int) -> np.ndarray:
        if self.inputs is None or k >= len(self.inputs):
            return np.zeros(2)
        return np.asarray(self.inputs[k], dtype=float)


class RobotAgent:
    """Inner-loop state machine for robot ``robot``.

    Parameters
    ----------
    slam : SlamEngine
        Local SLAM engine; any implementation of the engine interface works.
    targets : mapping target id -> TargetPrior
        Targets this robot tracks.
    dynamics : TargetDynamics
        Target motion model shared by all robots.
    partition : VariablePartition
        Which targets are common with which neighbour.
    detection_range : float
        Sensor range in metres (used by the world to gate measurements).
    detection_steps : (start, stop), optional
        Only use target measurements with ``start <= k < stop``.
    target_history : "common" or "full"
        ``"common"`` keeps the state history of common targets (needed for
        exact fusion) and rolls local targets forward by elimination.
        ``"full"`` keeps every target state.
    """

    def __init__(
        self,
        robot: int,
        slam: SlamEngine,
        targets: Mapping[int, TargetPrior],
        dynamics: TargetDynamics,
        partition: VariablePartition | None = None,
        *,
        detection_range: float = 8.0,
        detection_steps: tuple[int, int] | None = None,
        target_history: str = "common",
        ids: FactorIdSource | None = None,
    ):
        if target_history not in TARGET_HISTORY_MODES:
            raise ConfigError(f"target_history must be one of {TARGET_HISTORY_MODES}")
        if slam.robot != robot:
            raise ConfigError(f"engine belongs to robot {slam.robot}, not {robot}")
        self.robot = robot
        self.slam = slam
        self.ids = ids if ids is not None else slam.ids
        self.targets = {int(t): p for t, p in sorted(targets.items())}
        self.dynamics = dynamics
        self.partition = partition or VariablePartition(robot, frozenset(self.targets))
        if set(self.partition.targets) != set(self.targets):
            raise ConfigError(f"robot {robot}: partition targets differ from tracked targets")
        self.detection_range = float(detection_range)
        self.detection_steps = detection_steps
        self.target_history = target_history
        self.current_step = -1

        self.tracking = FactorGraph(f"tracking[{robot}]")
        self.tracking_natives: list[Factor] = []
        self.internal_cf = ChannelFilter(("tracking", "slam"))
        self.neighbor_cfs: dict[int, ChannelFilter] = {}
        self._blue_acc: FactorId | None = None
        self._fusion_acc: dict[int, FactorId] = {}
        self._outbox: dict[int, FusionMessage] = {}
        self._dirty = False
        self._target_marginal: CanonicalGaussian | None = None
        self._stale: dict[int, list[VariableId]] = {}
        self.fusion_hooks: list[Callable[[RobotAgent, FusionMessage, FactorGraph], None]] = []

        for t, prior in self.targets.items():
            self.tracking.add_variable(target_state(t, 0))
            self._add_native(target_prior_factor(t, prior.mean, prior.cov, 0, fid=self.ids(FactorOrigin.PRIOR)))
        for j, common in sorted(self.partition.common.items()):
            if not common:
                continue
            cf = ChannelFilter((robot, j), [target_state(t, 0) for t in sorted(common)])
            for f in self.tracking_natives:
                if f.scope[0].owner in common:
                    cf.absorb(f.potential)
            self.neighbor_cfs[j] = cf

    # -- helpers ----------------------------------------------------------
    def _add_native(self, factor: Factor) -> None:
        self.tracking.add_factor(factor)
        self.tracking_natives.append(factor)

    def _add_or_absorb(self, acc: FactorId | None, factor: Factor) -> FactorId:
        if acc is None:
            self.tracking.add_factor(factor)
            return factor.id
        self.tracking.absorb_into(acc, factor)
        return acc

    @property
    def neighbors(self) -> list[int]:
        return sorted(self.neighbor_cfs)

    def sensing(self, k: int) -> bool:
        if self.detection_steps is None:
            return True
        start, stop = self.detection_steps
        return start <= k < stop

    def pose_steps(self) -> list[int]:
        """Timesteps whose ego pose lives in the tracking graph."""
        return sorted(v.index for v in self.internal_cf.shared)

    # -- per-step pipeline -------------------------------------------------
    def step(self, k: int, obs) -> None:
        """Steps 2-5 and 7 of the inner loop for time ``k``.

        The orange factor is held back until :meth:`complete_step` so that
        measurement and fusion updates of one step travel to SLAM together.
        """
        if k != self.current_step + 1:
            raise StepError(f"robot {self.robot}: step {k} after {self.current_step}")
        if getattr(obs, "robot", self.robot) != self.robot or getattr(obs, "step", k) != k:
            raise StepError(f"robot {self.robot}: observation bundle is for robot {obs.robot} step {obs.step}")
        self._target_marginal = None
        try:
            self.slam.advance(getattr(obs, "odometry", None), obs, k)
            if k > 0:
                for t in self.targets:
                    self._predict(t, k)
            self.current_step = k
            detections = [m for m in getattr(obs, "targets", ()) if m.target in self.targets]
            if not self.sensing(k):
                detections = []
            pose = robot_pose(self.robot, k)
            if detections:
                self.tracking.add_variable(pose)
                self.internal_cf.extend_shared([pose])
            if self.internal_cf.shared:
                self._send_blue()
            for m in detections:
                if m.step != k:
                    raise StepError(f"measurement of target {m.target} stamped {m.step}, expected {k}")
                self._add_native(measurement_factor(m, pose, target_state(m.target, k), fid=self.ids(FactorOrigin.LOCAL_MEASUREMENT)))
                self._dirty = True
        except StepError:
            raise
        except HetDDFError as exc:
            raise StepError(f"robot {self.robot} step {k}: {exc}") from exc

    def _predict(self, t: int, k: int) -> None:
        prev, cur = target_state(t, k - 1), target_state(t, k)
        self.tracking.add_variable(cur)
        f = dynamics_factor(self.dynamics, t, k - 1, self.targets[t].input_at(k - 1), fid=self.ids(FactorOrigin.DYNAMICS))
        self._add_native(f)
        for j, cf in self.neighbor_cfs.items():
            if t in self.partition.common[j]:
                cf.extend_shared([cur])
                cf.absorb(f.potential)
        if self.target_history == "common" and t in self.partition.local_targets:
            # past local states go in batches: one large elimination instead of many
            stale = self._stale.setdefault(t, [])
            stale.append(prev)
            if len(stale) >= ROLL_BATCH:
                self.tracking.eliminate(stale, self.ids(FactorOrigin.MARGINAL))
                stale.clear()

    def _send_blue(self) -> None:
        blue = self.slam.pose_marginal(self.pose_steps())
        novel = Factor(blue.id, self.internal_cf.novel(blue.potential), blue.provenance)
        self._blue_acc = self._add_or_absorb(self._blue_acc, novel)
        self.internal_cf.update_common(blue.potential)

    def complete_step(self) -> None:
        """Step 7-8: pass new tracking pose information back to SLAM."""
        if not self._dirty or not self.internal_cf.shared:
            self._dirty = False
            return
        poses = list(self.internal_cf.shared)
        current = self.current_targets()
        if current:
            both, self._target_marginal = self.tracking.nested_marginals(poses, current)
            marg = marginalize(both, dims_of(poses))
        else:
            marg = self.tracking.marginal(poses)
        novel = self.internal_cf.novel(marg)
        self.slam.integrate_pose_factor(
            Factor(self.ids(FactorOrigin.POSE_FROM_TRACKING), novel, self.tracking.provenance())
        )
        self.internal_cf.update_common(marg)
        self._dirty = False

    # -- peer fusion ----------------------------------------------------------
    def channel(self, neighbor: int) -> ChannelFilter:
        try:
            return self.neighbor_cfs[neighbor]
        except KeyError:
            raise ChannelError(f"robot {self.robot} has no channel to robot {neighbor}") from None

    def prepare(self, neighbor: int, k: int, round_index: int = 0) -> FusionMessage:
        """Marginal over the targets common with ``neighbor``."""
        if k != self.current_step:
            raise StepError(f"robot {self.robot} is at step {self.current_step}, not {k}")
        cf = self.channel(neighbor)
        msg = prepare_message(
            self.tracking, cf, neighbor, k, msg_id=f"{self.robot}>{neighbor}@{k}.{round_index}"
        )
        self._outbox[neighbor] = msg
        return msg

    def receive(self, incoming: FusionMessage) -> Factor:
        """Fuse a neighbour's message; returns the factor added to tracking.

        A message already received on this channel (same id) changes nothing.
        """
        cf = self.channel(incoming.sender)
        if incoming.msg_id in cf.messages:
            return Factor(self.ids(FactorOrigin.FUSION_RESULT), CanonicalGaussian.flat(incoming.marginal.dims), incoming.provenance)
        own = self._outbox.pop(incoming.sender, None)
        if own is None:
            raise ChannelError(f"robot {self.robot} received from {incoming.sender} without sending")
        before = self.tracking.copy() if self.fusion_hooks else None
        self._target_marginal = None
        factor = fuse(self.tracking, cf, incoming, fid=self.ids(FactorOrigin.FUSION_RESULT))
        common = fused_common(cf, own, incoming)
        self._fusion_acc[incoming.sender] = self._add_or_absorb(self._fusion_acc.get(incoming.sender), factor)
        cf.update_common(common)
        cf.record(own.provenance | incoming.provenance, incoming.msg_id)
        self._dirty = True
        for hook in self.fusion_hooks:
            hook(self, incoming, before)
        return factor

    # -- views ------------------------------------------------------------------
    def local_joint(self) -> CanonicalGaussian:
        """Full local posterior ``joint(slam) * joint(tracking) / common``."""
        prod = multiply(self.slam.graph.joint(), self.tracking.joint())
        common = self.internal_cf.common
        if not common.dims:
            return prod
        return divide(prod, common)

    def native_factors(self) -> list[Factor]:
        """Every factor this robot created from its own data or model."""
        return list(self.slam.native_factors) + list(self.tracking_natives)

    def current_targets(self) -> list[VariableId]:
        return [target_state(t, self.current_step) for t in self.targets]

    def common_target_marginal(self, neighbor: int | None = None) -> CanonicalGaussian:
        """Marginal over the current state of the common targets."""
        ts = self.partition.common_targets if neighbor is None else self.partition.common[neighbor]
        return self.tracking.marginal([target_state(t, self.current_step) for t in sorted(ts)])

    def target_estimates(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Mean and covariance of every tracked target at the current step."""
        vs = self.current_targets()
        if not vs:
            return {}
        if self._target_marginal is None:
            self._target_marginal = self.tracking.marginal(vs)
        g = self._target_marginal
        mean, cov = g.to_moments()
        out = {}
        for v in vs:
            idx = g.index(v.dims())
            out[v.owner] = (mean[idx], cov[np.ix_(idx, idx)])
        return out

    def state_record(self) -> dict:
        """One JSON-able line of the per-agent state log."""
        k = self.current_step
        pose_mean, pose_cov = self.slam.pose_moments(k)
        return {
            "robot": self.robot,
            "step": k,
            "engine": self.slam.kind,
            "pose": {"mean": pose_mean.tolist(), "cov": pose_cov.tolist()},
            "targets": {
                str(t): {"mean": m.tolist(), "cov": c.tolist()} for t, (m, c) in self.target_estimates().items()
            },
            "channels": {
                "internal": self.internal_cf.summary(),
                **{str(j): cf.summary() for j, cf in self.neighbor_cfs.items()},
            },
        }

    def write_state(self, fh) -> None:
        fh.write(json.dumps(self.state_record()) + "\n")


def exchange(a: RobotAgent, b: RobotAgent, k: int, round_index: int = 0) -> tuple[Factor, Factor]:
    """Symmetric fusion between two agents at step ``k``."""
    ma = a.prepare(b.robot, k, round_index)
    mb = b.prepare(a.robot, k, round_index)
    return a.receive(mb), b.receive(ma)


def tracked_targets(agents: Iterable[RobotAgent]) -> dict[int, list[int]]:
    """Target id -> robots tracking it."""
    out: dict[int, list[int]] = {}
    for ag in agents:
        for t in ag.targets:
            out.setdefault(t, []).append(ag.robot)
    return out
