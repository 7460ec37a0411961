"""
Heterogeneous peer-to-peer fusion over common targets.

Robot ``i`` receives its neighbour's marginal over the targets they both
track, divides out what the channel filter says they already share, and adds
the quotient to its tracking graph as a single factor over the common-target
dims. No factor touches the non-mutual variables (poses, map, targets the
neighbour does not track), so their conditional given the common targets is
left exactly as it was; they move only through their correlation with the
common targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .channel_filter import ChannelFilter
from .errors import ChannelError, DimensionError
from .factor_graph import (
    Factor,
    FactorGraph,
    FactorId,
    FactorOrigin,
    _anonymous_ids,
    gaussian_from_dict,
    gaussian_to_dict,
)
from .gaussian import CanonicalGaussian


@dataclass(frozen=True)
class FusionMessage:
    """A neighbour's marginal over the channel's shared target dims.

    ``provenance`` names the native factors behind the marginal and stands in
    for the sender's data set.
    """

    sender: int
    receiver: int
    step: int
    marginal: CanonicalGaussian
    provenance: frozenset = frozenset()
    msg_id: str = ""

    def to_dict(self) -> dict:
        return {
            "schema": "hetddf.fusion-message/1",
            "id": self.msg_id,
            "sender": self.sender,
            "receiver": self.receiver,
            "step": self.step,
            **gaussian_to_dict(self.marginal),
            "provenance": sorted(p.to_json() for p in self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> FusionMessage:
        return cls(
            sender=int(data["sender"]),
            receiver=int(data["receiver"]),
            step=int(data["step"]),
            marginal=gaussian_from_dict(data),
            provenance=frozenset(FactorId.from_json(p) for p in data.get("provenance", ())),
            msg_id=str(data["id"]),
        )

    @classmethod
    def from_json(cls, text: str) -> FusionMessage:
        return cls.from_dict(json.loads(text))


def prepare_message(
    local_graph: FactorGraph, cf: ChannelFilter, neighbor: int, k: int, *, msg_id: str = ""
) -> FusionMessage:
    """Marginal of the local graph over everything shared with ``neighbor``."""
    if cf.peer != neighbor:
        raise ChannelError(f"channel {cf.endpoints} does not lead to robot {neighbor}")
    shared = [v for v in cf.shared if v in local_graph]
    if not shared:
        raise ChannelError(f"robot {cf.owner} shares no target variables with robot {neighbor}")
    return FusionMessage(
        sender=cf.owner,
        receiver=neighbor,
        step=k,
        marginal=local_graph.marginal(shared),
        provenance=local_graph.provenance(),
        msg_id=msg_id or f"{cf.owner}>{neighbor}@{k}",
    )


def is_redundant(cf: ChannelFilter, incoming: FusionMessage) -> bool:
    """Everything behind ``incoming`` has already crossed this channel."""
    return bool(incoming.provenance) and incoming.provenance <= cf.log


def fuse(
    local_graph: FactorGraph,
    cf: ChannelFilter,
    incoming: FusionMessage,
    *,
    fid: FactorId | None = None,
) -> Factor:
    """Factor that turns the local common-target marginal into the fused one.

    The potential is ``incoming / common``. The caller adds it to the graph and
    then moves the channel filter to the post-fusion common marginal (see
    :func:`fused_common`).
    """
    if incoming.sender != cf.peer or incoming.receiver != cf.owner:
        raise ChannelError(
            f"message {incoming.sender}->{incoming.receiver} arrived on channel {cf.endpoints}"
        )
    owners = {d.owner for d in incoming.marginal.dims}
    missing = [v for v in owners if v not in local_graph]
    if missing:
        raise DimensionError(f"message covers variables not in the local graph: {missing[:3]}")
    fid = fid if fid is not None else _anonymous_ids(FactorOrigin.FUSION_RESULT)
    if is_redundant(cf, incoming):
        return Factor(fid, CanonicalGaussian.flat(incoming.marginal.dims), incoming.provenance)
    return Factor(fid, cf.novel(incoming.marginal), incoming.provenance)


def fused_common(cf: ChannelFilter, a: FusionMessage, b: FusionMessage) -> CanonicalGaussian:
    """Post-exchange common density ``p_a * p_b / p_common``.

    The two messages are summed in sender order so both endpoints compute
    bit-identical parameters.
    """
    lo, hi = sorted((a, b), key=lambda m: m.sender)
    dims = cf.common.dims
    m_lo = lo.marginal if lo.marginal.dims == dims else lo.marginal.reorder(dims)
    m_hi = hi.marginal if hi.marginal.dims == dims else hi.marginal.reorder(dims)
    return CanonicalGaussian(
        dims,
        (m_lo.info_matrix + m_hi.info_matrix) - cf.common.info_matrix,
        (m_lo.info_vector + m_hi.info_vector) - cf.common.info_vector,
    )
