"""
Channel filters: the information two endpoints already have in common.

A channel links two estimators that share some variables (two robots over
their common targets, or a robot's SLAM and tracking modules over the poses
at which targets were seen). The filter holds the common density over the
shared variables. Whatever one endpoint sends is first divided by it, so
only new information crosses the link; after a synchronizing exchange the
common density is replaced by the fused marginal. On tree topologies this
is the exact recursion.
"""

from __future__ import annotations

from typing import Hashable, Iterable

from .errors import ChannelError, DimensionError
from .factor_graph import FactorId, VariableId, dims_of, gaussian_to_dict
from .gaussian import CanonicalGaussian, divide, marginalize, multiply_subset


class ChannelFilter:
    """Common-information state for one side of a link.

    Parameters
    ----------
    endpoints : (own, peer)
        Identifiers of the two ends; ``own`` is the holder of this copy.
    shared : iterable of VariableId
        Initial shared variables.
    common : CanonicalGaussian, optional
        Initial common density over (a subset of) the shared dims; flat when
        omitted.
    """

    def __init__(
        self,
        endpoints: tuple[Hashable, Hashable],
        shared: Iterable[VariableId] = (),
        common: CanonicalGaussian | None = None,
    ):
        self.endpoints = tuple(endpoints)
        self._shared: list[VariableId] = []
        self.common = CanonicalGaussian.flat(())
        self.log: set[FactorId] = set()
        self.messages: list = []
        self.extend_shared(shared)
        if common is not None:
            self.absorb(common)

    @property
    def owner(self) -> Hashable:
        return self.endpoints[0]

    @property
    def peer(self) -> Hashable:
        return self.endpoints[1]

    @property
    def shared(self) -> tuple[VariableId, ...]:
        return tuple(self._shared)

    @property
    def shared_dims(self) -> tuple:
        return self.common.dims

    def novel(self, outgoing: CanonicalGaussian) -> CanonicalGaussian:
        """The part of ``outgoing`` the peer does not already hold."""
        if outgoing.dims == self.common.dims:
            return divide(outgoing, self.common)
        if set(outgoing.dims) == set(self.common.dims):
            return divide(outgoing, self.common.reorder(outgoing.dims))
        if not self.common.has_dims(outgoing.dims):
            raise DimensionError(f"channel {self.endpoints}: message dims are not shared dims")
        return divide(outgoing, marginalize(self.common, outgoing.dims).reorder(outgoing.dims))

    def update_common(self, fused: CanonicalGaussian) -> None:
        """Replace the common density by the post-exchange marginal."""
        if set(fused.dims) != set(self.common.dims):
            if not self.common.has_dims(fused.dims):
                raise DimensionError(f"channel {self.endpoints}: fused marginal over non-shared dims")
            fused = fused.extend(self.common.dims)
        self.common = fused if fused.dims == self.common.dims else fused.reorder(self.common.dims)

    def extend_shared(self, new_vars: Iterable[VariableId]) -> None:
        new_vars = list(new_vars)
        overlap = set(new_vars) & set(self._shared)
        if overlap or len(set(new_vars)) != len(new_vars):
            raise ChannelError(f"channel {self.endpoints}: {sorted(overlap)} already shared")
        if not new_vars:
            return
        self._shared.extend(new_vars)
        self.common = self.common.extend(dims_of(sorted(self._shared)))

    def absorb(self, potential: CanonicalGaussian) -> None:
        """Multiply in information both endpoints add identically.

        Priors and target dynamics are known to both robots; putting the same
        factor into the common density keeps them from being counted twice
        when the two posteriors are combined.
        """
        if not self.common.has_dims(potential.dims):
            raise DimensionError(f"channel {self.endpoints}: potential over non-shared dims")
        self.common = multiply_subset(self.common, potential)

    def record(self, provenance: Iterable[FactorId], message_id=None) -> None:
        self.log.update(provenance)
        if message_id is not None:
            self.messages.append(message_id)

    def summary(self) -> dict:
        lam = self.common.info_matrix
        return {
            "endpoints": list(self.endpoints),
            "shared_variables": len(self._shared),
            "dims": self.common.size,
            "info_trace": float(lam.trace()) if lam.size else 0.0,
            "messages": len(self.messages),
        }

    def to_dict(self) -> dict:
        return {
            "schema": "hetddf.channel/1",
            "endpoints": [str(e) for e in self.endpoints],
            "shared": [[v.kind, v.owner, v.index] for v in self._shared],
            "common": gaussian_to_dict(self.common),
            "log": sorted(f.to_json() for f in self.log),
        }
