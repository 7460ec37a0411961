"""
Linear-Gaussian factor graphs with provenance.

The graph is an organized factorization: its joint is the product of the
factor potentials and every marginal is a Schur complement of that joint.
The dense joint is cached and updated in place as factors come and go, which
keeps per-step queries cheap at desk scale (a few hundred dims).
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, NamedTuple

import numpy as np
from scipy import linalg

from .errors import GraphError, UnobservableEliminationError
from .gaussian import CanonicalGaussian, DimKey, marginalize, schur_complement

VARIABLE_DIMS = {"pose": 3, "landmark": 2, "target": 4}


class VariableId(NamedTuple):
    """A random variable. ``kind`` fixes the dimension.

    ``pose``: owner = robot, index = timestep (x, y, heading).
    ``landmark``: owner = robot, index = landmark number (x, y).
    ``target``: owner = target, index = timestep (X, Xdot, Y, Ydot).
    """

    kind: str
    owner: int
    index: int

    @property
    def dim(self) -> int:
        return VARIABLE_DIMS[self.kind]

    def dims(self) -> tuple[DimKey, ...]:
        return _variable_dims(self)

    def __str__(self) -> str:
        return f"{self.kind}[{self.owner}:{self.index}]"


@functools.lru_cache(maxsize=1 << 16)
def _variable_dims(v: VariableId) -> tuple[DimKey, ...]:
    return tuple(DimKey(v, c) for c in range(VARIABLE_DIMS[v.kind]))


def robot_pose(robot: int, k: int) -> VariableId:
    return VariableId("pose", robot, k)


def landmark(robot: int, idx: int) -> VariableId:
    return VariableId("landmark", robot, idx)


def target_state(target: int, k: int) -> VariableId:
    return VariableId("target", target, k)


def dims_of(variables: Iterable[VariableId]) -> tuple[DimKey, ...]:
    out: list[DimKey] = []
    for v in variables:
        if v.kind not in VARIABLE_DIMS:
            raise GraphError(f"unknown variable kind {v.kind!r}")
        out.extend(v.dims())
    return tuple(out)


def position_dims(v: VariableId) -> tuple[DimKey, DimKey]:
    """The (x, y) components of a pose, landmark or target variable."""
    if v.kind == "target":
        return DimKey(v, 0), DimKey(v, 2)
    return DimKey(v, 0), DimKey(v, 1)


class FactorOrigin(str, Enum):
    LOCAL_MEASUREMENT = "local_measurement"
    ODOMETRY = "odometry"
    PRIOR = "prior"
    DYNAMICS = "dynamics"
    POSE_FROM_SLAM = "pose_from_slam"
    POSE_FROM_TRACKING = "pose_from_tracking"
    FUSION_RESULT = "fusion_result"
    # variable elimination of a rolled-out state
    MARGINAL = "marginal"


NATIVE_ORIGINS = frozenset(
    {FactorOrigin.LOCAL_MEASUREMENT, FactorOrigin.ODOMETRY, FactorOrigin.PRIOR, FactorOrigin.DYNAMICS}
)


class FactorId(NamedTuple):
    origin: FactorOrigin
    robot: int
    seq: int

    def to_json(self) -> list:
        return [self.origin.value, self.robot, self.seq]

    @classmethod
    def from_json(cls, data) -> FactorId:
        origin, robot, seq = data
        return cls(FactorOrigin(origin), int(robot), int(seq))


class FactorIdSource:
    """Hands out unique factor ids for one robot (or the oracle)."""

    def __init__(self, robot: int):
        self.robot = robot
        self._seq = itertools.count()

    def __call__(self, origin: FactorOrigin) -> FactorId:
        return FactorId(origin, self.robot, next(self._seq))


_anonymous_ids = FactorIdSource(-1)


@dataclass(frozen=True)
class Factor:
    """A Gaussian potential plus the bookkeeping that names its data.

    ``provenance`` is the set of native factor ids whose information the
    potential carries. Native factors name themselves; derived factors
    (pose transfers, fusion results, eliminations) inherit the union of
    their sources.
    """

    id: FactorId
    potential: CanonicalGaussian
    provenance: frozenset = field(default=None)  # type: ignore[assignment]
    merged: tuple = ()

    def __post_init__(self):
        if self.provenance is None:
            object.__setattr__(self, "provenance", frozenset({self.id}))

    @property
    def origin(self) -> FactorOrigin:
        return self.id.origin

    @functools.cached_property
    def scope(self) -> tuple[VariableId, ...]:
        seen: dict[VariableId, None] = {}
        for d in self.potential.dims:
            seen.setdefault(d.owner, None)
        return tuple(seen)


class FactorGraph:
    """Variables plus Gaussian factors; joint = product of potentials."""

    def __init__(self, name: str = ""):
        self.name = name
        self._variables: dict[VariableId, None] = {}
        self._factors: dict[FactorId, Factor] = {}
        self._log: list[FactorId] = []
        self._dims: list[DimKey] = []
        self._pos: dict[DimKey, int] = {}
        self._lam = np.zeros((16, 16))
        self._eta = np.zeros(16)
        self._sorted: np.ndarray | None = None
        self._provenance: frozenset | None = frozenset()
        self._acc: dict[FactorId, _Accumulator] = {}

    # -- structure ------------------------------------------------------
    @property
    def variables(self) -> tuple[VariableId, ...]:
        return tuple(self._variables)

    @property
    def factors(self) -> tuple[Factor, ...]:
        self._flush()
        return tuple(self._factors.values())

    @property
    def size(self) -> int:
        return len(self._dims)

    @property
    def added_ids(self) -> tuple[FactorId, ...]:
        """Every factor id ever added or absorbed, in order (audit log)."""
        return tuple(self._log)

    def __contains__(self, v: VariableId) -> bool:
        return v in self._variables

    def factor(self, fid: FactorId) -> Factor:
        self._flush()
        return self._factors[fid]

    def variables_of_kind(self, kind: str) -> list[VariableId]:
        return [v for v in self._variables if v.kind == kind]

    def add_variable(self, vid: VariableId) -> None:
        if vid in self._variables:
            raise GraphError(f"variable {vid} already present")
        new = vid.dims()
        n0 = len(self._dims)
        n1 = n0 + len(new)
        if n1 > self._lam.shape[0]:
            cap = max(2 * self._lam.shape[0], n1)
            lam = np.zeros((cap, cap))
            eta = np.zeros(cap)
            lam[:n0, :n0] = self._lam[:n0, :n0]
            eta[:n0] = self._eta[:n0]
            self._lam, self._eta = lam, eta
        for i, d in enumerate(new):
            self._pos[d] = n0 + i
        self._dims.extend(new)
        self._variables[vid] = None
        self._sorted = None

    def _indices(self, dims: Iterable[DimKey]) -> np.ndarray:
        return np.fromiter((self._pos[d] for d in dims), dtype=np.intp)

    def _check_scope(self, factor: Factor) -> None:
        for v in factor.scope:
            if v not in self._variables:
                raise GraphError(f"factor {factor.id} touches unknown variable {v}")

    def _accumulate(self, g: CanonicalGaussian, sign: float = 1.0) -> None:
        idx = self._indices(g.dims)
        if sign > 0:
            self._lam[np.ix_(idx, idx)] += g.info_matrix
            self._eta[idx] += g.info_vector
        else:
            self._lam[np.ix_(idx, idx)] -= g.info_matrix
            self._eta[idx] -= g.info_vector

    def add_factor(self, factor: Factor) -> None:
        if factor.id in self._factors:
            raise GraphError(f"factor {factor.id} already present")
        self._check_scope(factor)
        self._factors[factor.id] = factor
        self._log.append(factor.id)
        self._accumulate(factor.potential)
        if self._provenance is not None:
            self._provenance = self._provenance | factor.provenance

    def absorb_into(self, target: FactorId, factor: Factor) -> None:
        """Multiply ``factor`` into the stored factor ``target``.

        The joint changes exactly as if ``factor`` had been added on its own;
        only the storage is merged. Used for running accumulators (pose
        transfers, fusion results) that would otherwise pile up dense copies.
        The merged potential lives in a growable buffer and is materialized
        only when the factor is read.
        """
        if target not in self._factors:
            raise GraphError(f"no factor {target}")
        self._check_scope(factor)
        buf = self._acc.get(target)
        if buf is None:
            buf = self._acc[target] = _Accumulator(self._factors[target])
        buf.add(factor)
        self._log.append(factor.id)
        self._accumulate(factor.potential)
        if self._provenance is not None:
            self._provenance = self._provenance | factor.provenance

    def _flush(self) -> None:
        """Write pending accumulator contents back into their factors."""
        for fid, buf in self._acc.items():
            if buf.dirty:
                self._factors[fid] = buf.factor()

    def remove_factor(self, fid: FactorId) -> Factor:
        self._flush()
        self._acc.pop(fid, None)
        try:
            factor = self._factors.pop(fid)
        except KeyError:
            raise GraphError(f"no factor {fid}") from None
        self._accumulate(factor.potential, sign=-1.0)
        self._provenance = None
        return factor

    def factors_touching(self, variables: Iterable[VariableId]) -> list[Factor]:
        self._flush()
        vs = set(variables)
        return [f for f in self._factors.values() if vs.intersection(f.scope)]

    def provenance(self) -> frozenset:
        if self._provenance is None:
            out: set = set()
            for f in self._factors.values():
                out.update(f.provenance)
            self._provenance = frozenset(out)
        return self._provenance

    # -- queries --------------------------------------------------------
    def _sorted_order(self) -> np.ndarray:
        if self._sorted is None:
            self._sorted = np.array(
                sorted(range(len(self._dims)), key=self._dims.__getitem__), dtype=np.intp
            )
        return self._sorted

    def joint(self) -> CanonicalGaussian:
        """Product of all potentials over every variable (canonical dim order)."""
        order = self._sorted_order()
        return CanonicalGaussian(
            [self._dims[i] for i in order],
            self._lam[np.ix_(order, order)],
            self._eta[order],
        )

    def _split(self, variables: Iterable[VariableId]) -> tuple[list[DimKey], np.ndarray, np.ndarray]:
        vs = set(variables)
        for v in vs:
            if v not in self._variables:
                raise GraphError(f"variable {v} not in graph")
        keep = [d for v in sorted(vs) for d in v.dims()]
        ki = self._indices(keep)
        mask = np.ones(len(self._dims), dtype=bool)
        mask[ki] = False
        return keep, ki, np.flatnonzero(mask)

    def marginal(self, variables: Iterable[VariableId]) -> CanonicalGaussian:
        """Marginal over ``variables`` via Schur elimination of everything else."""
        keep, ki, ei = self._split(variables)
        n = len(self._dims)
        lam, eta = self._lam[:n, :n], self._eta[:n]
        if ei.size == 0:
            return CanonicalGaussian(keep, lam[np.ix_(ki, ki)], eta[ki])
        try:
            new_lam, new_eta = schur_complement(lam, eta, ki, ei)
        except UnobservableEliminationError as exc:
            raise UnobservableEliminationError(f"{self.name or 'graph'}: {exc}") from None
        return CanonicalGaussian._trusted(tuple(keep), new_lam, new_eta)

    def nested_marginals(
        self, outer: Iterable[VariableId], inner: Iterable[VariableId]
    ) -> tuple[CanonicalGaussian, CanonicalGaussian]:
        """Marginals over ``outer + inner`` and over ``inner`` alone.

        The second comes from the first, so the large elimination runs once.
        """
        outer, inner = list(outer), list(inner)
        if set(outer) & set(inner):
            raise GraphError("outer and inner variable sets overlap")
        both = self.marginal(outer + inner)
        return both, marginalize(both, dims_of(inner))

    def moments(self, variables: Iterable[VariableId]) -> tuple[tuple[DimKey, ...], np.ndarray, np.ndarray]:
        """Mean and covariance of ``variables`` from one Cholesky of the joint."""
        keep, ki, _ = self._split(variables)
        n = len(self._dims)
        try:
            c = linalg.cho_factor(self._lam[:n, :n], lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise UnobservableEliminationError(
                f"{self.name or 'graph'}: joint information matrix is not positive definite"
            ) from exc
        rhs = np.zeros((n, ki.size + 1))
        rhs[ki, np.arange(ki.size)] = 1.0
        rhs[:, -1] = self._eta[:n]
        sol = linalg.cho_solve(c, rhs, check_finite=False)
        cov = sol[ki, :-1]
        return tuple(keep), sol[ki, -1], 0.5 * (cov + cov.T)

    # -- elimination ----------------------------------------------------
    def eliminate(self, variables: Iterable[VariableId], fid: FactorId) -> Factor | None:
        """Marginalize ``variables`` out of the graph itself.

        All factors touching them are replaced by one factor (id ``fid``,
        origin normally MARGINAL) over the remaining neighbours.
        """
        vs = list(variables)
        for v in vs:
            if v not in self._variables:
                raise GraphError(f"variable {v} not in graph")
        touching = self.factors_touching(vs)
        gone = {d for v in vs for d in v.dims()}
        product = _sum_potentials([f.potential for f in touching])
        keep_dims = [d for d in product.dims if d not in gone]
        new = None
        if keep_dims:
            pot = marginalize(product, keep_dims)
            prov = frozenset().union(*(f.provenance for f in touching))
            new = Factor(fid, pot, prov, tuple(f.id for f in touching))
        for f in touching:
            del self._factors[f.id]
            self._acc.pop(f.id, None)
        if touching:
            self._provenance = None
        # the cache minus the touching factors, restricted to their kept dims
        if keep_dims:
            ki = self._indices(keep_dims)
            pi = product.index(keep_dims)
            self._lam[np.ix_(ki, ki)] -= product.info_matrix[np.ix_(pi, pi)]
            self._eta[ki] -= product.info_vector[pi]
        self._drop_dims(gone)
        for v in vs:
            del self._variables[v]
        self._sorted = None
        if new is not None:
            self.add_factor(new)
        return new

    def _drop_dims(self, gone: set) -> None:
        """Remove dims from the dense cache by moving trailing dims into the holes."""
        n = len(self._dims)
        holes = sorted((self._pos[d] for d in gone), reverse=True)
        lam, eta = self._lam, self._eta
        for h in holes:
            last = n - 1
            if h != last:
                lam[h, :n] = lam[last, :n]
                lam[:n, h] = lam[:n, last]
                lam[h, h] = lam[last, last]
                eta[h] = eta[last]
                moved = self._dims[last]
                self._dims[h] = moved
                self._pos[moved] = h
            lam[last, :n] = 0.0
            lam[:n, last] = 0.0
            eta[last] = 0.0
            self._dims.pop()
            n -= 1
        for d in gone:
            del self._pos[d]

    def rebuild(self) -> None:
        """Recompute the cached joint from the stored factors (drops drift)."""
        self._flush()
        self._lam[:] = 0.0
        self._eta[:] = 0.0
        for f in self._factors.values():
            self._accumulate(f.potential)

    # -- snapshots & dumps -----------------------------------------------
    def copy(self) -> FactorGraph:
        self._flush()
        g = FactorGraph(self.name)
        g._variables = dict(self._variables)
        g._factors = dict(self._factors)
        g._log = list(self._log)
        g._dims = list(self._dims)
        g._pos = dict(self._pos)
        g._lam = self._lam.copy()
        g._eta = self._eta.copy()
        g._provenance = self._provenance
        return g

    def __iter__(self) -> Iterator[Factor]:
        return iter(self.factors)

    def to_dict(self) -> dict:
        return {
            "schema": "hetddf.graph/1",
            "name": self.name,
            "variables": [
                {"kind": v.kind, "owner": v.owner, "index": v.index, "dim": v.dim} for v in self._variables
            ],
            "factors": [factor_to_dict(f) for f in self.factors],
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def _sum_potentials(pots: list[CanonicalGaussian]) -> CanonicalGaussian:
    """Product of potentials over their first-seen union of dims (no sorting)."""
    pos: dict[DimKey, int] = {}
    for g in pots:
        for d in g.dims:
            pos.setdefault(d, len(pos))
    n = len(pos)
    lam = np.zeros((n, n))
    eta = np.zeros(n)
    for g in pots:
        idx = np.fromiter((pos[d] for d in g.dims), dtype=np.intp, count=g.size)
        lam[np.ix_(idx, idx)] += g.info_matrix
        eta[idx] += g.info_vector
    return CanonicalGaussian._trusted(tuple(pos), lam, eta)


class _Accumulator:
    """Growable dense buffer behind an accumulator factor.

    Keeps the original factor's dim order and appends new dims, doubling
    capacity as needed, so each absorb costs only the incoming block.
    """

    def __init__(self, base: Factor):
        g = base.potential
        n = g.size
        cap = max(16, 2 * n)
        self.id = base.id
        self.dims = list(g.dims)
        self.pos = {d: i for i, d in enumerate(self.dims)}
        self.lam = np.zeros((cap, cap))
        self.eta = np.zeros(cap)
        self.lam[:n, :n] = g.info_matrix
        self.eta[:n] = g.info_vector
        self.provenance = base.provenance
        self.merged = list(base.merged)
        self.cached = base
        self.dirty = False

    def add(self, f: Factor) -> None:
        g = f.potential
        extra = [d for d in g.dims if d not in self.pos]
        n0 = len(self.dims)
        n1 = n0 + len(extra)
        if n1 > self.lam.shape[0]:
            cap = max(2 * self.lam.shape[0], n1)
            lam = np.zeros((cap, cap))
            eta = np.zeros(cap)
            lam[:n0, :n0] = self.lam[:n0, :n0]
            eta[:n0] = self.eta[:n0]
            self.lam, self.eta = lam, eta
        for i, d in enumerate(extra):
            self.pos[d] = n0 + i
        self.dims.extend(extra)
        idx = np.fromiter((self.pos[d] for d in g.dims), dtype=np.intp, count=g.size)
        if idx.size and idx[0] == idx[-1] - idx.size + 1 and np.all(np.diff(idx) == 1):
            sl = slice(idx[0], idx[-1] + 1)
            self.lam[sl, sl] += g.info_matrix
            self.eta[sl] += g.info_vector
        else:
            self.lam[np.ix_(idx, idx)] += g.info_matrix
            self.eta[idx] += g.info_vector
        self.provenance = self.provenance | f.provenance
        self.merged.append(f.id)
        self.dirty = True

    def factor(self) -> Factor:
        n = len(self.dims)
        pot = CanonicalGaussian._trusted(
            tuple(self.dims), self.lam[:n, :n].copy(), self.eta[:n].copy()
        )
        self.cached = Factor(self.id, pot, self.provenance, tuple(self.merged))
        self.dirty = False
        return self.cached


def dim_to_json(d: DimKey) -> list:
    v = d.owner
    return [v.kind, v.owner, v.index, d.index]


def dim_from_json(data) -> DimKey:
    kind, owner, index, comp = data
    return DimKey(VariableId(kind, int(owner), int(index)), int(comp))


def gaussian_to_dict(g: CanonicalGaussian) -> dict:
    return {
        "dims": [dim_to_json(d) for d in g.dims],
        "info_matrix": g.info_matrix.reshape(-1).tolist(),
        "info_vector": g.info_vector.tolist(),
    }


def gaussian_from_dict(data: dict) -> CanonicalGaussian:
    dims = [dim_from_json(d) for d in data["dims"]]
    n = len(dims)
    return CanonicalGaussian(
        dims, np.asarray(data["info_matrix"], dtype=float).reshape(n, n), data["info_vector"]
    )


def factor_to_dict(f: Factor) -> dict:
    out = {
        "id": f.id.to_json(),
        "origin": f.origin.value,
        "scope": [[v.kind, v.owner, v.index] for v in f.scope],
        "provenance": sorted(p.to_json() for p in f.provenance),
    }
    if f.merged:
        out["merged"] = [m.to_json() for m in f.merged]
    out.update(gaussian_to_dict(f.potential))
    return out


def graph_from_factors(factors: Iterable[Factor], name: str = "") -> FactorGraph:
    """Build a graph holding exactly ``factors`` (variables inferred from scopes)."""
    g = FactorGraph(name)
    factors = list(factors)
    for f in factors:
        for v in f.scope:
            if v not in g:
                g.add_variable(v)
    for f in factors:
        g.add_factor(f)
    return g


@dataclass(frozen=True)
class VariablePartition:
    """A robot's split of its variables relative to each neighbour.

    Targets are the only variables that ever cross robot boundaries, so the
    partition is declared over target ids; the variable sets for a given graph
    follow by expanding over timesteps.
    """

    robot: int
    targets: frozenset
    common: dict = field(default_factory=dict)  # neighbour -> frozenset of target ids

    def __post_init__(self):
        for j, ts in self.common.items():
            if not set(ts) <= set(self.targets):
                raise GraphError(f"robot {self.robot}: common targets with {j} not all tracked")

    @property
    def common_targets(self) -> frozenset:
        out: set = set()
        for ts in self.common.values():
            out.update(ts)
        return frozenset(out)

    @property
    def local_targets(self) -> frozenset:
        """Targets no neighbour monitors."""
        return frozenset(self.targets) - self.common_targets

    def non_mutual_targets(self, neighbor: int) -> frozenset:
        return frozenset(self.targets) - frozenset(self.common.get(neighbor, ()))

    def common_variables(self, neighbor: int, variables: Iterable[VariableId]) -> list[VariableId]:
        ts = self.common.get(neighbor, frozenset())
        return [v for v in variables if v.kind == "target" and v.owner in ts]

    def non_mutual_variables(self, neighbor: int, variables: Iterable[VariableId]) -> list[VariableId]:
        ts = self.common.get(neighbor, frozenset())
        return [v for v in variables if not (v.kind == "target" and v.owner in ts)]

    def with_neighbor(self, neighbor: int, targets: Iterable[int]) -> VariablePartition:
        common = dict(self.common)
        common[neighbor] = frozenset(targets)
        return replace(self, common=common)
