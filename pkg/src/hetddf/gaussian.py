"""
Gaussian densities in information (canonical) form.

A density is stored as an information matrix ``Lam = inv(Sigma)`` and an
information vector ``eta = Lam @ mu`` over an ordered tuple of dimension keys.
Products of densities are sums of parameters and quotients are differences,
so fusion and channel-filter bookkeeping are exact.

Dimensions are addressed by :class:`DimKey` rather than by position: two
densities built independently (by different robots, say) are aligned by key.
Binary operations that have to form a union of dimensions order it by the
natural sort order of the keys so the result does not depend on argument
order.

Objects are treated as immutable; the arrays are flagged read-only.
"""

from __future__ import annotations

import warnings
from typing import Any, Hashable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DimensionError,
    ImproperDensityError,
    NotPositiveDefiniteError,
    UnobservableEliminationError,
)

# smallest eigenvalue above which an information matrix counts as PSD
PROPER_EIG_TOL = -1e-10
# conditioning limit for the LU fallback used on indefinite blocks
_SINGULAR_RCOND = 1e-13


class DimKey(NamedTuple):
    """One scalar component of a variable: ``(owner, index)``."""

    owner: Hashable
    index: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _symmetrize(lam: np.ndarray) -> np.ndarray:
    return 0.5 * (lam + lam.T)


def _solve_block(block: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``block @ X = rhs`` for a symmetric block; raise if singular."""
    if block.shape[0] == 0:
        return np.zeros_like(rhs)
    try:
        c = linalg.cho_factor(block, lower=True, check_finite=False)
        return linalg.cho_solve(c, rhs, check_finite=False)
    except linalg.LinAlgError:
        pass
    # indefinite but possibly invertible (quotients of densities)
    with warnings.catch_warnings():
        # singularity is detected below and raised with context
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(block, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= _SINGULAR_RCOND * max(diag.max(), 1.0):
        raise UnobservableEliminationError(
            f"eliminated block of size {block.shape[0]} is singular"
        )
    return linalg.lu_solve((lu, piv), rhs, check_finite=False)


def schur_complement(
    lam: np.ndarray, eta: np.ndarray, ki: np.ndarray, ei: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Information parameters over ``ki`` after eliminating ``ei``.

    Eliminated dims with no direct coupling to the kept ones are ordered
    first, so after one Cholesky ``L`` of the eliminated block only its
    trailing part enters the triangular solve, and only kept columns that are
    actually coupled get updated. Falls back to LU when the block is
    indefinite (quotient densities).
    """
    rows = lam.take(ei, axis=0)
    lam_ek = rows.take(ki, axis=1)
    lam_kk = lam.take(ki, axis=0).take(ki, axis=1)
    coupled_rows = lam_ek.any(axis=1)
    cols = np.flatnonzero(lam_ek.any(axis=0))
    if cols.size == 0:
        return lam_kk, eta[ki].copy()
    perm = np.concatenate([np.flatnonzero(~coupled_rows), np.flatnonzero(coupled_rows)])
    r0 = ei.size - int(coupled_rows.sum())
    if r0:
        lam_ee = rows.take(ei.take(perm), axis=1).take(perm, axis=0)
        eta_e = eta.take(ei.take(perm))
    else:
        lam_ee = rows.take(ei, axis=1)
        eta_e = eta.take(ei)
    b = lam_ek.take(perm[r0:], axis=0).take(cols, axis=1)
    try:
        chol = linalg.cholesky(lam_ee, lower=True, check_finite=False)
    except linalg.LinAlgError:
        full_b = np.zeros((ei.size, cols.size))
        full_b[r0:] = b
        sol = _solve_block(lam_ee, np.column_stack([full_b, eta_e]))
        lam_kk[np.ix_(cols, cols)] -= full_b.T @ sol[:, :-1]
        new_eta = eta[ki] - lam_ek[perm].T @ sol[:, -1]
        return _symmetrize(lam_kk), new_eta
    z = linalg.solve_triangular(chol, eta_e, lower=True, check_finite=False)
    w = linalg.solve_triangular(chol[r0:, r0:], b, lower=True, check_finite=False)
    # w.T @ w is exactly symmetric (syrk), so a symmetric input stays symmetric
    lam_kk[np.ix_(cols, cols)] -= w.T @ w
    new_eta = eta[ki].copy()
    new_eta[cols] -= w.T @ z[r0:]
    return lam_kk, new_eta


class CanonicalGaussian:
    """Gaussian (possibly improper) in information form over keyed dims.

    Parameters
    ----------
    dims : sequence of DimKey
        Ordered, unique dimension keys.
    info_matrix : array_like, shape (n, n)
        Information matrix; symmetrized on construction.
    info_vector : array_like, shape (n,)
        Information vector.
    """

    __slots__ = ("dims", "info_matrix", "info_vector", "_index", "_min_eig")

    def __init__(self, dims: Sequence[DimKey], info_matrix: Any, info_vector: Any):
        dims = tuple(dims)
        n = len(dims)
        lam = np.array(info_matrix, dtype=float).reshape(n, n)
        eta = np.array(info_vector, dtype=float).reshape(n)
        index = {d: i for i, d in enumerate(dims)}
        if len(index) != n:
            raise DimensionError("duplicate dimension keys")
        self.dims = dims
        self.info_matrix = _readonly(_symmetrize(lam))
        self.info_vector = _readonly(eta)
        self._index = index
        self._min_eig: float | None = None

    @classmethod
    def _trusted(cls, dims: tuple, lam: np.ndarray, eta: np.ndarray) -> CanonicalGaussian:
        """Wrap freshly built, symmetric arrays without copying."""
        g = object.__new__(cls)
        g.dims = dims
        g.info_matrix = _readonly(lam)
        g.info_vector = _readonly(eta)
        g._index = {d: i for i, d in enumerate(dims)}
        g._min_eig = None
        return g

    # -- construction ---------------------------------------------------
    @classmethod
    def flat(cls, dims: Sequence[DimKey]) -> CanonicalGaussian:
        """Zero-information (flat, improper) density over ``dims``."""
        n = len(tuple(dims))
        return cls(dims, np.zeros((n, n)), np.zeros(n))

    @classmethod
    def from_moments(cls, mean: Any, covariance: Any, dims: Sequence[DimKey]) -> CanonicalGaussian:
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(covariance, dtype=float)
        n = mean.shape[0]
        if cov.shape != (n, n) or len(tuple(dims)) != n:
            raise DimensionError(f"mean {mean.shape}, covariance {cov.shape}, {len(tuple(dims))} dims")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
            raise NotPositiveDefiniteError("covariance is not symmetric")
        try:
            c = linalg.cho_factor(cov, lower=True, check_finite=True)
        except linalg.LinAlgError as exc:
            eig = np.linalg.eigvalsh(_symmetrize(cov)).min() if n else 0.0
            raise NotPositiveDefiniteError(
                f"covariance is not positive definite (smallest eigenvalue {eig:.3e})"
            ) from exc
        lam = linalg.cho_solve(c, np.eye(n))
        return cls(dims, lam, lam @ mean)

    # -- inspection -----------------------------------------------------
    @property
    def size(self) -> int:
        return len(self.dims)

    def index(self, dims: Iterable[DimKey]) -> np.ndarray:
        try:
            return np.fromiter((self._index[d] for d in dims), dtype=np.intp)
        except KeyError as exc:
            raise DimensionError(f"dimension {exc.args[0]!r} not present") from None

    def has_dims(self, dims: Iterable[DimKey]) -> bool:
        return all(d in self._index for d in dims)

    @property
    def min_eigenvalue(self) -> float:
        if self._min_eig is None:
            self._min_eig = float(np.linalg.eigvalsh(self.info_matrix).min()) if self.size else 0.0
        return self._min_eig

    @property
    def is_proper(self) -> bool:
        """True when the information matrix is positive semidefinite.

        Flat directions are allowed (a flat prior is still a valid factor);
        only indefinite quotients are flagged as improper.
        """
        return self.min_eigenvalue > PROPER_EIG_TOL

    def is_flat(self, atol: float = 0.0) -> bool:
        return bool(
            np.all(np.abs(self.info_matrix) <= atol) and np.all(np.abs(self.info_vector) <= atol)
        )

    def to_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(mean, covariance)``; the information matrix must be PD."""
        n = self.size
        try:
            c = linalg.cho_factor(self.info_matrix, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise ImproperDensityError(
                "information matrix is not positive definite; no moment form"
            ) from exc
        cov = linalg.cho_solve(c, np.eye(n), check_finite=False)
        mean = linalg.cho_solve(c, self.info_vector, check_finite=False)
        return mean, _symmetrize(cov)

    def log_density(self, x: Any) -> float:
        """Unnormalized log density ``-x'Lam x / 2 + eta'x`` at ``x`` (in dims order)."""
        x = np.asarray(x, dtype=float).reshape(self.size)
        return float(-0.5 * x @ self.info_matrix @ x + self.info_vector @ x)

    # -- reshaping ------------------------------------------------------
    def reorder(self, dims: Sequence[DimKey]) -> CanonicalGaussian:
        dims = tuple(dims)
        if len(dims) != self.size or set(dims) != set(self.dims):
            raise DimensionError("reorder needs a permutation of the same dims")
        idx = self.index(dims)
        return CanonicalGaussian(dims, self.info_matrix[np.ix_(idx, idx)], self.info_vector[idx])

    def extend(self, dims: Sequence[DimKey]) -> CanonicalGaussian:
        """Zero-pad to the superset ``dims`` (in that order)."""
        dims = tuple(dims)
        target = set(dims)
        missing = [d for d in self.dims if d not in target]
        if missing:
            raise DimensionError(f"extend target lacks dims {missing[:3]}")
        n = len(dims)
        pos = {d: i for i, d in enumerate(dims)}
        idx = np.fromiter((pos[d] for d in self.dims), dtype=np.intp, count=self.size)
        lam = np.zeros((n, n))
        eta = np.zeros(n)
        m = self.size
        if m and idx[-1] == m - 1 and np.array_equal(idx, np.arange(m)):
            lam[:m, :m] = self.info_matrix
        else:
            lam[np.ix_(idx, idx)] = self.info_matrix
        eta[idx] = self.info_vector
        return CanonicalGaussian._trusted(dims, lam, eta)

    # -- algebra --------------------------------------------------------
    def __mul__(self, other: CanonicalGaussian) -> CanonicalGaussian:
        return multiply(self, other)

    def __truediv__(self, other: CanonicalGaussian) -> CanonicalGaussian:
        return divide(self, other)

    def __repr__(self) -> str:
        flag = "" if self._min_eig is None or self.is_proper else ", improper"
        return f"CanonicalGaussian({self.size} dims{flag})"


def _union(a: Sequence[DimKey], b: Sequence[DimKey]) -> tuple[DimKey, ...]:
    if tuple(a) == tuple(b):
        return tuple(a)
    return tuple(sorted(set(a).union(b)))


def multiply(a: CanonicalGaussian, b: CanonicalGaussian) -> CanonicalGaussian:
    """Product of two densities: parameters added on the union of dims."""
    if a.dims == b.dims:
        return CanonicalGaussian._trusted(a.dims, a.info_matrix + b.info_matrix, a.info_vector + b.info_vector)
    dims = _union(a.dims, b.dims)
    n = len(dims)
    pos = {d: i for i, d in enumerate(dims)}
    lam = np.zeros((n, n))
    eta = np.zeros(n)
    for g in (a, b):
        idx = np.fromiter((pos[d] for d in g.dims), dtype=np.intp, count=g.size)
        lam[np.ix_(idx, idx)] += g.info_matrix
        eta[idx] += g.info_vector
    return CanonicalGaussian._trusted(dims, lam, eta)


def multiply_subset(a: CanonicalGaussian, b: CanonicalGaussian) -> CanonicalGaussian:
    """Product when ``dims(b)`` is a subset of ``dims(a)``; keeps ``a``'s order."""
    if a.dims == b.dims:
        return multiply(a, b)
    if not a.has_dims(b.dims):
        raise DimensionError("factor dims are not a subset of the density's dims")
    idx = a.index(b.dims)
    lam = np.array(a.info_matrix)
    eta = np.array(a.info_vector)
    lam[np.ix_(idx, idx)] += b.info_matrix
    eta[idx] += b.info_vector
    return CanonicalGaussian._trusted(a.dims, lam, eta)


def multiply_all(factors: Iterable[CanonicalGaussian]) -> CanonicalGaussian:
    """Fold :func:`multiply` over ``factors`` in one pass."""
    factors = list(factors)
    if not factors:
        return CanonicalGaussian.flat(())
    dims: set[DimKey] = set()
    for f in factors:
        dims.update(f.dims)
    order = tuple(sorted(dims))
    pos = {d: i for i, d in enumerate(order)}
    n = len(order)
    lam = np.zeros((n, n))
    eta = np.zeros(n)
    for f in factors:
        idx = np.fromiter((pos[d] for d in f.dims), dtype=np.intp, count=f.size)
        lam[np.ix_(idx, idx)] += f.info_matrix
        eta[idx] += f.info_vector
    return CanonicalGaussian._trusted(order, lam, eta)


def divide(a: CanonicalGaussian, b: CanonicalGaussian) -> CanonicalGaussian:
    """Quotient ``a / b``; ``dims(b)`` must be a subset of ``dims(a)``.

    The result keeps ``a``'s dimension order and may be improper.
    """
    if a.dims == b.dims:
        return CanonicalGaussian._trusted(a.dims, a.info_matrix - b.info_matrix, a.info_vector - b.info_vector)
    if not a.has_dims(b.dims):
        raise DimensionError("divisor dims are not a subset of dividend dims")
    idx = a.index(b.dims)
    lam = np.array(a.info_matrix)
    eta = np.array(a.info_vector)
    lam[np.ix_(idx, idx)] -= b.info_matrix
    eta[idx] -= b.info_vector
    return CanonicalGaussian._trusted(a.dims, lam, eta)


def marginalize(g: CanonicalGaussian, keep: Iterable[DimKey]) -> CanonicalGaussian:
    """Marginal over ``keep`` by Schur complement of the eliminated block.

    Kept dims retain their order in ``g``.
    """
    keep_set = set(keep)
    if not g.has_dims(keep_set):
        raise DimensionError("keep set is not a subset of the density's dims")
    kept = [d for d in g.dims if d in keep_set]
    if len(kept) == g.size:
        return g
    elim = [d for d in g.dims if d not in keep_set]
    new_lam, new_eta = schur_complement(g.info_matrix, g.info_vector, g.index(kept), g.index(elim))
    return CanonicalGaussian._trusted(tuple(kept), new_lam, new_eta)


def condition(g: CanonicalGaussian, fixed: Sequence[DimKey], values: Any) -> CanonicalGaussian:
    """Condition on ``fixed`` dims taking ``values``; result over the rest."""
    fixed = tuple(fixed)
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(fixed) != values.shape[0]:
        raise DimensionError(f"{len(fixed)} fixed dims but {values.shape[0]} values")
    if not fixed:
        return g
    fi = g.index(fixed)
    fixed_set = set(fixed)
    rest = [d for d in g.dims if d not in fixed_set]
    ri = g.index(rest)
    lam, eta = g.info_matrix, g.info_vector
    return CanonicalGaussian(
        rest,
        lam[np.ix_(ri, ri)],
        eta[ri] - lam[np.ix_(ri, fi)] @ values,
    )


def parameter_difference(a: CanonicalGaussian, b: CanonicalGaussian) -> float:
    """Largest absolute difference in ``(Lam, eta)`` after aligning by key."""
    if set(a.dims) != set(b.dims):
        raise DimensionError("densities are over different dims")
    b = b.reorder(a.dims) if a.dims != b.dims else b
    if a.size == 0:
        return 0.0
    return float(
        max(
            np.max(np.abs(a.info_matrix - b.info_matrix)),
            np.max(np.abs(a.info_vector - b.info_vector)),
        )
    )


def relative_difference(a: CanonicalGaussian, reference: CanonicalGaussian) -> float:
    """:func:`parameter_difference` scaled by the reference's largest parameter.

    This is the comparison metric used against the centralized oracle: one
    norm-relative number for both ``Lam`` and ``eta`` so that entries that
    happen to be near zero do not blow the ratio up.
    """
    diff = parameter_difference(a, reference)
    if reference.size == 0:
        return diff
    scale = max(
        float(np.max(np.abs(reference.info_matrix))),
        float(np.max(np.abs(reference.info_vector))),
    )
    return diff / scale if scale > 0 else diff
