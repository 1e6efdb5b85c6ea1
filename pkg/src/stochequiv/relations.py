"""Subspace relations ``{(x1, x2) : R1 x1 = R2 x2}`` between two state spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numlin import (
    DEFAULT_TOL,
    DimensionError,
    Subspace,
    Tolerance,
    as_matrix,
    image,
    is_contained,
    kernel,
    matrices_equal,
    rank,
)

__all__ = [
    "NotTotalError",
    "LinearRelation",
    "stack_relation",
    "relation_subspace",
    "relation_from_subspace",
    "is_total",
    "total_ranks",
    "is_equivalence",
    "forward_image",
    "inverse_image",
    "canonical",
    "identity_relation",
    "graph_relation",
]


class NotTotalError(ValueError):
    """Raised when an operation requires a total relation."""


@dataclass(frozen=True, eq=False)
class LinearRelation:
    """Relation ``ker([R1, -R2])`` with ``R1`` of shape ``(r, n1)`` and
    ``R2`` of shape ``(r, n2)``."""

    R1: np.ndarray
    R2: np.ndarray

    def __post_init__(self):
        R1 = np.asarray(self.R1, dtype=float)
        R2 = np.asarray(self.R2, dtype=float)
        R1 = R1.reshape(1, -1) if R1.ndim == 1 else as_matrix(R1, "R1")
        R2 = R2.reshape(1, -1) if R2.ndim == 1 else as_matrix(R2, "R2")
        if R1.shape[0] != R2.shape[0]:
            raise DimensionError(f"R1 has {R1.shape[0]} rows but R2 has {R2.shape[0]}")
        for arr, label in ((R1, "R1"), (R2, "R2")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{label} contains non-finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "R1", R1)
        object.__setattr__(self, "R2", R2)

    @property
    def n1(self) -> int:
        return self.R1.shape[1]

    @property
    def n2(self) -> int:
        return self.R2.shape[1]

    @property
    def rows(self) -> int:
        return self.R1.shape[0]

    def swapped(self) -> "LinearRelation":
        """The inverse relation ``{(x2, x1)}``."""
        return LinearRelation(self.R2, self.R1)

    def contains(self, x1, x2, tol: Tolerance = DEFAULT_TOL) -> bool:
        lhs = self.R1 @ np.asarray(x1, dtype=float).reshape(-1)
        rhs = self.R2 @ np.asarray(x2, dtype=float).reshape(-1)
        ok, _ = matrices_equal(lhs, rhs, tol)
        return ok

    def __repr__(self) -> str:
        return f"LinearRelation(rows={self.rows}, n1={self.n1}, n2={self.n2})"


def identity_relation(n: int) -> LinearRelation:
    return LinearRelation(np.eye(n), np.eye(n))


def graph_relation(T) -> LinearRelation:
    """Relation ``x2 = T x1``."""
    T = as_matrix(T, "T")
    return LinearRelation(T, np.eye(T.shape[0]))


def stack_relation(rel: LinearRelation) -> np.ndarray:
    """``[R1, -R2]``."""
    return np.hstack([rel.R1, -rel.R2])


def relation_subspace(rel: LinearRelation, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """The relation as a subspace of ``R^(n1 + n2)``."""
    return kernel(stack_relation(rel), tol)


def relation_from_subspace(S: Subspace, n1: int, tol: Tolerance = DEFAULT_TOL) -> LinearRelation:
    """Presentation with orthonormal rows of a relation given as a subspace."""
    if not 0 <= n1 <= S.ambient_dim:
        raise DimensionError(f"split index {n1} outside ambient dimension {S.ambient_dim}")
    if S.dim == 0:
        rows = np.eye(S.ambient_dim)
    else:
        rows = kernel(S.basis.T, tol).basis.T
    return LinearRelation(rows[:, :n1], -rows[:, n1:])


def total_ranks(rel: LinearRelation, tol: Tolerance = DEFAULT_TOL):
    """``(rank R1, rank R2, rank [R1, -R2])``."""
    return rank(rel.R1, tol), rank(rel.R2, tol), rank(stack_relation(rel), tol)


def is_total(rel: LinearRelation, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Total iff ``rank R1 = rank R2 = rank [R1, -R2]`` (equivalently ``im R1 = im R2``)."""
    r1, r2, r12 = total_ranks(rel, tol)
    return r1 == r2 == r12


def is_equivalence(rel: LinearRelation, tol: Tolerance = DEFAULT_TOL, strict: bool = False) -> bool:
    """Whether the relation is an equivalence relation on ``R^n``.

    The default test is presentation independent: the relation subspace must
    contain the diagonal ``{(x, x)}``. Reflexivity of a linear relation forces
    ``R1 x = R2 x`` for every ``x``, so this agrees with ``R1 == R2`` for any
    presentation; it only differs from ``strict`` in how the tolerance scales.
    ``strict=True`` compares the two matrices entrywise.
    """
    if rel.n1 != rel.n2:
        return False
    n = rel.n1
    if strict:
        ok, _ = matrices_equal(rel.R1, rel.R2, tol)
        return ok and is_total(rel, tol)
    diagonal = Subspace(np.vstack([np.eye(n), np.eye(n)]) / np.sqrt(2.0), 2 * n)
    return is_contained(diagonal, relation_subspace(rel, tol), tol) and is_total(rel, tol)


def _preimage_of_image(R_src: np.ndarray, R_dst: np.ndarray, X: Subspace, tol: Tolerance) -> Subspace:
    # {x_dst : R_dst x_dst in R_src X} = projection onto x_dst of ker([R_dst, -R_src X])
    n_dst = R_dst.shape[1]
    if R_dst.shape[0] == 0:
        return Subspace.full(n_dst)
    M = np.hstack([R_dst, -R_src @ X.basis])
    ker = kernel(M, tol)
    if ker.dim == 0:
        return Subspace.zero(n_dst)
    # block of an orthonormal basis: its natural scale is 1
    return image(ker.basis[:n_dst], tol, scale=1.0)


def forward_image(rel: LinearRelation, X1: Subspace, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """``R(X1) = R2^{-1}(R1 X1)``."""
    if X1.ambient_dim != rel.n1:
        raise DimensionError(f"subspace lives in R^{X1.ambient_dim}, relation expects R^{rel.n1}")
    return _preimage_of_image(rel.R1, rel.R2, X1, tol)


def inverse_image(rel: LinearRelation, X2: Subspace, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """``R^{-1}(X2) = R1^{-1}(R2 X2)``."""
    if X2.ambient_dim != rel.n2:
        raise DimensionError(f"subspace lives in R^{X2.ambient_dim}, relation expects R^{rel.n2}")
    return _preimage_of_image(rel.R2, rel.R1, X2, tol)


def canonical(rel: LinearRelation, tol: Tolerance = DEFAULT_TOL) -> LinearRelation:
    """Equivalent presentation with the minimal number of (orthonormal) rows."""
    return relation_from_subspace(relation_subspace(rel, tol), rel.n1, tol)
