"""Tolerance-aware dense linear algebra and subspace arithmetic.

Every geometric verdict in the package goes through the SVD rank rule in
:func:`rank_and_kernel`, so that containment, intersection and invariance
tests agree with each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionError",
    "EigenDecompositionError",
    "Tolerance",
    "DEFAULT_TOL",
    "Subspace",
    "as_matrix",
    "rank_and_kernel",
    "rank",
    "image",
    "kernel",
    "intersect",
    "subspace_sum",
    "is_contained",
    "containment_residual",
    "is_invariant",
    "invariance_residual",
    "matrices_equal",
    "orthogonal_complement",
    "EigenCluster",
    "real_invariant_eigenspaces",
]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class EigenDecompositionError(RuntimeError):
    """Raised when an eigenvalue computation fails to converge."""


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds shared by all geometric tests.

    Parameters
    ----------
    rank_rel
        Singular values ``s <= rank_rel * max(m, n) * s_max`` count as zero.
    eq_abs, eq_rel
        Matrix equality holds when
        ``||M1 - M2||_F <= eq_abs + eq_rel * max(||M1||_F, ||M2||_F)``.
    cluster_rel
        Eigenvalues closer than ``cluster_rel * (1 + |lambda|)`` are merged.
    """

    rank_rel: float = 1e-10
    eq_abs: float = 1e-9
    eq_rel: float = 1e-9
    cluster_rel: float = 1e-8

    def __post_init__(self):
        for name in ("rank_rel", "eq_abs", "eq_rel", "cluster_rel"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"tolerance {name} must be a positive finite number, got {value!r}")

    def subspace_threshold(self, ambient: int, ncols: int = 0) -> float:
        # same scale the rank rule applies to a matrix of orthonormal columns
        return self.rank_rel * max(ambient, ncols, 1)

    def as_dict(self) -> dict:
        return {
            "rank_rel": self.rank_rel,
            "eq_abs": self.eq_abs,
            "eq_rel": self.eq_rel,
            "cluster_rel": self.cluster_rel,
        }


DEFAULT_TOL = Tolerance()


def as_matrix(M, name: str = "matrix", shape: Tuple[int, int] | None = None) -> np.ndarray:
    """Convert ``M`` to a finite 2-D float array, optionally checking its shape."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a flat sequence is a column unless a row shape was requested
        if shape is not None and shape[0] == 1 and shape[1] == arr.size:
            arr = arr.reshape(1, -1)
        elif shape is not None and arr.size == 0:
            arr = arr.reshape(shape)
        else:
            arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.size == 0 and shape is not None:
        arr = arr.reshape(shape)
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of ``R^ambient_dim`` held through an orthonormal basis.

    The zero subspace keeps its ambient dimension and a basis with no columns.
    """

    basis: np.ndarray
    ambient_dim: int = field(default=-1)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise DimensionError("subspace basis must be two-dimensional")
        ambient = basis.shape[0] if self.ambient_dim < 0 else self.ambient_dim
        if basis.shape[0] != ambient:
            raise DimensionError(
                f"basis has {basis.shape[0]} rows but ambient dimension is {ambient}"
            )
        basis = basis.copy()
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "ambient_dim", ambient)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(np.zeros((n, 0)), n)

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(np.eye(n), n)

    @classmethod
    def span(cls, vectors, tol: Tolerance = DEFAULT_TOL) -> "Subspace":
        """Span of the columns of ``vectors``."""
        return image(vectors, tol)

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains_vector(self, v, tol: Tolerance = DEFAULT_TOL) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        scale = max(1.0, float(np.linalg.norm(v)))
        resid = v - self.basis @ (self.basis.T @ v)
        return float(np.linalg.norm(resid)) <= tol.subspace_threshold(self.ambient_dim) * scale

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def _svd(M: np.ndarray):
    try:
        return np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(M, full_matrices=True, lapack_driver="gesvd")


def _numerical_rank(s: np.ndarray, shape: Tuple[int, int], tol: Tolerance, scale: float = 0.0) -> int:
    ref = max(float(s[0]) if s.size else 0.0, scale)
    if ref == 0.0:
        return 0
    thresh = tol.rank_rel * max(shape) * ref
    return int(np.count_nonzero(s > thresh))


def rank_and_kernel(M, tol: Tolerance = DEFAULT_TOL) -> Tuple[int, Subspace]:
    """Numerical rank of ``M`` and an orthonormal basis of its kernel.

    Examples
    --------
    >>> r, K = rank_and_kernel([[1.0, 0.0], [0.0, 0.0]])
    >>> r, K.dim
    (1, 1)
    """
    M = as_matrix(M)
    m, n = M.shape
    if m == 0 or n == 0:
        return 0, Subspace.full(n)
    _, s, vt = _svd(M)
    r = _numerical_rank(s, M.shape, tol)
    return r, Subspace(vt[r:].T, n)


def rank(M, tol: Tolerance = DEFAULT_TOL) -> int:
    return rank_and_kernel(M, tol)[0]


def kernel(M, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    return rank_and_kernel(M, tol)[1]


def image(M, tol: Tolerance = DEFAULT_TOL, scale: float = 0.0) -> Subspace:
    """Orthonormal span of the columns of ``M`` after rank truncation.

    Singular values are cut relative to ``max(s_max, scale)``. Pass the
    natural size of ``M`` as ``scale`` when ``M`` may be entirely rounding
    noise (a residual, or a block of an orthonormal basis), since a purely
    relative cut would then keep noise directions.
    """
    M = as_matrix(M)
    m, n = M.shape
    if m == 0 or n == 0:
        return Subspace.zero(m)
    u, s, _ = _svd(M)
    r = _numerical_rank(s, M.shape, tol, scale)
    return Subspace(u[:, :r], m)


def _check_ambient(U: Subspace, V: Subspace) -> int:
    if U.ambient_dim != V.ambient_dim:
        raise DimensionError(
            f"ambient dimensions differ: {U.ambient_dim} vs {V.ambient_dim}"
        )
    return U.ambient_dim


def intersect(U: Subspace, V: Subspace, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """Intersection of two subspaces.

    Solves ``U a = V b`` through the kernel of ``[U_basis, -V_basis]``.
    """
    n = _check_ambient(U, V)
    if U.dim == 0 or V.dim == 0:
        return Subspace.zero(n)
    stacked = np.hstack([U.basis, -V.basis])
    _, ker = rank_and_kernel(stacked, tol)
    if ker.dim == 0:
        return Subspace.zero(n)
    coeffs = ker.basis[: U.dim]
    # average both representations to keep the result symmetric in U, V
    vecs = 0.5 * (U.basis @ coeffs + V.basis @ ker.basis[U.dim:])
    u, _, _ = np.linalg.svd(vecs, full_matrices=False)
    return Subspace(u[:, : ker.dim], n)


def subspace_sum(U: Subspace, V: Subspace, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """Sum ``U + V`` (not necessarily direct)."""
    n = _check_ambient(U, V)
    if U.dim + V.dim == 0:
        return Subspace.zero(n)
    return image(np.hstack([U.basis, V.basis]), tol)


def orthogonal_complement(U: Subspace, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    n = U.ambient_dim
    if U.dim == 0:
        return Subspace.full(n)
    return kernel(U.basis.T, tol)


def containment_residual(U: Subspace, V: Subspace) -> float:
    """Spectral norm of the part of ``U``'s basis lying outside ``V``."""
    _check_ambient(U, V)
    if U.dim == 0:
        return 0.0
    resid = U.basis - V.basis @ (V.basis.T @ U.basis)
    return float(np.linalg.norm(resid, 2))


def is_contained(U: Subspace, V: Subspace, tol: Tolerance = DEFAULT_TOL) -> bool:
    """True iff ``U`` is a subspace of ``V`` within tolerance."""
    resid = containment_residual(U, V)
    return resid <= tol.subspace_threshold(U.ambient_dim, U.dim + V.dim)


def invariance_residual(A, U: Subspace) -> float:
    A = as_matrix(A, "A")
    if A.shape != (U.ambient_dim, U.ambient_dim):
        raise DimensionError(
            f"A has shape {A.shape}, subspace ambient dimension is {U.ambient_dim}"
        )
    if U.dim == 0:
        return 0.0
    AU = A @ U.basis
    resid = AU - U.basis @ (U.basis.T @ AU)
    return float(np.linalg.norm(resid, 2))


def is_invariant(A, U: Subspace, tol: Tolerance = DEFAULT_TOL) -> bool:
    """True iff ``A U`` is contained in ``U``.

    The residual is measured directly on ``A @ basis`` and scaled by ``||A||``
    rather than by rank-truncating ``A @ basis``, which would promote rounding
    noise to spurious directions when ``A`` nearly annihilates ``U``.
    """
    resid = invariance_residual(A, U)
    A = as_matrix(A, "A")
    scale = max(1.0, float(np.linalg.norm(A, 2))) if A.size else 1.0
    return resid <= tol.subspace_threshold(U.ambient_dim, 2 * U.dim) * scale


def matrices_equal(M1, M2, tol: Tolerance = DEFAULT_TOL) -> Tuple[bool, float]:
    """Compare two matrices under the mixed absolute/relative rule.

    Returns ``(equal, residual)`` where ``residual = ||M1 - M2||_F``.
    """
    M1 = np.asarray(M1, dtype=float)
    M2 = np.asarray(M2, dtype=float)
    if M1.shape != M2.shape:
        raise DimensionError(f"shapes differ: {M1.shape} vs {M2.shape}")
    resid = float(np.linalg.norm(M1 - M2))
    scale = max(float(np.linalg.norm(M1)), float(np.linalg.norm(M2)))
    return resid <= tol.eq_abs + tol.eq_rel * scale, resid


@dataclass(frozen=True, eq=False)
class EigenCluster:
    """Group of (numerically) equal eigenvalues, closed under conjugation,
    together with the associated generalized real eigenspace."""

    eigenvalues: Tuple[complex, ...]
    subspace: Subspace

    @property
    def multiplicity(self) -> int:
        return len(self.eigenvalues)

    @property
    def center(self) -> complex:
        return complex(np.mean(self.eigenvalues))


def _cluster_eigenvalues(eigs: np.ndarray, tol: Tolerance) -> List[List[int]]:
    k = len(eigs)
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def close(a, b):
        return abs(a - b) <= tol.cluster_rel * (1.0 + max(abs(a), abs(b)))

    for i in range(k):
        for j in range(i + 1, k):
            if close(eigs[i], eigs[j]) or close(eigs[i], np.conj(eigs[j])):
                parent[find(i)] = find(j)
    groups: dict = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)
    clusters = list(groups.values())
    clusters.sort(key=lambda g: (-float(np.mean(eigs[g].real)), float(np.mean(np.abs(eigs[g].imag)))))
    return clusters


def _kernel_with_dim(M: np.ndarray, k: int) -> Subspace:
    n = M.shape[1]
    if k == 0:
        return Subspace.zero(n)
    _, _, vt = _svd(M)
    return Subspace(vt[n - k:].T, n)


def _cluster_space_kernel(A: np.ndarray, cluster_eigs: Sequence[complex]) -> Subspace:
    n = A.shape[0]
    P = np.eye(n, dtype=complex)
    for lam in cluster_eigs:
        P = (A - lam * np.eye(n)) @ P
    # conjugate-closed clusters give a real polynomial in A
    return _kernel_with_dim(P.real, len(cluster_eigs))


def _cluster_space_schur(A: np.ndarray, eigs: np.ndarray, labels: np.ndarray, target: int):
    def select(re, im):
        z = complex(re, im)
        return bool(labels[int(np.argmin(np.abs(eigs - z)))] == target)

    try:
        _, Z, sdim = scipy.linalg.schur(A, output="real", sort=select)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if sdim != int(np.count_nonzero(labels == target)):
        return None
    return Subspace(Z[:, :sdim], A.shape[0])


def real_invariant_eigenspaces(
    A, tol: Tolerance = DEFAULT_TOL, method: str = "schur"
) -> List[EigenCluster]:
    """Generalized real eigenspaces of ``A``, one per eigenvalue cluster.

    Parameters
    ----------
    A
        Square matrix.
    method
        ``"schur"`` reorders a real Schur form so the cluster leads and takes
        the leading Schur vectors; ``"kernel"`` takes the kernel of the real
        polynomial ``prod (A - lambda I)`` over the cluster. The Schur path
        falls back to the kernel path if reordering miscounts the cluster.

    Returns
    -------
    list of EigenCluster
        Clusters sorted by decreasing real part. The subspaces are
        ``A``-invariant, independent, and sum to ``R^n``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError(f"A must be square, got {A.shape}")
    if method not in ("schur", "kernel"):
        raise ValueError(f"unknown method {method!r}")
    if n == 0:
        return []
    try:
        eigs = scipy.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(f"eigenvalue computation failed: {exc}") from exc
    if not np.all(np.isfinite(eigs)):
        raise EigenDecompositionError("eigenvalue computation returned non-finite values")
    groups = _cluster_eigenvalues(eigs, tol)
    labels = np.empty(n, dtype=int)
    for c, g in enumerate(groups):
        labels[g] = c

    out = []
    for c, g in enumerate(groups):
        space = None
        if method == "schur":
            space = _cluster_space_schur(A, eigs, labels, c)
        if space is None:
            space = _cluster_space_kernel(A, eigs[g])
        out.append(EigenCluster(tuple(complex(z) for z in eigs[g]), space))
    return out
