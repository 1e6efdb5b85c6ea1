"""Quotient systems and minimal reductions.

A relation matrix ``R`` whose kernel is ``A``-invariant and unobservable
induces a coordinate change ``x = T [z; v]`` with ``im T2 = ker R``, after which
``v`` never reaches the output and the leading block is a reduced model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .numlin import (
    DEFAULT_TOL,
    EigenCluster,
    Subspace,
    Tolerance,
    as_matrix,
    image,
    intersect,
    is_contained,
    is_invariant,
    kernel,
    orthogonal_complement,
    rank,
    real_invariant_eigenspaces,
    subspace_sum,
)
from .relations import LinearRelation, identity_relation
from .sysmodel import StochasticLinearSystem, noise_reach_space, obs_matrix, unobservable_space

__all__ = [
    "QuotientError",
    "KalmanDecomposition",
    "ReductionCertificate",
    "ReductionResult",
    "EigenspaceRecord",
    "EigenspaceClassification",
    "quotient_external",
    "quotient_bisim",
    "minimal_external",
    "classify_eigenspaces",
    "minimal_bisim",
    "largest_invariant_subspace",
]


class QuotientError(ValueError):
    """The kernel of the relation matrix does not induce a valid quotient."""


@dataclass(frozen=True, eq=False)
class KalmanDecomposition:
    """Coordinate change ``x = T [z; v]`` with ``T = [T1, T2]``.

    ``A_t = Tinv A T`` has a zero upper-right block, ``C_t = C T`` a zero
    right block, and for bisimulation quotients ``G_t = Tinv G`` has a zero
    lower block.
    """

    T: np.ndarray
    Tinv: np.ndarray
    reduced_dim: int
    A_t: np.ndarray
    B_t: np.ndarray
    C_t: np.ndarray
    G_t: np.ndarray
    kind: str

    @property
    def T1(self) -> np.ndarray:
        return self.T[:, : self.reduced_dim]

    @property
    def T2(self) -> np.ndarray:
        return self.T[:, self.reduced_dim:]

    @property
    def projection(self) -> np.ndarray:
        """``[I 0] Tinv``: maps original states to reduced states."""
        return self.Tinv[: self.reduced_dim]

    def structure_residuals(self) -> dict:
        k = self.reduced_dim
        out = {
            "A_upper_right": float(np.linalg.norm(self.A_t[:k, k:])),
            "C_right": float(np.linalg.norm(self.C_t[:, k:])),
        }
        if self.kind == "bisim":
            out["G_lower"] = float(np.linalg.norm(self.G_t[k:]))
        return out


@dataclass(frozen=True)
class ReductionCertificate:
    route: str
    maximal: bool
    pieces: Tuple[Tuple[complex, int], ...] = ()
    detail: str = ""


@dataclass(frozen=True, eq=False)
class ReductionResult:
    """Reduced system together with how it was obtained.

    ``relation`` is the inducing equivalence relation ``(R, R)`` on the
    original state space; ``link`` relates reduced and original states by
    ``z = [I 0] Tinv x``.
    """

    system: StochasticLinearSystem
    relation: LinearRelation
    link: LinearRelation
    decomposition: Optional[KalmanDecomposition]
    certificate: ReductionCertificate


def _decompose(sys, T1: np.ndarray, K: Subspace, kind: str) -> KalmanDecomposition:
    T = np.hstack([T1, K.basis])
    Tinv = np.linalg.solve(T, np.eye(sys.n))
    return KalmanDecomposition(
        T=T, Tinv=Tinv, reduced_dim=T1.shape[1],
        A_t=Tinv @ sys.A @ T, B_t=Tinv @ sys.B, C_t=sys.C @ T, G_t=Tinv @ sys.G, kind=kind,
    )


def _reduce(sys, R: np.ndarray, dec: KalmanDecomposition, cert: ReductionCertificate) -> ReductionResult:
    k = dec.reduced_dim
    reduced = StochasticLinearSystem(
        A=dec.A_t[:k, :k], B=dec.B_t[:k], C=dec.C_t[:, :k], G=dec.G_t[:k],
        mu=sys.mu, Psi=sys.Psi, name=(f"{sys.name}/quotient" if sys.name else None),
    )
    link = LinearRelation(np.eye(k), dec.projection)
    return ReductionResult(reduced, LinearRelation(R, R), link, dec, cert)


def _common_checks(sys, R, tol) -> Tuple[np.ndarray, Subspace]:
    R = as_matrix(R, "R")
    if R.shape[1] != sys.n:
        raise QuotientError(f"R has {R.shape[1]} columns, system has n={sys.n}")
    K = kernel(R, tol)
    if not is_invariant(sys.A, K, tol):
        raise QuotientError("ker R is not A-invariant")
    if not is_contained(K, kernel(sys.C, tol), tol):
        raise QuotientError("ker R is not contained in ker C")
    return R, K


def quotient_external(sys: StochasticLinearSystem, R, tol: Tolerance = DEFAULT_TOL) -> ReductionResult:
    """Quotient preserving the output law.

    Requires ``A ker R ⊆ ker R ⊆ ker C``. ``T1`` is an orthonormal basis of
    the orthogonal complement of ``ker R``.

    Raises
    ------
    QuotientError
        Naming the inclusion that fails.
    """
    R, K = _common_checks(sys, R, tol)
    T1 = orthogonal_complement(K, tol).basis
    dec = _decompose(sys, T1, K, "ext")
    cert = ReductionCertificate("quotient", False, detail=f"reduced dimension {dec.reduced_dim}")
    return _reduce(sys, R, dec, cert)


def quotient_bisim(sys: StochasticLinearSystem, R, tol: Tolerance = DEFAULT_TOL) -> ReductionResult:
    """Quotient preserving stochastic bisimilarity.

    Requires ``A ker R ⊆ ker R ⊆ ker C`` and ``ker R`` meeting the
    noise-reachable space only at zero. ``T1`` spans the noise-reachable space
    followed by the orthogonal complement of (reachable space + ker R), so the
    transformed ``G`` has a zero lower block.
    """
    R, K = _common_checks(sys, R, tol)
    Gs = noise_reach_space(sys, tol)
    if intersect(Gs, K, tol).dim:
        raise QuotientError("ker R meets the noise-reachable space")
    rest = orthogonal_complement(subspace_sum(Gs, K, tol), tol)
    T1 = np.hstack([Gs.basis, rest.basis])
    assert T1.shape[1] + K.dim == sys.n and rank(np.hstack([T1, K.basis]), tol) == sys.n
    dec = _decompose(sys, T1, K, "bisim")
    cert = ReductionCertificate("quotient", False, detail=f"reduced dimension {dec.reduced_dim}")
    return _reduce(sys, R, dec, cert)


def minimal_external(sys: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL) -> ReductionResult:
    """Smallest system with the same output law: quotient by the
    unobservable subspace."""
    Q = obs_matrix(sys.A, sys.C, sys.n)
    res = quotient_external(sys, Q, tol)
    cert = ReductionCertificate("observability-kernel", True,
                                detail=f"reduced dimension {res.decomposition.reduced_dim} = rank Obs")
    return ReductionResult(res.system, res.relation, res.link, res.decomposition, cert)


# -- eigenspace classification ---------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenspaceRecord:
    cluster: EigenCluster
    totally_reachable: bool
    totally_unreachable: bool
    totally_observable: bool
    totally_unobservable: bool

    @property
    def eigenspace(self) -> Subspace:
        return self.cluster.subspace

    @property
    def classified(self) -> bool:
        """Each of the two dichotomies is resolved one way or the other."""
        return (self.totally_reachable or self.totally_unreachable) and (
            self.totally_observable or self.totally_unobservable
        )


@dataclass(frozen=True, eq=False)
class EigenspaceClassification:
    records: Tuple[EigenspaceRecord, ...]
    reach_space: Subspace
    unobservable_space: Subspace

    @property
    def all_classified(self) -> bool:
        return all(r.classified for r in self.records)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def classify_eigenspaces(sys: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL) -> EigenspaceClassification:
    """Compare each generalized real eigenspace with the noise-reachable
    space and the unobservable space."""
    Gs = noise_reach_space(sys, tol)
    Qs = unobservable_space(sys, tol)
    recs = []
    for cl in real_invariant_eigenspaces(sys.A, tol):
        S = cl.subspace
        recs.append(EigenspaceRecord(
            cluster=cl,
            totally_reachable=is_contained(S, Gs, tol),
            totally_unreachable=intersect(S, Gs, tol).dim == 0,
            totally_observable=intersect(S, Qs, tol).dim == 0,
            totally_unobservable=is_contained(S, Qs, tol),
        ))
    return EigenspaceClassification(tuple(recs), Gs, Qs)


def largest_invariant_subspace(A, V: Subspace, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """Largest ``A``-invariant subspace of ``V`` by ``V <- {x in V : A x in V}``."""
    A = as_matrix(A, "A")
    # absolute cut scaled by ||A||, as in is_invariant; a rank rule relative to
    # the residual itself would never accept a residual at rounding level
    scale = max(1.0, float(np.linalg.norm(A, 2))) if A.size else 1.0
    while V.dim:
        if is_invariant(A, V, tol):
            return V
        # coordinates c with A V c in V
        resid = A @ V.basis - V.basis @ (V.basis.T @ (A @ V.basis))
        _, s, vt = np.linalg.svd(resid)
        s = np.concatenate([s, np.zeros(V.dim - s.size)])
        keep = vt[s <= tol.subspace_threshold(V.ambient_dim, 2 * V.dim) * scale]
        V = image(V.basis @ keep.T, tol) if keep.shape[0] else Subspace.zero(V.ambient_dim)
    return V


def _invariant_complement(A, V: Subspace, W: Subspace, tol: Tolerance) -> Tuple[Subspace, bool]:
    """An ``A``-invariant complement of ``W`` inside the invariant space ``V``.

    Writes ``A`` on ``V`` in the basis ``[W, U0]`` (``U0`` orthogonal to
    ``W``), where it is block upper-triangular, and looks for a graph
    ``span(U0 + W X)`` that is invariant, i.e. ``A11 X - X A22 = -A12``.
    Returns ``(subspace, exact)``; when the equation is inconsistent the
    largest invariant subspace of ``U0`` is returned with ``exact=False``.
    """
    if W.dim == 0:
        return V, True
    # orthogonal complement of W inside V, in V coordinates
    K = kernel(W.basis.T @ V.basis, tol)
    U0 = image(V.basis @ K.basis, tol) if K.dim else Subspace.zero(V.ambient_dim)
    if U0.dim == 0:
        return U0, True
    Wb, Ub = W.basis, U0.basis
    AU = A @ Ub
    A11 = Wb.T @ A @ Wb
    A12 = Wb.T @ AU
    A22 = Ub.T @ AU
    k, j = Wb.shape[1], Ub.shape[1]
    # vec(A11 X - X A22) = (I_j ⊗ A11 - A22' ⊗ I_k) vec(X), column-major vec
    M = np.kron(np.eye(j), A11) - np.kron(A22.T, np.eye(k))
    rhs = -A12.reshape(-1, order="F")
    x = np.linalg.lstsq(M, rhs, rcond=None)[0]
    X = x.reshape(k, j, order="F")
    cand = image(Ub + Wb @ X, tol)
    if cand.dim == j and is_invariant(A, cand, tol):
        return cand, True
    return largest_invariant_subspace(A, U0, tol), False


def minimal_bisim(sys: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL) -> ReductionResult:
    """Smallest bisimilar system reachable by eigenspace-wise reduction.

    For each generalized eigenspace ``S_k`` the part that can be removed is
    an ``A``-invariant subspace of ``S_k ∩ ker Obs`` meeting the noise
    reachable space only at zero. Inside ``V = S_k ∩ ker Obs`` the reachable
    part is ``W = V ∩ im Reach`` and the removable part is an invariant
    complement of ``W`` in ``V``. The certificate records whether every
    eigenspace was already totally (un)reachable and (un)observable, and
    whether every complement was found exactly (then the result is of
    minimal dimension).
    """
    cls = classify_eigenspaces(sys, tol)
    Gs, Qs = cls.reach_space, cls.unobservable_space
    pieces = []
    exact_all = True
    S_sigma = Subspace.zero(sys.n)
    for rec in cls:
        S = rec.eigenspace
        V = intersect(S, Qs, tol)
        W = intersect(V, Gs, tol)
        piece, exact = _invariant_complement(sys.A, V, W, tol)
        exact_all &= exact
        pieces.append((rec.cluster.center, piece.dim))
        if piece.dim:
            S_sigma = subspace_sum(S_sigma, piece, tol)

    route = "eigenspace-classification" if cls.all_classified else "eigenspace-splitting"
    if S_sigma.dim == 0:
        cert = ReductionCertificate("irreducible", exact_all, tuple(pieces),
                                    detail=f"no removable invariant subspace found ({route})")
        I = np.eye(sys.n)
        return ReductionResult(sys, identity_relation(sys.n), LinearRelation(I, I), None, cert)

    R = orthogonal_complement(S_sigma, tol).basis.T
    if R.shape[0] == 0:
        R = np.zeros((0, sys.n))
    res = quotient_bisim(sys, R, tol)
    detail = f"removed dimension {S_sigma.dim}, reduced dimension {res.decomposition.reduced_dim}"
    if not exact_all:
        detail += "; some eigenspace had no invariant complement, minimality not guaranteed"
    cert = ReductionCertificate(route, exact_all, tuple(pieces), detail)
    return ReductionResult(res.system, res.relation, res.link, res.decomposition, cert)
