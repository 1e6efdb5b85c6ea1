"""Decision procedures for linear equivalence, equivalence of stochastic
external behaviour, and stochastic bisimulation.

All "for every time" quantifiers are truncated at ``n1 + n2`` steps, which is
exact by Cayley-Hamilton applied to ``diag(A1, A2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Optional

import numpy as np
import scipy.linalg

from .numlin import (
    DEFAULT_TOL,
    DimensionError,
    Tolerance,
    intersect,
    invariance_residual,
    is_contained,
    is_invariant,
    kernel,
    containment_residual,
    matrices_equal,
    rank,
)
from .relations import (
    LinearRelation,
    NotTotalError,
    is_total,
    relation_subspace,
    total_ranks,
)
from .sysmodel import (
    StochasticLinearSystem,
    UnstableSystemError,
    noise_reach_space,
    obs_matrix,
    reach_matrix,
    spectral_radius,
)

__all__ = [
    "DegenerateNoiseError",
    "Condition",
    "CheckReport",
    "ExtendedSystem",
    "extended_system",
    "check_linear_equivalence",
    "derive_transformation",
    "check_external_equivalence",
    "maximal_external_relation",
    "check_bisimulation",
    "check_bisim_nondegenerate",
    "check_same_realization",
]


class DegenerateNoiseError(ValueError):
    """The noise does not excite the full state space."""


@dataclass(frozen=True)
class Condition:
    id: str
    passed: bool
    residual: float
    witness: Any = None
    note: str = ""


@dataclass
class CheckReport:
    """Outcome of a check.

    ``verdict`` is ``True``/``False``, or ``None`` when the evaluated
    conditions cannot decide (bisimulation with a relation that is not
    invariant under the joint dynamics).
    """

    kind: str
    verdict: Optional[bool]
    conditions: List[Condition] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    tolerance: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return {True: "true", False: "false", None: "inconclusive"}[self.verdict]

    def __bool__(self) -> bool:
        return self.verdict is True

    def condition(self, cid: str) -> Condition:
        for c in self.conditions:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def failed(self) -> List[Condition]:
        return [c for c in self.conditions if not c.passed]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "status": self.status,
            "conditions": [
                {"id": c.id, "passed": bool(c.passed), "residual": float(c.residual), "note": c.note}
                for c in self.conditions
            ],
            "notes": list(self.notes),
            "tolerance": dict(self.tolerance),
        }

    def to_text(self) -> str:
        lines = [f"{self.kind}: {self.status}"]
        for c in self.conditions:
            flag = "pass" if c.passed else "FAIL"
            extra = f"  ({c.note})" if c.note else ""
            lines.append(f"  {c.id:<5} {flag}  residual={c.residual:.3e}{extra}")
        lines.extend(f"  note: {s}" for s in self.notes)
        tol = ", ".join(f"{k}={v:g}" for k, v in self.tolerance.items())
        lines.append(f"  tolerances: {tol}")
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class ExtendedSystem:
    """Joint system ``diag(A1, A2)``, ``col(B1, B2)``, ``[C1, -C2]``."""

    Atil: np.ndarray
    Btil: np.ndarray
    Ctil: np.ndarray
    n1: int
    n2: int


def _check_io(s1: StochasticLinearSystem, s2: StochasticLinearSystem):
    if s1.m != s2.m:
        raise DimensionError(f"input dimensions differ: {s1.m} vs {s2.m}")
    if s1.p != s2.p:
        raise DimensionError(f"output dimensions differ: {s1.p} vs {s2.p}")


def _check_relation(s1, s2, rel: LinearRelation):
    if rel.n1 != s1.n or rel.n2 != s2.n:
        raise DimensionError(
            f"relation acts on R^{rel.n1} x R^{rel.n2}, systems have n1={s1.n}, n2={s2.n}"
        )


def _joint_A(s1, s2) -> np.ndarray:
    return scipy.linalg.block_diag(s1.A, s2.A)


def extended_system(s1: StochasticLinearSystem, s2: StochasticLinearSystem) -> ExtendedSystem:
    _check_io(s1, s2)
    return ExtendedSystem(_joint_A(s1, s2), np.vstack([s1.B, s2.B]), np.hstack([s1.C, -s2.C]), s1.n, s2.n)


def _eq(cid: str, M1, M2, tol: Tolerance, note: str = "") -> Condition:
    ok, res = matrices_equal(M1, M2, tol)
    return Condition(cid, ok, res, note=note)


def _finish(kind: str, conds: List[Condition], tol: Tolerance, notes=None) -> CheckReport:
    verdict = all(c.passed for c in conds)
    return CheckReport(kind, verdict, conds, list(notes or []), tol.as_dict())


# -- linear equivalence ---------------------------------------------------


def check_linear_equivalence(
    s1: StochasticLinearSystem, s2: StochasticLinearSystem, T, tol: Tolerance = DEFAULT_TOL
) -> CheckReport:
    """Check that ``z = T x`` maps ``s1`` onto ``s2``.

    Raises
    ------
    DimensionError
        If the state dimensions differ or ``T`` is not ``n x n``.
    """
    if s1.n != s2.n:
        raise DimensionError(f"state dimensions differ: {s1.n} vs {s2.n}")
    _check_io(s1, s2)
    T = np.asarray(T, dtype=float)
    if T.shape != (s1.n, s1.n):
        raise DimensionError(f"T must be {s1.n}x{s1.n}, got {T.shape}")

    conds = [_eq("p0", s1.Psi, s2.Psi, tol, "output noise covariances")]
    r = rank(T, tol)
    conds.append(Condition("lin", r == s1.n, float(s1.n - r), note="T invertible"))
    if r < s1.n:
        return _finish("lin", conds, tol, [f"T has rank {r} < {s1.n}"])

    # compare in forms that avoid explicit inversion where possible
    conds.append(_eq("lin", s2.A @ T, T @ s1.A, tol, "A2 T = T A1"))
    conds.append(_eq("lin", s2.B, T @ s1.B, tol, "B2 = T B1"))
    conds.append(_eq("lin", s2.C @ T, s1.C, tol, "C2 T = C1"))
    if s1.l == s2.l:
        conds.append(_eq("lin", s2.G, T @ s1.G, tol, "G2 = T G1"))
    else:
        conds.append(Condition("lin", False, np.inf, note=f"G2 = T G1 impossible: l1={s1.l}, l2={s2.l}"))
    conds.append(_eq("lin", s2.G @ s2.mu, T @ s1.G @ s1.mu, tol, "G2 mu2 = T G1 mu1"))
    return _finish("lin", conds, tol)


def derive_transformation(rel: LinearRelation, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """``T = pinv(R2) R1`` for a total relation that is the graph of ``x2 = T x1``.

    Raises
    ------
    NotTotalError
        If the relation is not total.
    ValueError
        If ``R2`` is not of full column rank ``n2 = n1``, so the relation is
        not the graph of an invertible map.
    """
    if not is_total(rel, tol):
        raise NotTotalError("relation is not total")
    r2 = rank(rel.R2, tol)
    if rel.n1 != rel.n2 or r2 != rel.n2:
        raise ValueError(
            f"relation is not the graph of an invertible map: n1={rel.n1}, n2={rel.n2}, rank R2={r2}"
        )
    T = np.linalg.pinv(rel.R2) @ rel.R1
    if rank(T, tol) != rel.n1:
        raise ValueError("derived transformation is singular")
    return T


# -- external behaviour ---------------------------------------------------


def _obs_pair(s1, s2):
    nt = s1.n + s2.n
    return obs_matrix(s1.A, s1.C, nt), obs_matrix(s2.A, s2.C, nt)


def _output_conditions(s1, s2, Q1, Q2, tol: Tolerance) -> List[Condition]:
    conds = [
        _eq("p0", s1.Psi, s2.Psi, tol, "output noise covariances"),
        _eq("p1", Q1 @ s1.B, Q2 @ s2.B, tol, "input-to-output Markov parameters"),
        _eq("p2", Q1 @ s1.G @ s1.mu, Q2 @ s2.G @ s2.mu, tol, "noise-mean response"),
    ]
    QG1, QG2 = Q1 @ s1.G, Q2 @ s2.G
    ok, res = matrices_equal(QG1 @ QG1.T, QG2 @ QG2.T, tol)
    # least-squares H with QG1 H = QG2; only a diagnostic, since equal images
    # do not imply equal Gram matrices
    H = np.linalg.lstsq(QG1, QG2, rcond=None)[0] if QG1.size and QG2.size else None
    note = "noise output Gram matrices"
    if H is not None:
        h_res = float(np.linalg.norm(QG1 @ H - QG2))
        note += f"; image witness H residual {h_res:.2e}"
    conds.append(Condition("p3", ok, res, witness=H, note=note))
    return conds


def check_external_equivalence(
    s1: StochasticLinearSystem,
    s2: StochasticLinearSystem,
    rel: Optional[LinearRelation] = None,
    tol: Tolerance = DEFAULT_TOL,
) -> CheckReport:
    """Equivalence of output laws from related initial states, for every input.

    With a relation, the verdict is ``p0..p4`` plus totality of the relation.
    Without one, the verdict is ``p0..p3`` plus totality of the maximal
    relation ``ker [Obs(A1, C1), -Obs(A2, C2)]``.
    """
    _check_io(s1, s2)
    Q1, Q2 = _obs_pair(s1, s2)
    conds = _output_conditions(s1, s2, Q1, Q2, tol)
    notes = [f"truncation horizon {s1.n + s2.n}"]
    maximal = LinearRelation(Q1, Q2)
    if rel is None:
        target = maximal
        notes.append("relation: maximal (observability kernel)")
    else:
        _check_relation(s1, s2, rel)
        target = rel
        K = relation_subspace(rel, tol)
        Kmax = relation_subspace(maximal, tol)
        conds.append(Condition("p4", is_contained(K, Kmax, tol), containment_residual(K, Kmax),
                               note="relation inside observability kernel"))
    r1, r2, r12 = total_ranks(target, tol)
    conds.append(Condition("kost", r1 == r2 == r12, float(max(r12 - r1, r12 - r2)),
                           note=f"ranks R1={r1}, R2={r2}, [R1 -R2]={r12}"))
    return _finish("ext", conds, tol, notes)


def maximal_external_relation(
    s1: StochasticLinearSystem, s2: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL
) -> LinearRelation:
    """Largest relation under which the outputs agree in mean:
    ``R_i = Obs(A_i, C_i)`` over ``n1 + n2`` steps."""
    if s1.p != s2.p:
        raise DimensionError(f"output dimensions differ: {s1.p} vs {s2.p}")
    Q1, Q2 = _obs_pair(s1, s2)
    rel = LinearRelation(Q1, Q2)
    K = relation_subspace(rel, tol)
    assert is_invariant(_joint_A(s1, s2), K, tol), "observability kernel is not invariant"
    return rel


# -- bisimulation ---------------------------------------------------------


def check_bisimulation(
    s1: StochasticLinearSystem,
    s2: StochasticLinearSystem,
    rel: LinearRelation,
    tol: Tolerance = DEFAULT_TOL,
) -> CheckReport:
    """Check that a total relation is a stochastic bisimulation.

    Conditions: ``p0`` equal output noise; ``h0`` joint invariance of the
    relation; ``h1`` ``R1 B1 = R2 B2``; ``h2`` ``R1 G1 mu1 = R2 G2 mu2``;
    ``h3`` ``R1 G1 G1' R1' = R2 G2 G2' R2'``; ``h4`` relation inside
    ``ker [C1, -C2]``; ``h5`` ``ker R_i`` meets the noise-reachable space only
    at zero, for ``i = 1, 2``.

    The verdict is ``False`` if any of ``p0, h1..h5`` fails (each is
    necessary on its own), ``True`` if everything passes, and ``None`` if only
    ``h0`` fails.

    Raises
    ------
    NotTotalError
        If the relation is not total.
    """
    _check_io(s1, s2)
    _check_relation(s1, s2, rel)
    if not is_total(rel, tol):
        r1, r2, r12 = total_ranks(rel, tol)
        raise NotTotalError(f"relation is not total (ranks R1={r1}, R2={r2}, [R1 -R2]={r12})")
    R1, R2 = rel.R1, rel.R2
    K = relation_subspace(rel, tol)
    Atil = _joint_A(s1, s2)

    conds = [_eq("p0", s1.Psi, s2.Psi, tol, "output noise covariances")]
    conds.append(Condition("h0", is_invariant(Atil, K, tol), invariance_residual(Atil, K),
                           note="relation invariant under diag(A1, A2)"))
    conds.append(_eq("h1", R1 @ s1.B, R2 @ s2.B, tol, "R1 B1 = R2 B2"))
    conds.append(_eq("h2", R1 @ s1.G @ s1.mu, R2 @ s2.G @ s2.mu, tol, "R1 G1 mu1 = R2 G2 mu2"))
    RG1, RG2 = R1 @ s1.G, R2 @ s2.G
    conds.append(_eq("h3", RG1 @ RG1.T, RG2 @ RG2.T, tol, "R1 G1 G1' R1' = R2 G2 G2' R2'"))
    KC = kernel(np.hstack([s1.C, -s2.C]), tol)
    conds.append(Condition("h4", is_contained(K, KC, tol), containment_residual(K, KC),
                           note="relation inside ker [C1, -C2]"))
    for i, (s, R) in enumerate(((s1, R1), (s2, R2)), start=1):
        reach = noise_reach_space(s, tol)
        meet = intersect(reach, kernel(R, tol), tol)
        if reach.dim:
            sv = np.linalg.svd(R @ reach.basis, compute_uv=False)
            res = float(sv.min()) if sv.size == reach.dim else 0.0
        else:
            res = 0.0
        conds.append(Condition("h5", meet.dim == 0, res, witness=meet,
                               note=f"i={i}: dim(reach space ∩ ker R{i}) = {meet.dim}"))

    necessary = [c for c in conds if c.id != "h0"]
    notes = []
    if not all(c.passed for c in necessary):
        verdict: Optional[bool] = False
    elif conds[1].passed:
        verdict = True
    else:
        verdict = None
        notes.append("relation is not invariant under the joint dynamics; the algebraic test is not conclusive")
    return CheckReport("bisim", verdict, conds, notes, tol.as_dict())


def check_bisim_nondegenerate(
    s1: StochasticLinearSystem, s2: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL
) -> CheckReport:
    """Bisimulation check for systems whose noise excites every state direction.

    In that case bisimulation coincides with linear equivalence, and the only
    candidate transformation is ``T = Reach(A2, G2) pinv(Reach(A1, G1))``.

    Raises
    ------
    DegenerateNoiseError
        If ``rank Reach(A_i, G_i) < n_i`` for either system.
    """
    _check_io(s1, s2)
    reaches = []
    for i, s in enumerate((s1, s2), start=1):
        Rc = reach_matrix(s.A, s.G, s.n)
        r = rank(Rc, tol)
        if r < s.n:
            raise DegenerateNoiseError(
                f"system {i} has degenerate noise (rank Reach = {r} < n = {s.n}); use check_bisimulation"
            )
        reaches.append(Rc)
    if s1.n != s2.n:
        return CheckReport("bisim-nondegenerate", False,
                           [Condition("lin", False, float(abs(s1.n - s2.n)), note="state dimensions differ")],
                           [f"n1={s1.n} != n2={s2.n}"], tol.as_dict())
    if s1.l != s2.l:
        return CheckReport("bisim-nondegenerate", False,
                           [Condition("lin", False, np.inf, note="noise dimensions differ")],
                           [f"l1={s1.l} != l2={s2.l}"], tol.as_dict())
    # graph of x2 = T x1 with T = Reach2 pinv(Reach1), presented through pseudoinverses
    rel = LinearRelation(np.linalg.pinv(reaches[0]), np.linalg.pinv(reaches[1]))
    if not is_total(rel, tol):
        return CheckReport("bisim-nondegenerate", False,
                           [Condition("kost", False, 1.0, note="candidate relation is not total")],
                           [], tol.as_dict())
    T = derive_transformation(rel, tol)
    rep = check_linear_equivalence(s1, s2, T, tol)
    rep.kind = "bisim-nondegenerate"
    rep.conditions.append(Condition("kost", True, 0.0, witness=T, note="candidate transformation"))
    return rep


def check_same_realization(
    s1: StochasticLinearSystem, s2: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL
) -> CheckReport:
    """Whether two stable, zero-mean, input-free systems generate the same
    stationary Gaussian output process (``p0`` and ``p3``)."""
    _check_io(s1, s2)
    for i, s in enumerate((s1, s2), start=1):
        rho = spectral_radius(s.A)
        if rho >= 1.0 - tol.eq_abs:
            raise UnstableSystemError(f"system {i} is not stable (spectral radius {rho:.6g})")
        if np.any(s.mu != 0):
            raise ValueError(f"system {i} has nonzero noise mean")
    Q1, Q2 = _obs_pair(s1, s2)
    conds = _output_conditions(s1, s2, Q1, Q2, tol)
    conds = [c for c in conds if c.id in ("p0", "p3")]
    return _finish("realization", conds, tol)
