"""Seeded Monte Carlo simulation and empirical checks of equivalence claims.

Trajectories are generated in fixed-size chunks. Chunk ``c`` of stream ``s``
draws from ``SeedSequence(seed, spawn_key=(s, c))``, so an ensemble depends
only on ``(seed, stream, trajectories, horizon, chunk_size)`` and not on how
chunks are scheduled.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .numlin import DEFAULT_TOL, DimensionError, Tolerance, as_matrix, rank_and_kernel
from .relations import LinearRelation, NotTotalError, is_total
from .sysmodel import StochasticLinearSystem, _inputs, _vector, state_support

__all__ = [
    "SimulationOverflowError",
    "SimulationConfig",
    "Ensemble",
    "simulate",
    "EmpiricalMoments",
    "empirical_moments",
    "BoxSet",
    "LawComparison",
    "compare_output_laws",
    "BoxTestReport",
    "check_bisim_condition_empirical",
    "support_distance",
    "noise_factor",
]

OVERFLOW_LIMIT = 1e300
GATE = 5.0


class SimulationOverflowError(OverflowError):
    """Simulated values exceeded the overflow guard."""


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    trajectories: int = 100_000
    horizon: int = 10
    chunk_size: int = 8192
    workers: int = 1

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("trajectories must be at least 1")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Sampled trajectories: ``states[k, t]`` and ``outputs[k, t]`` for
    ``t = 0..horizon``."""

    states: np.ndarray
    outputs: np.ndarray
    config: SimulationConfig

    @property
    def trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def to_text(self) -> str:
        """Rows ``trajectory t x_1..x_n y_1..y_p`` with 17 significant digits."""
        N, T1, n = self.states.shape
        p = self.outputs.shape[2]
        cols = ["trajectory", "t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(p)]
        lines = [
            f"# seed={self.config.seed} trajectories={N} horizon={T1 - 1} chunk_size={self.config.chunk_size}",
            "# " + " ".join(cols),
        ]
        idx = np.indices((N, T1)).reshape(2, -1).T
        data = np.hstack([self.states.reshape(N * T1, n), self.outputs.reshape(N * T1, p)])
        for (k, t), row in zip(idx, data):
            lines.append(f"{k} {t} " + " ".join("%.17g" % v for v in row))
        return "\n".join(lines) + "\n"


def noise_factor(Psi, clip: float = 1e-12) -> np.ndarray:
    """Symmetric square root ``F`` with ``F F' = Psi``.

    Eigenvalues above ``-clip * max(1, ||Psi||)`` are clipped to zero; more
    negative ones are rejected.
    """
    Psi = as_matrix(Psi, "Psi")
    if Psi.size == 0:
        return Psi.copy()
    w, V = np.linalg.eigh(0.5 * (Psi + Psi.T))
    floor = -clip * max(1.0, float(np.abs(w).max()))
    if w.min() < floor:
        raise ValueError(f"Psi is not positive semi-definite (eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def _chunk(sys, x0, uu, F, T, count, seed, key) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
    n, p, l = sys.n, sys.p, sys.l
    X = np.empty((count, T + 1, n))
    X[:, 0] = x0
    W = rng.standard_normal((count, T, l)) + sys.mu if T else np.empty((count, 0, l))
    V = rng.standard_normal((count, T + 1, p))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            X[:, t + 1] = X[:, t] @ sys.A.T + uu[t] @ sys.B.T + W[:, t] @ sys.G.T
        Y = X @ sys.C.T + V @ F.T
    if not (np.all(np.abs(X) < OVERFLOW_LIMIT) and np.all(np.abs(Y) < OVERFLOW_LIMIT)):
        raise SimulationOverflowError(
            f"simulated values exceed {OVERFLOW_LIMIT:g}; shorten the horizon or stabilize the system"
        )
    return X, Y


def simulate(
    sys: StochasticLinearSystem, x0, u, cfg: SimulationConfig, stream: int = 0
) -> Ensemble:
    """Sample ``cfg.trajectories`` independent trajectories over ``cfg.horizon`` steps.

    The disturbance is drawn as ``mu + standard normal`` and mapped through
    ``G``, so a rank-deficient ``G`` gives exactly degenerate states. Output
    noise uses a symmetric factor of ``Psi``.
    """
    x0 = _vector(np.zeros(sys.n) if x0 is None else x0, "x0", sys.n)
    T = cfg.horizon
    uu = _inputs(u, sys, T)
    F = noise_factor(sys.Psi)
    sizes = []
    left = cfg.trajectories
    while left > 0:
        sizes.append(min(cfg.chunk_size, left))
        left -= sizes[-1]
    jobs = [(c, k) for c, k in enumerate(sizes)]

    def run(job):
        c, k = job
        return _chunk(sys, x0, uu, F, T, k, int(cfg.seed), (int(stream), c))

    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    X = np.concatenate([p[0] for p in parts])
    Y = np.concatenate([p[1] for p in parts])
    X.setflags(write=False)
    Y.setflags(write=False)
    return Ensemble(X, Y, cfg)


@dataclass(frozen=True, eq=False)
class EmpiricalMoments:
    """Sample means ``(T+1, d)``, covariances ``(T+1, d, d)`` and lag-one
    cross-covariances ``lag1[t] = cov(v(t), v(t-1))`` for ``t >= 1``
    (``lag1[0]`` is zero)."""

    horizon: int
    means: np.ndarray
    covs: np.ndarray
    lag1: np.ndarray
    trajectories: int


def empirical_moments(ens: Ensemble, process: str = "output") -> EmpiricalMoments:
    """Unbiased sample moments of the state or output process."""
    if process not in ("output", "state"):
        raise ValueError("process must be 'output' or 'state'")
    Z = ens.outputs if process == "output" else ens.states
    N = Z.shape[0]
    if N < 2:
        raise ValueError("at least two trajectories are needed")
    means = Z.mean(axis=0)
    D = Z - means
    covs = np.einsum("kti,ktj->tij", D, D) / (N - 1)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    lag1 = np.zeros_like(covs)
    lag1[1:] = np.einsum("kti,ktj->tij", D[:, 1:], D[:, :-1]) / (N - 1)
    return EmpiricalMoments(ens.horizon, means, covs, lag1, N)


# -- output-law comparison --------------------------------------------------


@dataclass
class LawComparison:
    passed: bool
    max_z: float
    worst: Tuple[str, int, Tuple[int, ...]]
    trajectories: int
    gate: float = GATE

    def to_dict(self) -> dict:
        return {
            "passed": self.passed, "max_z": self.max_z, "worst": list(self.worst[:2]) + [list(self.worst[2])],
            "trajectories": self.trajectories, "gate": self.gate,
        }


def _cov_se(var_a, var_b, cov_ab, N):
    # standard error of a Gaussian sample covariance entry
    return np.sqrt(np.maximum(var_a * var_b + cov_ab**2, 0.0) / N)


def compare_output_laws(
    s1: StochasticLinearSystem,
    s2: StochasticLinearSystem,
    x0_pair,
    u,
    cfg: SimulationConfig,
    gate: float = GATE,
) -> LawComparison:
    """Two-sample comparison of output means, covariances and lag-one
    cross-covariances at every ``t <= horizon``.

    Passes iff every deviation is within ``gate`` standard errors. Standard
    errors use Gaussian fourth-moment formulas, with an absolute floor so
    that deterministic outputs are compared up to rounding.
    """
    if s1.p != s2.p:
        raise DimensionError(f"output dimensions differ: {s1.p} vs {s2.p}")
    e1 = empirical_moments(simulate(s1, x0_pair[0], u, cfg, stream=0))
    e2 = empirical_moments(simulate(s2, x0_pair[1], u, cfg, stream=1))
    N = cfg.trajectories
    d1 = np.einsum("tii->ti", e1.covs)
    d2 = np.einsum("tii->ti", e2.covs)

    def floor(a, b):
        return 1e-9 * (1.0 + np.maximum(np.abs(a), np.abs(b)))

    checks = []
    se = np.sqrt(d1 / N + d2 / N)
    checks.append(("mean", np.abs(e1.means - e2.means) / np.maximum(se, floor(e1.means, e2.means))))
    se = np.sqrt(_cov_se(d1[:, :, None], d1[:, None, :], e1.covs, N) ** 2
                 + _cov_se(d2[:, :, None], d2[:, None, :], e2.covs, N) ** 2)
    checks.append(("cov", np.abs(e1.covs - e2.covs) / np.maximum(se, floor(e1.covs, e2.covs))))
    if e1.horizon >= 1:
        a, b = e1.lag1[1:], e2.lag1[1:]
        se = np.sqrt(_cov_se(d1[1:, :, None], d1[:-1, None, :], a, N) ** 2
                     + _cov_se(d2[1:, :, None], d2[:-1, None, :], b, N) ** 2)
        z = np.abs(a - b) / np.maximum(se, floor(a, b))
        checks.append(("lag1", np.concatenate([np.zeros((1,) + z.shape[1:]), z])))
    worst_z, worst = -1.0, ("mean", 0, ())
    for label, z in checks:
        if z.size == 0:
            continue
        idx = np.unravel_index(int(np.argmax(z)), z.shape)
        if z[idx] > worst_z:
            worst_z, worst = float(z[idx]), (label, int(idx[0]), tuple(int(i) for i in idx[1:]))
    worst_z = max(worst_z, 0.0)
    return LawComparison(bool(worst_z <= gate), worst_z, worst, N, gate)


# -- box probabilities -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Product of closed intervals; infinite bounds are allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("lower and upper bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def ambient_dim(self) -> int:
        return self.lower.size

    def contains(self, X, slack: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower - slack) & (X <= self.upper + slack), axis=1)


def _fourier_motzkin(Ez: np.ndarray, Ev: np.ndarray, c: np.ndarray, max_rows: int = 20000):
    """Project ``{(z, v): Ez z + Ev v <= c}`` onto ``v``.

    Returns ``(Ev', c')`` describing the projection as ``Ev' v <= c'``.
    """
    rows = [(Ez[i].copy(), Ev[i].copy(), float(c[i])) for i in range(len(c))]
    q = Ez.shape[1]
    for j in range(q):
        pos, neg, zero = [], [], []
        for r in rows:
            a = r[0][j]
            if abs(a) <= 1e-12 * max(1.0, np.abs(r[0]).max()):
                zero.append(r)
            elif a > 0:
                pos.append(r)
            else:
                neg.append(r)
        new = list(zero)
        for (zp, vp, cp), (zn, vn, cn) in itertools.product(pos, neg):
            ap, an = zp[j], -zn[j]
            new.append((an * zp + ap * zn, an * vp + ap * vn, an * cp + ap * cn))
        for r in new:
            r[0][j] = 0.0
        # normalize and drop duplicates
        uniq = {}
        for zr, vr, cr in new:
            s = max(np.abs(zr).max(initial=0.0), np.abs(vr).max(initial=0.0))
            if s <= 1e-14:
                # constant row 0 <= c: drop if satisfied, otherwise the set is empty
                if cr < -1e-12:
                    uniq[("empty",)] = (np.zeros_like(zr), np.zeros_like(vr), -1.0)
                continue
            key = tuple(np.round(np.concatenate([zr, vr, [cr]]) / s, 12))
            uniq.setdefault(key, (zr / s, vr / s, cr / s))
        rows = list(uniq.values())
        if len(rows) > max_rows:
            raise RuntimeError("polyhedral projection grew too large")
    if not rows:
        return np.zeros((0, Ev.shape[1])), np.zeros(0)
    return np.array([r[1] for r in rows]), np.array([r[2] for r in rows])


class _RelationImage:
    """Membership test for ``R2^{-1}(R1 (box ∩ (offset + span D)))``."""

    def __init__(self, rel: LinearRelation, box: BoxSet, offset, D: np.ndarray, tol: float = 1e-8):
        R1, R2 = rel.R1, rel.R2
        self.R2 = R2
        self.tol = tol
        n1 = R1.shape[1]
        off = np.asarray(offset, dtype=float)
        k = D.shape[1]
        M = R1 @ D
        # pseudoinverse and null space from one SVD, so both use the same rank
        r, N = rank_and_kernel(M) if k else (0, None)
        if r:
            U, sv, Vt = np.linalg.svd(M, full_matrices=False)
            Mp = Vt[:r].T @ (U[:, :r].T / sv[:r, None])
        else:
            Mp = np.zeros((k, R1.shape[0]))
        N = N.basis if k else np.zeros((0, 0))
        self.base = R1 @ off
        # b is reachable iff (I - M M^+)(b - base) = 0
        self.res_proj = np.eye(R1.shape[0]) - M @ Mp
        # a = off + D M^+ (b - base) + D N z must lie in the box
        self.L = D @ Mp
        E = D @ N if k else np.zeros((n1, 0))
        finite_hi = np.isfinite(box.upper)
        finite_lo = np.isfinite(box.lower)
        I = np.eye(n1)
        Ez = np.vstack([E[finite_hi], -E[finite_lo]])
        Ev = np.vstack([I[finite_hi], -I[finite_lo]])
        c = np.concatenate([box.upper[finite_hi] - off[finite_hi], off[finite_lo] - box.lower[finite_lo]])
        # constraints on v = L (b - base)
        self.Av, self.cv = _fourier_motzkin(Ez, Ev, c)
        self.scale = 1.0 + float(np.abs(c).max(initial=0.0))
        self.n_constraints = len(self.cv)

    def contains(self, X2: np.ndarray) -> np.ndarray:
        b = X2 @ self.R2.T - self.base
        bs = 1.0 + np.abs(b).max(axis=1)
        ok = np.linalg.norm(b @ self.res_proj.T, axis=1) <= self.tol * bs
        if self.n_constraints:
            v = b @ self.L.T
            slack = self.tol * (self.scale + np.abs(v).max(axis=1, initial=0.0))
            ok &= np.all(v @ self.Av.T <= self.cv + slack[:, None], axis=1)
        return ok


@dataclass
class BoxTestReport:
    condition: str
    t: int
    p_left: float
    p_right: float
    standard_error: float
    passed: bool
    trajectories: int
    constraints: int
    gate: float = GATE

    @property
    def z(self) -> float:
        d = abs(self.p_left - self.p_right)
        return d / self.standard_error if self.standard_error > 0 else (0.0 if d == 0 else np.inf)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition, "t": self.t, "p_left": self.p_left, "p_right": self.p_right,
            "standard_error": self.standard_error, "z": float(self.z), "passed": self.passed,
            "trajectories": self.trajectories, "gate": self.gate,
        }


def check_bisim_condition_empirical(
    s1: StochasticLinearSystem,
    s2: StochasticLinearSystem,
    rel: LinearRelation,
    x0_pair,
    u,
    t: int,
    box: BoxSet,
    cfg: SimulationConfig,
    condition: str = "i",
    intersect_support: bool = True,
    gate: float = GATE,
    tol: Tolerance = DEFAULT_TOL,
) -> BoxTestReport:
    """Estimate both sides of the box transfer condition at time ``t``.

    Left: ``P(x1(t) in box)``. Right: ``P(x2(t) in R(box ∩ supp x1(t)))``
    with ``R(X) = R2^{-1}(R1 X)``. Condition ``"ii"`` swaps the roles of the
    two systems. ``intersect_support=False`` drops the support intersection,
    which is the condition appropriate only for non-degenerate noise.

    Passes iff ``|p_left - p_right| <= gate * se`` with the two-sample
    binomial standard error, floored at ``1/N``.
    """
    if condition not in ("i", "ii"):
        raise ValueError("condition must be 'i' or 'ii'")
    if condition == "ii":
        s1, s2, rel = s2, s1, rel.swapped()
        x0_pair = (x0_pair[1], x0_pair[0])
    if rel.n1 != s1.n or rel.n2 != s2.n:
        raise DimensionError("relation does not match the systems")
    if box.ambient_dim != s1.n:
        raise DimensionError(f"box lives in R^{box.ambient_dim}, system has n={s1.n}")
    if not is_total(rel, tol):
        raise NotTotalError("relation is not total")

    step = SimulationConfig(cfg.seed, cfg.trajectories, t, cfg.chunk_size, cfg.workers)
    X1 = simulate(s1, x0_pair[0], u, step, stream=0).states[:, t]
    X2 = simulate(s2, x0_pair[1], u, step, stream=1).states[:, t]

    if intersect_support:
        off, S = state_support(s1, x0_pair[0], u, t, tol)
        D = S.basis
    else:
        off, D = np.zeros(s1.n), np.eye(s1.n)
    target = _RelationImage(rel, box, off, D)
    scale = 1e-8 * (1.0 + np.abs(X1).max(initial=0.0))
    p1 = float(np.mean(box.contains(X1, slack=scale)))
    p2 = float(np.mean(target.contains(X2)))
    N = cfg.trajectories
    se = max(np.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / N), 1.0 / N)
    return BoxTestReport(condition, t, p1, p2, float(se), bool(abs(p1 - p2) <= gate * se), N,
                         target.n_constraints, gate)


def support_distance(ens: Ensemble, sys: StochasticLinearSystem, x0, u, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Largest distance of sampled states to the analytic affine support, per time."""
    out = np.zeros(ens.horizon + 1)
    for t in range(ens.horizon + 1):
        off, S = state_support(sys, x0, u, t, tol)
        D = ens.states[:, t] - off
        if S.dim:
            D = D - (D @ S.basis) @ S.basis.T
        out[t] = float(np.linalg.norm(D, axis=1).max(initial=0.0))
    return out
