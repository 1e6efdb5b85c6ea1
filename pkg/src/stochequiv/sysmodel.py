"""Discrete-time stochastic linear control systems and their exact moments.

A system is

    x(t+1) = A x(t) + B u(t) + G w(t),    w(t) ~ N(mu, I)
    y(t)   = C x(t) + nu(t),              nu(t) ~ N(0, Psi)

with white, mutually independent ``w`` and ``nu``. The disturbance covariance
is normalized to the identity, so any degeneracy of the state noise lives in
``G``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .numlin import (
    DEFAULT_TOL,
    DimensionError,
    Subspace,
    Tolerance,
    as_matrix,
    image,
    kernel,
)

__all__ = [
    "UnstableSystemError",
    "StochasticLinearSystem",
    "InputSequence",
    "MomentSequence",
    "reach_matrix",
    "obs_matrix",
    "matrix_powers",
    "spectral_radius",
    "conditional_moments",
    "state_support",
    "state_means",
    "noise_reach_space",
    "unobservable_space",
    "stationary_state_covariance",
]


class UnstableSystemError(ValueError):
    """Raised when an operation needs a Schur-stable state matrix."""


def _vector(v, name: str, size: int) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.size != size:
        raise DimensionError(f"{name} has length {arr.size}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StochasticLinearSystem:
    """System matrices ``(A, B, C, G)``, noise mean ``mu`` and output-noise
    covariance ``Psi``.

    ``B`` may be given with zero columns (no input) and ``Psi`` defaults to
    the zero matrix (no output noise). ``Psi`` is symmetrized on construction
    and must be positive semi-definite up to ``psd_tol``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray
    mu: Optional[np.ndarray] = None
    Psi: Optional[np.ndarray] = None
    name: Optional[str] = None
    psd_tol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        A = as_matrix(A, "A", (n, n))

        B = np.asarray(self.B, dtype=float)
        B = as_matrix(B, "B", (n, B.size // n) if (B.ndim < 2 and n > 0) else None)
        C = np.asarray(self.C, dtype=float)
        C = as_matrix(C, "C", (C.size // n, n) if (C.ndim < 2 and n > 0) else None)
        G = np.asarray(self.G, dtype=float)
        G = as_matrix(G, "G", (n, G.size // n) if (G.ndim < 2 and n > 0) else None)
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
        if G.shape[0] != n:
            raise DimensionError(f"G has {G.shape[0]} rows, expected {n}")
        p, l = C.shape[0], G.shape[1]

        mu = np.zeros(l) if self.mu is None else _vector(self.mu, "mu", l)
        Psi = np.zeros((p, p)) if self.Psi is None else as_matrix(self.Psi, "Psi", (p, p))
        Psi = 0.5 * (Psi + Psi.T)
        if p:
            lo = float(np.linalg.eigvalsh(Psi).min())
            scale = max(1.0, float(np.abs(Psi).max()))
            if lo < -self.psd_tol * scale:
                raise ValueError(f"Psi is not positive semi-definite (smallest eigenvalue {lo:.3e})")

        for key, val in (("A", A), ("B", B), ("C", C), ("G", G), ("mu", mu), ("Psi", Psi)):
            object.__setattr__(self, key, _freeze(val))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.G.shape[1]

    def replace(self, **changes) -> "StochasticLinearSystem":
        fields = dict(A=self.A, B=self.B, C=self.C, G=self.G, mu=self.mu, Psi=self.Psi, name=self.name)
        fields.update(changes)
        return StochasticLinearSystem(**fields)

    def transformed(self, T) -> "StochasticLinearSystem":
        """System in coordinates ``z = T x``."""
        T = as_matrix(T, "T", (self.n, self.n))
        Tinv = np.linalg.inv(T)
        return self.replace(A=T @ self.A @ Tinv, B=T @ self.B, C=self.C @ Tinv, G=T @ self.G)

    def same_as(self, other: "StochasticLinearSystem") -> bool:
        """Exact equality of all numeric data."""
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) and getattr(self, k).shape == getattr(other, k).shape
            for k in ("A", "B", "C", "G", "mu", "Psi")
        )

    def __repr__(self) -> str:
        label = f"{self.name!r}, " if self.name else ""
        return f"StochasticLinearSystem({label}n={self.n}, m={self.m}, l={self.l}, p={self.p})"


@dataclass(frozen=True, eq=False)
class InputSequence:
    """Deterministic inputs ``u(0), ..., u(T-1)`` stored as a ``(T, m)`` array."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.ndim != 2:
            raise DimensionError("input values must be a (T, m) array")
        if not np.all(np.isfinite(vals)):
            raise ValueError("input values contain non-finite entries")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, horizon: int, m: int) -> "InputSequence":
        return cls(np.zeros((horizon, m)))


def _inputs(u, sys: StochasticLinearSystem, horizon: Optional[int] = None) -> np.ndarray:
    if u is None:
        if horizon is None:
            raise ValueError("either an input sequence or a horizon is required")
        return np.zeros((horizon, sys.m))
    if isinstance(u, (int, np.integer)):
        return np.zeros((int(u), sys.m))
    if isinstance(u, InputSequence):
        vals = u.values
    else:
        vals = np.asarray(u, dtype=float)
        if vals.ndim == 1 and sys.m == 1:
            vals = vals.reshape(-1, 1)
        vals = InputSequence(vals).values
    if vals.shape[1] != sys.m:
        raise DimensionError(f"inputs have {vals.shape[1]} channels, system expects {sys.m}")
    if horizon is not None:
        if vals.shape[0] < horizon:
            raise DimensionError(f"input sequence has {vals.shape[0]} steps, need {horizon}")
        vals = vals[:horizon]
    return vals


def matrix_powers(A, count: int) -> List[np.ndarray]:
    """``[I, A, A^2, ..., A^(count-1)]`` by repeated multiplication."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    out = []
    P = np.eye(n)
    for _ in range(count):
        out.append(P)
        P = A @ P
    return out


def reach_matrix(A, M, steps: int) -> np.ndarray:
    """``[M, A M, ..., A^(steps-1) M]``."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    M = np.asarray(M, dtype=float)
    M = as_matrix(M, "M", (n, M.size // n) if (M.ndim < 2 and n > 0) else None)
    if M.shape[0] != n:
        raise DimensionError(f"M has {M.shape[0]} rows, expected {n}")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    blocks = [M]
    for _ in range(steps - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def obs_matrix(A, C, steps: int) -> np.ndarray:
    """``[C; C A; ...; C A^(steps-1)]``, i.e. ``reach_matrix(A.T, C.T, steps).T``."""
    A = as_matrix(A, "A")
    C = np.asarray(C, dtype=float)
    n = A.shape[0]
    C = as_matrix(C, "C", (C.size // n, n) if (C.ndim < 2 and n > 0) else None)
    return reach_matrix(A.T, C.T, steps).T


def spectral_radius(A) -> float:
    A = as_matrix(A, "A")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(A))))


@dataclass(frozen=True, eq=False)
class MomentSequence:
    """Conditional means and covariance tables over ``t = 0..horizon``.

    ``state_covs[t, s]`` is ``cov(x(t), x(s))``; the table is filled for all
    index pairs with ``state_covs[s, t] = state_covs[t, s].T``.
    """

    horizon: int
    state_means: np.ndarray
    output_means: np.ndarray
    state_covs: np.ndarray
    output_covs: np.ndarray

    def state_cov(self, t: int, s: Optional[int] = None) -> np.ndarray:
        return self.state_covs[t, t if s is None else s]

    def output_cov(self, t: int, s: Optional[int] = None) -> np.ndarray:
        return self.output_covs[t, t if s is None else s]


def state_means(sys: StochasticLinearSystem, x0, u, horizon: Optional[int] = None) -> np.ndarray:
    """Conditional state means for ``t = 0..T`` as a ``(T+1, n)`` array."""
    x0 = _vector(x0, "x0", sys.n)
    uu = _inputs(u, sys, horizon)
    T = uu.shape[0]
    drift = sys.G @ sys.mu
    means = np.empty((T + 1, sys.n))
    means[0] = x0
    for t in range(T):
        means[t + 1] = sys.A @ means[t] + sys.B @ uu[t] + drift
    return means


def conditional_moments(
    sys: StochasticLinearSystem,
    x0,
    u,
    horizon: Optional[int] = None,
    literal_output_noise: bool = False,
) -> MomentSequence:
    """Exact means and covariances of the state and output processes.

    Parameters
    ----------
    sys
        The system.
    x0
        Deterministic initial state.
    u
        :class:`InputSequence`, ``(T, m)`` array, or ``None`` for zero input
        (``horizon`` then sets ``T``).
    literal_output_noise
        By default ``Psi`` enters the output covariance only when the two
        times coincide, since ``nu`` is white. ``True`` adds ``Psi`` to every
        ``cov(y(t), y(s))``, for comparison with that reading.

    Notes
    -----
    The state covariance is ``cov(x(t), x(s)) = sum_{h<s} A^(t-s+h) G G' (A^h)'``
    for ``t >= s``; the inner sum does not depend on ``t``, so it is
    accumulated once per ``s`` and premultiplied by ``A^(t-s)``.
    """
    uu = _inputs(u, sys, horizon)
    T = uu.shape[0]
    n, p = sys.n, sys.p
    xm = state_means(sys, x0, uu)
    ym = xm @ sys.C.T

    powers = matrix_powers(sys.A, T + 1)
    GG = sys.G @ sys.G.T
    # P[s] = sum_{h<s} A^h G G' (A^h)'
    P = np.zeros((T + 1, n, n))
    for s in range(1, T + 1):
        Ah = powers[s - 1]
        P[s] = P[s - 1] + Ah @ GG @ Ah.T

    Sx = np.zeros((T + 1, T + 1, n, n))
    Sy = np.zeros((T + 1, T + 1, p, p))
    for s in range(T + 1):
        for t in range(s, T + 1):
            cov = powers[t - s] @ P[s]
            Sx[t, s] = cov
            Sx[s, t] = cov.T
            ycov = sys.C @ cov @ sys.C.T
            if literal_output_noise or t == s:
                ycov = ycov + sys.Psi
            Sy[t, s] = ycov
            Sy[s, t] = ycov.T
        Sx[s, s] = 0.5 * (Sx[s, s] + Sx[s, s].T)
        Sy[s, s] = 0.5 * (Sy[s, s] + Sy[s, s].T)
    return MomentSequence(T, xm, ym, Sx, Sy)


def state_support(
    sys: StochasticLinearSystem, x0, u, t: int, tol: Tolerance = DEFAULT_TOL
) -> Tuple[np.ndarray, Subspace]:
    """Affine support ``offset + directions`` of the state at time ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    uu = _inputs(u, sys, t)
    offset = state_means(sys, x0, uu)[t]
    if t == 0 or sys.l == 0:
        return offset, Subspace.zero(sys.n)
    return offset, image(reach_matrix(sys.A, sys.G, t), tol)


def noise_reach_space(sys: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """Image of ``Reach_n(A, G)``: the directions the noise can excite."""
    if sys.n == 0 or sys.l == 0:
        return Subspace.zero(sys.n)
    return image(reach_matrix(sys.A, sys.G, sys.n), tol)


def unobservable_space(sys: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL) -> Subspace:
    """Kernel of ``Obs_n(A, C)``."""
    if sys.n == 0:
        return Subspace.zero(0)
    return kernel(obs_matrix(sys.A, sys.C, sys.n), tol)


def stationary_state_covariance(sys: StochasticLinearSystem, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Solution of ``X = A X A' + G G'`` for a Schur-stable ``A``.

    Raises
    ------
    UnstableSystemError
        If the spectral radius of ``A`` is at least ``1 - eq_abs``.
    """
    rho = spectral_radius(sys.A)
    if rho >= 1.0 - tol.eq_abs:
        raise UnstableSystemError(f"state matrix is not stable (spectral radius {rho:.6g})")
    n = sys.n
    if n == 0:
        return np.zeros((0, 0))
    GG = sys.G @ sys.G.T
    X = scipy.linalg.solve_discrete_lyapunov(sys.A, GG)
    X = 0.5 * (X + X.T)
    resid = np.linalg.norm(X - sys.A @ X @ sys.A.T - GG)
    if resid > 1e-8 * (1.0 + np.linalg.norm(GG)):
        # one refinement step on the residual equation
        R = sys.A @ X @ sys.A.T + GG - X
        X = X + scipy.linalg.solve_discrete_lyapunov(sys.A, R)
        X = 0.5 * (X + X.T)
    return X
