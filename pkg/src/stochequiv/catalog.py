"""Small reference systems with known equivalence properties."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .relations import LinearRelation
from .sysmodel import StochasticLinearSystem

__all__ = [
    "degenerate_integrator_pair",
    "external_not_bisimilar_pair",
    "one_step_counterexample_pair",
    "sum_closure_system",
    "sum_closure_relations",
    "scalar_ar1",
]

Pair = Tuple[StochasticLinearSystem, StochasticLinearSystem, LinearRelation]


def _scalar_integrator(name: str) -> StochasticLinearSystem:
    return StochasticLinearSystem(A=[[1.0]], B=[[1.0]], C=[[1.0]], G=[[1.0]], name=name)


def degenerate_integrator_pair() -> Pair:
    """Two-state system whose noise only drives the first (integrator)
    coordinate, next to a scalar integrator; related by ``x1[0] = x2``.

    Bisimilar, although the first system's state distribution is degenerate.
    """
    s1 = StochasticLinearSystem(
        A=[[1.0, 0.0], [0.0, 2.0]], B=[[1.0], [0.0]], C=[[1.0, 0.0]], G=[[1.0], [0.0]],
        name="degenerate-2d",
    )
    return s1, _scalar_integrator("integrator"), LinearRelation([[1.0, 0.0]], [[1.0]])


def external_not_bisimilar_pair() -> Pair:
    """As :func:`degenerate_integrator_pair` but with ``G1 = I``: the unstable
    second coordinate is now noisy yet unobservable. Same output law, no
    bisimulation."""
    s1 = StochasticLinearSystem(
        A=[[1.0, 0.0], [0.0, 2.0]], B=[[1.0], [0.0]], C=[[1.0, 0.0]], G=np.eye(2),
        name="full-noise-2d",
    )
    return s1, _scalar_integrator("integrator"), LinearRelation([[1.0, 0.0]], [[1.0]])


def one_step_counterexample_pair(a: float = 0.9, b: float = 0.8, sigma: float = 1.0) -> Pair:
    """Pair that agrees on one-step transition probabilities along
    ``x1[1] = x2[1]`` but not on two-step ones.

    The first system feeds its noisy second coordinate into the first, the
    second keeps them decoupled.
    """
    G = [[0.0], [sigma]]
    C = [[0.0, 1.0]]
    B = np.zeros((2, 1))
    s1 = StochasticLinearSystem(A=[[b, 1.0], [0.0, a]], B=B, C=C, G=G, name="coupled")
    s2 = StochasticLinearSystem(A=[[b, 0.0], [0.0, a]], B=B, C=C, G=G, name="decoupled")
    return s1, s2, LinearRelation([[0.0, 1.0]], [[0.0, 1.0]])


def sum_closure_system(alpha: float = 0.5, beta: float = 0.3) -> StochasticLinearSystem:
    """``A = diag(alpha, alpha, beta)``, noise on the first coordinate,
    output from the third."""
    return StochasticLinearSystem(
        A=np.diag([alpha, alpha, beta]), B=np.zeros((3, 1)), C=[[0.0, 0.0, 1.0]], G=[[1.0], [0.0], [0.0]],
        name="sum-closure",
    )


def sum_closure_relations() -> Tuple[LinearRelation, LinearRelation, LinearRelation]:
    """Two self-bisimulations of :func:`sum_closure_system` and their sum,
    which is not a bisimulation."""
    Ra = np.array([[0.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
    Rb = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    Rsum = np.array([[0.0, 0.0, 1.0]])
    return LinearRelation(Ra, Ra), LinearRelation(Rb, Rb), LinearRelation(Rsum, Rsum)


def scalar_ar1(a: float = 0.5, g: float = 1.0) -> StochasticLinearSystem:
    """``x+ = a x + g w``, ``y = x``; stationary variance ``g^2 / (1 - a^2)``."""
    return StochasticLinearSystem(A=[[a]], B=np.zeros((1, 0)), C=[[1.0]], G=[[g]], name="ar1")
