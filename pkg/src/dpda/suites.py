"""Small seeded problem families: hand-solvable toys and random QPs."""

from __future__ import annotations

import numpy as np

from .cones import NonnegativeOrthant, ZeroCone
from .functions import (
    IndicatorBall,
    IndicatorBox,
    Quadratic,
    SeparableSum,
    Zero,
)
from .problems import AgentProblem, ResourceAgentProblem

__all__ = [
    "toy_single",
    "toy_pair",
    "random_qp_suite",
    "toy_resource_single",
    "toy_resource_pair",
    "random_resource_suite",
]


def _no_constraint(dim):
    return np.zeros((0, dim)), np.zeros(0), NonnegativeOrthant(0)


def toy_single(ball: float = None) -> list:
    """``min (x - 1)^2 / 2  s.t.  x >= 0``; solution ``x* = 1``, multiplier 0."""
    rho = Zero() if ball is None else IndicatorBall(0.0, ball)
    f = Quadratic([[1.0]], [-1.0], 0.5)
    return [AgentProblem(1, 0, rho, f, [[1.0]], [0.0], NonnegativeOrthant(1))]


def toy_pair(ball: float = None) -> list:
    """Two agents, ``(x - 1)^2 + (x - 3)^2`` with ``x >= 2.5`` held by agent 0.

    Solution ``x* = 2.5``, optimal value 2.5, multiplier ``-2``.
    """
    rho = Zero() if ball is None else IndicatorBall(0.0, ball)
    f1 = Quadratic([[2.0]], [-2.0], 1.0)
    f2 = Quadratic([[2.0]], [-6.0], 9.0)
    return [
        AgentProblem(1, 0, rho, f1, [[1.0]], [2.5], NonnegativeOrthant(1)),
        AgentProblem(1, 0, rho, f2, *_no_constraint(1)),
    ]


def random_qp_suite(N: int = 5, seed: int = 42, n_shared: int = 3, n_local: int = 2,
                    m: int = 3, ball: float = None, box: float = 5.0) -> list:
    """Random strongly convex QPs with orthant constraints, consensus on a shared block.

    Each agent has ``f_i(x) = x^T Q_i x / 2 + c_i^T x`` with
    ``Q_i = G G^T / d + 0.5 I``, a box on its local block and, when
    ``ball`` is given, a ball of that radius on its shared block. Constraint
    right-hand sides are built around a common strictly feasible point, so
    the problem is feasible and some constraints bind at the optimum.
    """
    rng = np.random.default_rng(seed)
    d = n_shared + n_local
    u0 = rng.uniform(-0.5, 0.5, n_shared)
    out = []
    for _ in range(N):
        G = rng.standard_normal((d, d))
        Q = G @ G.T / d + 0.5 * np.eye(d)
        c = 2.0 * rng.standard_normal(d)
        A = rng.standard_normal((m, d))
        x_feas = np.r_[u0, rng.uniform(-1, 1, n_local)]
        b = A @ x_feas - rng.uniform(0.1, 0.5, m)
        pieces = []
        if ball is not None:
            pieces.append(((0, n_shared), IndicatorBall(np.zeros(n_shared), ball)))
        if n_local:
            pieces.append(((n_shared, d), IndicatorBox(-box * np.ones(n_local), box * np.ones(n_local))))
        rho = SeparableSum(tuple(pieces), d)
        out.append(AgentProblem(n_shared, n_local, rho, Quadratic(Q, c), A, b, NonnegativeOrthant(m)))
    return out


def toy_resource_single() -> list:
    """``min xi^2 / 2  s.t.  xi - 1 >= 0``; solution 1, multiplier ``-1``."""
    return [ResourceAgentProblem(Zero(), Quadratic([[1.0]]), [[1.0]], [1.0], NonnegativeOrthant(1))]


def toy_resource_pair() -> list:
    """``min (xi_1 - 2)^2 + (xi_2 - 2)^2  s.t.  xi_1 + xi_2 = 2``; solution (1, 1)."""
    f = Quadratic([[2.0]], [-4.0], 4.0)
    return [ResourceAgentProblem(Zero(), f, [[1.0]], [1.0], ZeroCone(1)) for _ in range(2)]


def random_resource_suite(N: int = 4, seed: int = 13, n: int = 3, m: int = 2, box: float = 10.0,
                          return_slater: bool = False):
    """Random resource-sharing QPs with an orthant constraint and a Slater point.

    The right-hand side is ``r = sum_i R_i xibar_i - g0`` with ``g0 > 0``, so
    ``xibar`` is strictly feasible. Local minimizers are pushed away from the
    feasible region so the shared constraint binds.
    """
    rng = np.random.default_rng(seed)
    xibar = [rng.uniform(-1, 1, n) for _ in range(N)]
    Rs = [rng.standard_normal((m, n)) for _ in range(N)]
    g0 = rng.uniform(0.2, 1.0, m)
    r_total = sum(R @ x for R, x in zip(Rs, xibar)) - g0
    out = []
    for i in range(N):
        G = rng.standard_normal((n, n))
        Q = G @ G.T / n + 0.5 * np.eye(n)
        target = xibar[i] - 2.0 * Rs[i].T @ np.ones(m) / np.sqrt(m)
        c = -Q @ target
        rho = IndicatorBox(-box * np.ones(n), box * np.ones(n))
        out.append(ResourceAgentProblem(rho, Quadratic(Q, c), Rs[i], r_total / N, NonnegativeOrthant(m)))
    if return_slater:
        return out, xibar
    return out
