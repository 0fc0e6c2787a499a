"""Agent problem types, step-size rules and the stacked layout.

A consensus agent owns ``x_i = (shared, local)`` of length ``n_s + n_l``
and solves its share of

    min sum_i rho_i(x_i) + f_i(x_i)  s.t.  A_i x_i - b_i in K_i,
    shared blocks equal across agents.

A resource agent owns ``xi_i`` and the agents jointly satisfy
``sum_i R_i xi_i - r_i in K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cones import Cone, ProductCone
from .functions import (
    CompiledProx,
    CompiledQuadratic,
    IndicatorBall,
    IndicatorBox,
    ProxFunction,
    SeparableSum,
    SmoothFunction,
)
from .network import Graph

__all__ = [
    "AgentProblem",
    "ResourceAgentProblem",
    "StepSizes",
    "StepSizeError",
    "select_stepsizes_static",
    "select_stepsizes_dynamic",
    "select_stepsizes_resource",
    "static_slack",
    "dynamic_slack",
    "resource_slack",
    "check_ball_radius",
    "ConsensusLayout",
    "ResourceLayout",
]

# shrink factor applied to constructed step sizes so the step-size gates,
# which the constructions meet with equality, survive rounding
_SAFETY = 1.0 - 1e-12


class StepSizeError(ValueError):
    """Step sizes violate the convergence condition."""


def _sigma_max(A) -> float:
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


@dataclass
class AgentProblem:
    """One agent of the consensus problem.

    Parameters
    ----------
    n_shared : int
        Length of the block that must agree across agents.
    n_local : int
        Length of the private block (0 for plain consensus).
    rho : ProxFunction
    f : SmoothFunction
    A : array or sparse matrix of shape (m, n_shared + n_local)
    b : array of shape (m,)
    cone : Cone of dimension m
    """

    n_shared: int
    n_local: int
    rho: ProxFunction
    f: SmoothFunction
    A: object
    b: np.ndarray
    cone: Cone
    sigma_max: float = field(default=None)

    def __post_init__(self):
        A = self.A if sp.issparse(self.A) else np.atleast_2d(np.asarray(self.A, dtype=float))
        self.A = sp.csr_matrix(A)
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        m, n = self.A.shape
        if n != self.dim:
            raise ValueError(f"A has {n} columns, agent dimension is {self.dim}")
        if self.b.shape != (m,) or self.cone.dim != m:
            raise ValueError("b, A and the cone disagree on the constraint count")
        if self.rho.dim is not None and self.rho.dim != self.dim:
            raise ValueError("rho dimension mismatch")
        if self.f.dim is not None and self.f.dim != self.dim:
            raise ValueError("f dimension mismatch")
        if self.sigma_max is None:
            self.sigma_max = _sigma_max(self.A)

    @property
    def dim(self) -> int:
        return self.n_shared + self.n_local

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def lipschitz(self) -> float:
        return self.f.lipschitz

    def objective(self, x) -> float:
        return self.rho.value(x) + self.f.value_grad(np.asarray(x, dtype=float))[0]


@dataclass
class ResourceAgentProblem:
    """One agent of the resource-sharing problem."""

    rho: ProxFunction
    f: SmoothFunction
    R: object
    r: np.ndarray
    cone: Cone
    sigma_max: float = field(default=None)

    def __post_init__(self):
        R = self.R if sp.issparse(self.R) else np.atleast_2d(np.asarray(self.R, dtype=float))
        self.R = sp.csr_matrix(R)
        self.r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if self.r.shape != (self.R.shape[0],) or self.cone.dim != self.R.shape[0]:
            raise ValueError("R, r and the cone disagree on the constraint count")
        if self.sigma_max is None:
            self.sigma_max = _sigma_max(self.R)

    @property
    def dim(self) -> int:
        return self.R.shape[1]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def lipschitz(self) -> float:
        return self.f.lipschitz

    def objective(self, xi) -> float:
        return self.rho.value(xi) + self.f.value_grad(np.asarray(xi, dtype=float))[0]


@dataclass(frozen=True)
class StepSizes:
    gamma: float
    tau: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if not self.gamma > 0 or np.any(tau <= 0) or np.any(kappa <= 0):
            raise StepSizeError("step sizes must be positive")
        if tau.shape != kappa.shape:
            raise StepSizeError("tau and kappa need one entry per agent")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "kappa", kappa)


def _per_agent(c, n, name):
    c = np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy()
    if np.any(c <= 0):
        raise ValueError(f"{name} must be positive")
    return c


def static_slack(L, d, gamma, sigma, tau, kappa) -> np.ndarray:
    """``(1/tau - L - 2 gamma d) / kappa - sigma^2``, elementwise."""
    L, d, sigma, tau, kappa = map(np.asarray, (L, d, sigma, tau, kappa))
    return (1.0 / tau - L - 2.0 * gamma * d) / kappa - sigma ** 2


def dynamic_slack(L, gamma, sigma, tau, kappa) -> np.ndarray:
    """``(1/tau - L - gamma) / kappa - sigma^2``, elementwise."""
    L, sigma, tau, kappa = map(np.asarray, (L, sigma, tau, kappa))
    return (1.0 / tau - L - gamma) / kappa - sigma ** 2


def resource_slack(L, gamma, sigma, tau, kappa) -> np.ndarray:
    """``(1/tau - L)(1/kappa - gamma) - sigma^2``; also needs both factors > 0."""
    L, sigma, tau, kappa = map(np.asarray, (L, sigma, tau, kappa))
    a, b = 1.0 / tau - L, 1.0 / kappa - gamma
    return np.where((a > 0) & (b > 0), a * b - sigma ** 2, -np.inf)


def _remark_sizes(L, extra, sigma, c):
    tau = _SAFETY / (c + L + extra)
    with np.errstate(divide="ignore"):
        kappa = np.where(sigma > 0, c / np.where(sigma > 0, sigma, 1.0) ** 2, c) * _SAFETY
    return tau, kappa


def select_stepsizes_static(problems, graph: Graph, gamma: float = 1.0, c=1.0) -> StepSizes:
    """Step sizes ``tau_i = 1/(c_i + L_i + 2 gamma d_i)``, ``kappa_i = c_i / sigma_i^2``.

    When ``sigma_i = 0`` the constraint is void and ``kappa_i = c_i``. The
    returned sizes are checked against
    ``(1/tau_i - L_i - 2 gamma d_i) / kappa_i >= sigma_i^2``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = len(problems)
    c = _per_agent(c, n, "c_i")
    L = np.array([p.lipschitz for p in problems])
    sig = np.array([p.sigma_max for p in problems])
    d = graph.degrees.astype(float)
    tau, kappa = _remark_sizes(L, 2.0 * gamma * d, sig, c)
    steps = StepSizes(gamma, tau, kappa)
    validate_static(problems, graph, steps)
    return steps


def validate_static(problems, graph, steps: StepSizes) -> np.ndarray:
    L = np.array([p.lipschitz for p in problems])
    sig = np.array([p.sigma_max for p in problems])
    s = static_slack(L, graph.degrees, steps.gamma, sig, steps.tau, steps.kappa)
    if np.any(s < 0):
        raise StepSizeError(f"static step-size condition fails for agents {np.flatnonzero(s < 0).tolist()}")
    return s


def select_stepsizes_dynamic(problems, gamma: float = 1.0, c=1.0) -> StepSizes:
    """Step sizes ``tau_i = 1/(c_i + L_i + gamma)``, ``kappa_i = c_i / sigma_i^2``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = len(problems)
    c = _per_agent(c, n, "c_i")
    L = np.array([p.lipschitz for p in problems])
    sig = np.array([p.sigma_max for p in problems])
    tau, kappa = _remark_sizes(L, np.full(n, gamma), sig, c)
    steps = StepSizes(gamma, tau, kappa)
    validate_dynamic(problems, steps)
    return steps


def validate_dynamic(problems, steps: StepSizes) -> np.ndarray:
    L = np.array([p.lipschitz for p in problems])
    sig = np.array([p.sigma_max for p in problems])
    s = dynamic_slack(L, steps.gamma, sig, steps.tau, steps.kappa)
    if np.any(s < 0):
        raise StepSizeError(f"dynamic step-size condition fails for agents {np.flatnonzero(s < 0).tolist()}")
    return s


def select_stepsizes_resource(problems, gamma: float = 1.0, margin=1.0, eps: float = 1e-6) -> StepSizes:
    """Step sizes ``tau_i = 1/(L_i + a_i)``, ``kappa_i = 1/(gamma + sigma_i^2/a_i)``.

    These give ``(1/tau_i - L_i)(1/kappa_i - gamma) = sigma_i^2``. With
    ``sigma_i = 0``, ``kappa_i = 1/(gamma + eps)`` keeps ``1/kappa_i > gamma``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = len(problems)
    a = _per_agent(margin, n, "margin")
    L = np.array([p.lipschitz for p in problems])
    sig = np.array([p.sigma_max for p in problems])
    tau = _SAFETY / (L + a)
    extra = np.where(sig > 0, sig ** 2 / a, eps)
    kappa = _SAFETY / (gamma + extra)
    steps = StepSizes(gamma, tau, kappa)
    validate_resource(problems, steps)
    return steps


def validate_resource(problems, steps: StepSizes) -> np.ndarray:
    L = np.array([p.lipschitz for p in problems])
    sig = np.array([p.sigma_max for p in problems])
    s = resource_slack(L, steps.gamma, sig, steps.tau, steps.kappa)
    if np.any(s < 0):
        raise StepSizeError(f"resource step-size condition fails for agents {np.flatnonzero(s < 0).tolist()}")
    return s


def _shared_domain_norm(p: AgentProblem) -> float:
    """Largest norm of the shared block over the domain of ``rho``."""
    rho = p.rho
    ns = p.n_shared
    if isinstance(rho, (IndicatorBall, IndicatorBox)) and p.n_local == 0:
        return rho.max_norm(ns)
    if isinstance(rho, SeparableSum):
        best = float("inf")
        for (a, b), fn in rho.pieces:
            if a == 0 and b == ns and isinstance(fn, (IndicatorBall, IndicatorBox)):
                best = min(best, fn.max_norm(ns))
        return best
    return float("inf")


def check_ball_radius(problems, B: float) -> None:
    """Require every agent's shared block to live in the centered B-ball.

    Raises
    ------
    ValueError
        If some agent lacks a ball/box term on its shared block or the term
        reaches beyond ``B``.
    """
    if not B > 0:
        raise ValueError("B must be positive")
    for i, p in enumerate(problems):
        r = _shared_domain_norm(p)
        if not r <= B * (1 + 1e-12):
            raise ValueError(
                f"agent {i}: shared block is not confined to the ball of radius {B:g} "
                f"(domain radius {r:g}); add an IndicatorBall or IndicatorBox on it"
            )


class ConsensusLayout:
    """All agents of a consensus problem stacked into one long vector.

    Attributes
    ----------
    x_off : int array (N + 1,)
        Offsets of each agent's variable.
    shared_idx : int array (N, n_s)
        Positions of each agent's shared block.
    A : csr_matrix
        Block-diagonal constraint matrix.
    y_off : int array (N + 1,)
        Offsets of each agent's constraint rows.
    """

    def __init__(self, problems):
        if not problems:
            raise ValueError("need at least one agent")
        ns = {p.n_shared for p in problems}
        if len(ns) != 1:
            raise ValueError("all agents must share the same n_shared")
        self.problems = list(problems)
        self.N = len(problems)
        self.n_shared = ns.pop()
        dims = np.array([p.dim for p in problems])
        ms = np.array([p.m for p in problems])
        self.x_off = np.r_[0, np.cumsum(dims)]
        self.y_off = np.r_[0, np.cumsum(ms)]
        self.n = int(self.x_off[-1])
        self.m = int(self.y_off[-1])
        self.shared_idx = self.x_off[:-1, None] + np.arange(self.n_shared)[None, :]
        self.A = sp.block_diag([p.A for p in problems], format="csr")
        self.AT = self.A.T.tocsr()
        self.b = np.concatenate([p.b for p in problems])
        self.cone = ProductCone(tuple(p.cone for p in problems))
        self.rho = CompiledProx([(self.x_off[i], p.dim, p.rho) for i, p in enumerate(problems)], self.n)
        self.f = CompiledQuadratic([(self.x_off[i], p.dim, p.f) for i, p in enumerate(problems)], self.n)
        self.agent_of_x = np.repeat(np.arange(self.N), dims)
        self.agent_of_y = np.repeat(np.arange(self.N), ms)

    def split(self, x: np.ndarray) -> list:
        return [x[self.x_off[i]:self.x_off[i + 1]] for i in range(self.N)]

    def split_dual(self, y: np.ndarray) -> list:
        return [y[self.y_off[i]:self.y_off[i + 1]] for i in range(self.N)]

    def stack(self, xs) -> np.ndarray:
        x = np.concatenate([np.asarray(v, dtype=float).ravel() for v in xs])
        if x.size != self.n:
            raise ValueError(f"stacked vector has length {x.size}, expected {self.n}")
        return x

    def per_coord(self, values) -> np.ndarray:
        """Expand a per-agent array to one entry per primal coordinate."""
        return np.asarray(values, dtype=float)[self.agent_of_x]

    def per_row(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float)[self.agent_of_y]

    def block_norms(self, v: np.ndarray, owner: np.ndarray) -> np.ndarray:
        """Per-agent Euclidean norms of a stacked vector with row owners ``owner``."""
        return np.sqrt(np.bincount(owner, weights=v * v, minlength=self.N))

    def infeasibility(self, x: np.ndarray) -> np.ndarray:
        """Per-agent ``d_{K_i}(A_i x_i - b_i)``."""
        if self.m == 0:
            return np.zeros(self.N)
        return self.block_norms(self.cone.project_polar(self.A @ x - self.b), self.agent_of_y)

    def objective(self, x: np.ndarray) -> float:
        """Finite part of the objective; domain indicators are kept by the prox."""
        return self.rho.value_finite(x) + self.f.value(x)


class ResourceLayout:
    """All agents of a resource-sharing problem stacked into one vector."""

    def __init__(self, problems):
        if not problems:
            raise ValueError("need at least one agent")
        ms = {p.m for p in problems}
        if len(ms) != 1:
            raise ValueError("all agents must share the constraint dimension")
        cones = {repr(p.cone.to_dict()) for p in problems}
        if len(cones) != 1:
            raise ValueError("all agents must share one cone")
        self.problems = list(problems)
        self.N = len(problems)
        self.m = ms.pop()
        self.cone = problems[0].cone
        dims = np.array([p.dim for p in problems])
        self.x_off = np.r_[0, np.cumsum(dims)]
        self.n = int(self.x_off[-1])
        self.R = sp.block_diag([p.R for p in problems], format="csr")
        self.RT = self.R.T.tocsr()
        self.Rsum = sp.hstack([p.R for p in problems], format="csr")
        self.r = np.stack([p.r for p in problems])
        self.rho = CompiledProx([(self.x_off[i], p.dim, p.rho) for i, p in enumerate(problems)], self.n)
        self.f = CompiledQuadratic([(self.x_off[i], p.dim, p.f) for i, p in enumerate(problems)], self.n)
        self.agent_of_x = np.repeat(np.arange(self.N), dims)
        self.stacked_cone = ProductCone(tuple(p.cone for p in problems))

    def split(self, x):
        return [x[self.x_off[i]:self.x_off[i + 1]] for i in range(self.N)]

    def stack(self, xs):
        x = np.concatenate([np.asarray(v, dtype=float).ravel() for v in xs])
        if x.size != self.n:
            raise ValueError(f"stacked vector has length {x.size}, expected {self.n}")
        return x

    def per_coord(self, values):
        return np.asarray(values, dtype=float)[self.agent_of_x]

    def global_residual(self, xi: np.ndarray) -> np.ndarray:
        """``sum_i R_i xi_i - r_i``."""
        return self.Rsum @ xi - self.r.sum(axis=0)

    def global_infeasibility(self, xi: np.ndarray) -> float:
        return self.cone.distance(self.global_residual(xi))

    def objective(self, xi):
        return self.rho.value_finite(xi) + self.f.value(xi)
