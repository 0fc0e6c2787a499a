"""Distributed primal-dual method over a fixed connected graph.

Each round every agent sends its running sum ``s_i`` to its neighbours,
takes a prox-gradient step on its own variable with the consensus penalty
``gamma * sum_j (s_i - s_j)`` on the shared block, and updates its conic
multiplier by a polar-cone projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import SolverDivergedError
from .metrics import RunReport, compute_metrics, log_checkpoints
from .network import Graph
from .problems import ConsensusLayout, StepSizes, validate_static

__all__ = ["StaticState", "StaticSolver", "dpda_s_step", "dpda_s_run"]

log = logging.getLogger(__name__)


@dataclass
class StaticState:
    """Iterates of the static method, stacked over agents.

    Attributes
    ----------
    k : int
        Completed iterations.
    comms : int
        Communication rounds per node so far.
    x : ndarray
        Stacked primal iterate.
    s : ndarray of shape (N, n_shared)
        Running sums ``x^k + sum_{l<k} x^l`` of the shared blocks.
    theta : ndarray
        Stacked conic multipliers, each in its polar cone.
    x_sum : ndarray
        ``sum_{l=1..k} x^l`` for the ergodic average.
    """

    k: int
    comms: int
    x: np.ndarray
    s: np.ndarray
    theta: np.ndarray
    x_sum: np.ndarray

    def copy(self) -> "StaticState":
        return replace(self, x=self.x.copy(), s=self.s.copy(), theta=self.theta.copy(),
                       x_sum=self.x_sum.copy())

    @property
    def x_bar(self) -> np.ndarray:
        return self.x_sum / max(self.k, 1)


def _check_finite(layout, step, *arrays_and_owners):
    for arr, owner in arrays_and_owners:
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
            raise SolverDivergedError(int(owner[bad]) if owner is not None else bad // arr.shape[-1], step)


class StaticSolver:
    """Vectorized static solver for a list of :class:`AgentProblem`.

    Parameters
    ----------
    problems : list of AgentProblem
    graph : Graph
        Connected communication graph with one node per agent.
    steps : StepSizes
    validate : bool
        Check the step-size condition before running.
    """

    name = "static"

    def __init__(self, problems, graph: Graph, steps: StepSizes, validate: bool = True):
        self.layout = ConsensusLayout(problems)
        if graph.n != self.layout.N:
            raise ValueError(f"graph has {graph.n} nodes for {self.layout.N} agents")
        if steps.tau.size != self.layout.N:
            raise ValueError("step sizes need one entry per agent")
        if validate:
            validate_static(problems, graph, steps)
        self.graph = graph
        self.steps = steps
        self.tau_x = self.layout.per_coord(steps.tau)
        self.kappa_y = self.layout.per_row(steps.kappa)
        self.lap = graph.laplacian().toarray()

    def initial_state(self, x0=None) -> StaticState:
        lay = self.layout
        x = np.zeros(lay.n) if x0 is None else lay.stack(x0)
        return StaticState(0, 0, x, x[lay.shared_idx].copy(), np.zeros(lay.m), np.zeros(lay.n))

    def advance(self, st: StaticState) -> StaticState:
        """One synchronous round, in place."""
        lay = self.layout
        g = self.steps.gamma
        x = st.x
        grad = lay.f.grad(x)
        if lay.m:
            grad += lay.AT @ st.theta
        grad[lay.shared_idx] += g * (self.lap @ st.s)
        x_new = lay.rho.prox(x - self.tau_x * grad, self.tau_x)
        step = st.k + 1
        _check_finite(lay, step, (x_new, lay.agent_of_x))
        x_ex = 2.0 * x_new - x
        st.s += x_ex[lay.shared_idx]
        if lay.m:
            st.theta = lay.cone.project_polar(st.theta + self.kappa_y * (lay.A @ x_ex - lay.b))
            _check_finite(lay, step, (st.theta, lay.agent_of_y))
        st.x = x_new
        st.x_sum += x_new
        st.k = step
        st.comms += 1
        return st

    def step(self, st: StaticState) -> StaticState:
        return self.advance(st.copy())

    def run(self, K: int, x0=None, phi_star=None, certificate=None, checkpoints=None,
            callback=None, state: StaticState = None, config: dict = None) -> RunReport:
        """Run ``K`` iterations and log metrics of the ergodic average.

        Parameters
        ----------
        K : int
        x0 : list of per-agent arrays, optional
            Defaults to zeros; the conic multipliers always start at zero.
        phi_star : float, optional
            Reference optimal value for the suboptimality column.
        certificate : Certificate, optional
            Supplies the bound column and weighted infeasibility.
        checkpoints : iterable of int, optional
            Defaults to :func:`log_checkpoints`.
        callback : callable, optional
            ``callback(state)`` after every iteration.
        """
        if K < 1:
            raise ValueError("K must be >= 1")
        st = state if state is not None else self.initial_state(x0)
        pts = set(log_checkpoints(K) if checkpoints is None else checkpoints)
        rows = []
        for _ in range(K):
            self.advance(st)
            if callback is not None:
                callback(st)
            if st.k in pts:
                rows.append(compute_metrics(st.x_bar, self.layout, self.graph, st.k, st.comms,
                                            phi_star, certificate))
        return RunReport(
            solver=self.name,
            metrics=rows,
            x_bar=self.layout.split(st.x_bar),
            comms=st.comms,
            iterations=st.k,
            certificate=certificate,
            phi_star=phi_star,
            config=dict(config or {}),
            state=st,
        )


def dpda_s_step(state: StaticState, problems, graph: Graph, steps: StepSizes) -> StaticState:
    """One round of the static method; returns a new state.

    Builds the stacked operators on every call, so loops should hold a
    :class:`StaticSolver` instead.
    """
    return StaticSolver(problems, graph, steps).step(state)


def dpda_s_run(problems, graph: Graph, steps: StepSizes, x0=None, K: int = 1000, **kwargs) -> RunReport:
    """Run the static method for ``K`` iterations. See :meth:`StaticSolver.run`."""
    return StaticSolver(problems, graph, steps).run(K, x0=x0, **kwargs)
