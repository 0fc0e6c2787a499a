"""Distributed primal-dual method for shared resource constraints.

Agents keep local estimates ``y_i`` of the multiplier of
``sum_i R_i xi_i - r_i in K`` and drive them to agreement through an
inexact dual-consensus variable ``v`` updated by gossip rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from .dynamic import _as_fraction, consensus_schedule
from .metrics import RunReport, compute_resource_metrics, log_checkpoints
from .network import MixingProcess, ball_project_rows
from .problems import ResourceLayout, StepSizes, validate_resource
from .static import _check_finite

__all__ = ["ResourceState", "ResourceSolver", "dpda_r_step", "dpda_r_run"]


@dataclass
class ResourceState:
    """Iterates of the resource method; ``v`` and ``y`` have shape ``(N, m)``."""

    k: int
    comms: int
    xi: np.ndarray
    v: np.ndarray
    y: np.ndarray
    xi_sum: np.ndarray
    y_sum: np.ndarray

    def copy(self) -> "ResourceState":
        return replace(self, xi=self.xi.copy(), v=self.v.copy(), y=self.y.copy(),
                       xi_sum=self.xi_sum.copy(), y_sum=self.y_sum.copy())

    @property
    def xi_bar(self) -> np.ndarray:
        return self.xi_sum / max(self.k, 1)

    @property
    def y_bar(self) -> np.ndarray:
        return self.y_sum / max(self.k, 1)


class ResourceSolver:
    """Vectorized resource-sharing solver.

    Parameters
    ----------
    problems : list of ResourceAgentProblem
    process : MixingProcess
    steps : StepSizes
    p : rational >= 1
    B_d : float
        Radius of the dual ball; must exceed the norm of a dual optimum.
    """

    name = "resource"

    def __init__(self, problems, process: MixingProcess, steps: StepSizes, p=2, B_d: float = 1.0,
                 validate: bool = True):
        self.layout = ResourceLayout(problems)
        if process.graph.n != self.layout.N:
            raise ValueError(f"mixing process has {process.graph.n} nodes for {self.layout.N} agents")
        if not B_d > 0:
            raise ValueError("B_d must be positive")
        if validate:
            validate_resource(problems, steps)
        self.process = process
        self.steps = steps
        self.p = _as_fraction(p)
        self.B_d = float(B_d)
        self.tau_x = self.layout.per_coord(steps.tau)
        self.kappa = steps.kappa[:, None]
        self.consts = process.constants() if self.layout.N >= 2 else None

    def initial_state(self, xi0=None) -> ResourceState:
        lay = self.layout
        xi = np.zeros(lay.n) if xi0 is None else lay.stack(xi0)
        z = np.zeros((lay.N, lay.m))
        return ResourceState(0, 0, xi, z, z.copy(), np.zeros(lay.n), z.copy())

    def advance(self, st: ResourceState) -> ResourceState:
        lay = self.layout
        g = self.steps.gamma
        step = st.k + 1
        xi = st.xi
        grad = lay.f.grad(xi) + lay.RT @ st.y.ravel()
        xi_new = lay.rho.prox(xi - self.tau_x * grad, self.tau_x)
        _check_finite(lay, step, (xi_new, lay.agent_of_x))
        q = consensus_schedule(step, self.p)
        U = st.v / g + st.y
        RU = ball_project_rows(self.process.mix(U, q), self.B_d)
        v_new = st.v + g * st.y - g * RU
        Rx = (lay.R @ (2.0 * xi_new - xi)).reshape(lay.N, lay.m)
        arg = st.y + self.kappa * (Rx - lay.r - (2.0 * v_new - st.v))
        y_new = lay.stacked_cone.project_polar(arg.ravel()).reshape(lay.N, lay.m)
        _check_finite(lay, step, (y_new, None))
        st.xi, st.v, st.y = xi_new, v_new, y_new
        st.xi_sum += xi_new
        st.y_sum += y_new
        st.k = step
        st.comms += q
        return st

    def step(self, st: ResourceState) -> ResourceState:
        return self.advance(st.copy())

    def run(self, K: int, xi0=None, phi_star=None, certificate=None, checkpoints=None,
            callback=None, state: ResourceState = None, config: dict = None) -> RunReport:
        if K < 1:
            raise ValueError("K must be >= 1")
        st = state if state is not None else self.initial_state(xi0)
        pts = set(log_checkpoints(K) if checkpoints is None else checkpoints)
        rows = []
        spread = []
        graph = self.process.graph
        for _ in range(K):
            self.advance(st)
            if callback is not None:
                callback(st)
            if st.k in pts:
                rows.append(compute_resource_metrics(st.xi_bar, st.y_bar, self.layout, graph,
                                                     st.k, st.comms, phi_star, certificate))
                spread.append(float(pdist(st.y).max()) if self.layout.N > 1 else 0.0)
        return RunReport(
            solver=self.name,
            metrics=rows,
            x_bar=self.layout.split(st.xi_bar),
            comms=st.comms,
            iterations=st.k,
            diagnostics={"y_spread": np.array(spread)},
            certificate=certificate,
            phi_star=phi_star,
            config=dict(config or {}),
            state=st,
            y_bar=list(st.y_bar),
        )


def dpda_r_step(state: ResourceState, problems, process: MixingProcess, steps: StepSizes,
                p=2, B_d: float = 1.0) -> ResourceState:
    """One round of the resource method; returns a new state."""
    return ResourceSolver(problems, process, steps, p=p, B_d=B_d).step(state)


def dpda_r_run(problems, process: MixingProcess, steps: StepSizes, xi0=None, K: int = 1000,
               p=2, B_d: float = 1.0, **kwargs) -> RunReport:
    """Run the resource method. See :meth:`ResourceSolver.run`."""
    return ResourceSolver(problems, process, steps, p=p, B_d=B_d).run(K, xi0=xi0, **kwargs)
