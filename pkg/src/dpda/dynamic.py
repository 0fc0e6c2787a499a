"""Distributed primal-dual method over a time-varying graph.

The exact projection onto the consensus set is replaced by ``q_k`` gossip
rounds followed by a ball projection. A shadow of the projection error is
available in diagnostic mode; the algorithm itself never uses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .metrics import RunReport, compute_metrics, log_checkpoints
from .network import MixingProcess, ball_project_rows
from .problems import ConsensusLayout, StepSizes, check_ball_radius, validate_dynamic
from .static import _check_finite

__all__ = [
    "consensus_schedule",
    "consensus_schedule_array",
    "total_communications",
    "DynamicState",
    "DynamicSolver",
    "dpda_d_step",
    "dpda_d_run",
]


def _as_fraction(p) -> Fraction:
    frac = Fraction(p).limit_denominator(10_000) if isinstance(p, float) else Fraction(p)
    if frac < 1:
        raise ValueError("schedule exponent p must be >= 1")
    return frac


def consensus_schedule(k: int, p) -> int:
    """Gossip rounds at iteration ``k``: ``ceil(k^(1/p))``.

    Computed exactly: for ``p = a/b`` the result is the smallest integer
    ``q`` with ``q^a >= k^b``.
    """
    if k < 1:
        raise ValueError("iteration index starts at 1")
    frac = _as_fraction(p)
    a, b = frac.numerator, frac.denominator
    target = k ** b
    q = max(1, int(math.floor(k ** (1.0 / float(frac)))))
    while q ** a < target:
        q += 1
    while q > 1 and (q - 1) ** a >= target:
        q -= 1
    return q


def consensus_schedule_array(k, p) -> np.ndarray:
    """Vectorized :func:`consensus_schedule` over an array of indices.

    Uses float arithmetic with a one-step correction; exact while
    ``k^b`` and ``q^a`` stay below 2^53.
    """
    frac = _as_fraction(p)
    a, b = frac.numerator, frac.denominator
    k = np.asarray(k, dtype=float)
    q = np.maximum(np.ceil(k ** (1.0 / float(frac))), 1.0)
    kb = k ** b
    q = np.where((q > 1) & ((q - 1.0) ** a >= kb), q - 1.0, q)
    q = np.where(q ** a < kb, q + 1.0, q)
    return q


def total_communications(K: int, p) -> int:
    """``sum_{k=1}^{K} q_k``."""
    return int(sum(consensus_schedule(k, p) for k in range(1, K + 1)))


@dataclass
class DynamicState:
    """Iterates of the time-varying method.

    ``mu`` holds the inexact consensus multipliers on the shared blocks,
    shape ``(N, n_shared)``.
    """

    k: int
    comms: int
    x: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    x_sum: np.ndarray
    last_q: int = 0
    last_error: float = float("nan")

    def copy(self) -> "DynamicState":
        return replace(self, x=self.x.copy(), mu=self.mu.copy(), theta=self.theta.copy(),
                       x_sum=self.x_sum.copy())

    @property
    def x_bar(self) -> np.ndarray:
        return self.x_sum / max(self.k, 1)


@dataclass
class _Diag:
    q: list = field(default_factory=list)
    e_norm: list = field(default_factory=list)
    e_bound: list = field(default_factory=list)
    mu_norm: list = field(default_factory=list)
    mu_bound: list = field(default_factory=list)


class DynamicSolver:
    """Vectorized time-varying solver.

    Parameters
    ----------
    problems : list of AgentProblem
        Every agent's shared block must be confined to the B-ball.
    process : MixingProcess
    steps : StepSizes
    p : rational >= 1
        Schedule exponent, ``q_k = ceil(k^(1/p))``.
    B : float
        Ball radius.
    diagnostic : bool
        Record the projection-error shadow and check both growth bounds
        every iteration.
    exact : bool
        Reference mode: use the exact consensus projection instead of gossip.
    """

    name = "dynamic"

    def __init__(self, problems, process: MixingProcess, steps: StepSizes, p=2, B: float = 1.0,
                 diagnostic: bool = False, exact: bool = False, validate: bool = True):
        self.layout = ConsensusLayout(problems)
        N = self.layout.N
        if process.graph.n != N:
            raise ValueError(f"mixing process has {process.graph.n} nodes for {N} agents")
        if validate:
            validate_dynamic(problems, steps)
            check_ball_radius(problems, B)
        self.p = _as_fraction(p)
        self.process = process
        self.steps = steps
        self.B = float(B)
        self.diagnostic = diagnostic
        self.exact = exact
        self.tau_x = self.layout.per_coord(steps.tau)
        self.kappa_y = self.layout.per_row(steps.kappa)
        self.consts = process.constants() if N >= 2 else None
        self.diag = _Diag()

    def initial_state(self, x0=None) -> DynamicState:
        lay = self.layout
        x = np.zeros(lay.n) if x0 is None else lay.stack(x0)
        return DynamicState(0, 0, x, np.zeros((lay.N, lay.n_shared)), np.zeros(lay.m), np.zeros(lay.n))

    def _exact_projection(self, U):
        avg = np.broadcast_to(U.mean(axis=0), U.shape)
        return ball_project_rows(avg, self.B)

    def advance(self, st: DynamicState) -> DynamicState:
        lay = self.layout
        g = self.steps.gamma
        x = st.x
        step = st.k + 1
        grad = lay.f.grad(x)
        if lay.m:
            grad += lay.AT @ st.theta
        grad[lay.shared_idx] += st.mu
        x_new = lay.rho.prox(x - self.tau_x * grad, self.tau_x)
        _check_finite(lay, step, (x_new, lay.agent_of_x))
        x_ex = 2.0 * x_new - x
        Xe = x_ex[lay.shared_idx]
        U = st.mu / g + Xe
        q = consensus_schedule(step, self.p)
        if self.exact:
            RU = self._exact_projection(U)
            self.process.t += q
        else:
            RU = ball_project_rows(self.process.mix(U, q), self.B)
        if self.diagnostic:
            self._record(step, q, U, RU)
        st.mu = st.mu + g * Xe - g * RU
        if lay.m:
            st.theta = lay.cone.project_polar(st.theta + self.kappa_y * (lay.A @ x_ex - lay.b))
            _check_finite(lay, step, (st.theta, lay.agent_of_y))
        if self.diagnostic:
            N = lay.N
            self.diag.mu_norm.append(float(np.linalg.norm(st.mu)))
            self.diag.mu_bound.append(4.0 * g * math.sqrt(N) * self.B * step)
        st.x = x_new
        st.x_sum += x_new
        st.k = step
        st.comms += q
        st.last_q = q
        return st

    def _record(self, step, q, U, RU):
        N = self.layout.N
        e = self._exact_projection(U) - RU
        en = float(np.linalg.norm(e))
        if self.consts is None:
            bound = 0.0
        else:
            c = self.consts
            a_q = 1.0 if c.alpha >= 1.0 else math.exp(q * math.log(c.alpha))
            bound = 4.0 * N ** 1.5 * self.B * c.Gamma * a_q * step
        self.diag.q.append(q)
        self.diag.e_norm.append(en)
        self.diag.e_bound.append(bound)

    def step(self, st: DynamicState) -> DynamicState:
        return self.advance(st.copy())

    def diagnostics(self) -> dict:
        d = self.diag
        out = {}
        if d.q:
            e, eb = np.array(d.e_norm), np.array(d.e_bound)
            m, mb = np.array(d.mu_norm), np.array(d.mu_bound)
            out = {
                "q": np.array(d.q),
                "e_norm": e,
                "e_bound": eb,
                "mu_norm": m,
                "mu_bound": mb,
                "e_bound_ok": bool(np.all(e <= eb * (1 + 1e-12) + 1e-12)),
                "mu_bound_ok": bool(np.all(m <= mb * (1 + 1e-12) + 1e-12)),
            }
        return out

    def run(self, K: int, x0=None, phi_star=None, certificate=None, checkpoints=None,
            callback=None, state: DynamicState = None, config: dict = None) -> RunReport:
        """Run ``K`` iterations; see :meth:`StaticSolver.run` for the arguments.

        Consensus metrics are measured on the base graph of the process.
        """
        if K < 1:
            raise ValueError("K must be >= 1")
        st = state if state is not None else self.initial_state(x0)
        pts = set(log_checkpoints(K) if checkpoints is None else checkpoints)
        rows = []
        graph = self.process.graph
        for _ in range(K):
            self.advance(st)
            if callback is not None:
                callback(st)
            if st.k in pts:
                rows.append(compute_metrics(st.x_bar, self.layout, graph, st.k, st.comms,
                                            phi_star, certificate))
        return RunReport(
            solver=self.name,
            metrics=rows,
            x_bar=self.layout.split(st.x_bar),
            comms=st.comms,
            iterations=st.k,
            diagnostics=self.diagnostics(),
            certificate=certificate,
            phi_star=phi_star,
            config=dict(config or {}),
            state=st,
        )


def dpda_d_step(state: DynamicState, problems, process: MixingProcess, steps: StepSizes,
                p=2, B: float = 1.0) -> DynamicState:
    """One round of the time-varying method; returns a new state."""
    return DynamicSolver(problems, process, steps, p=p, B=B).step(state)


def dpda_d_run(problems, process: MixingProcess, steps: StepSizes, x0=None, K: int = 1000,
               p=2, B: float = 1.0, diagnostic: bool = False, exact: bool = False, **kwargs) -> RunReport:
    """Run the time-varying method. See :meth:`DynamicSolver.run`."""
    solver = DynamicSolver(problems, process, steps, p=p, B=B, diagnostic=diagnostic, exact=exact)
    return solver.run(K, x0=x0, **kwargs)
