"""Centralized reference solutions for desk-scale problems.

The consensus problem is rewritten with a single copy of the shared block,
``z = (u, l_1, ..., l_N)`` with ``x_i = (u, l_i)``, and solved by a
diagonally preconditioned primal-dual method (smooth term handled by its
gradient). Nonsmooth terms that touch the shared block are moved to the
dual side, one block per agent, so each agent's subgradient at the optimum
is read off its own multiplier. That is what makes the consensus
multipliers recoverable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .cones import ProductCone
from .functions import CompiledProx
from .network import Graph
from .problems import AgentProblem, ResourceAgentProblem

__all__ = ["CentralSolution", "solve_centralized", "pda_solve", "PDAResult", "unconstrained_minimum"]

log = logging.getLogger(__name__)


@dataclass
class PDAResult:
    z: np.ndarray
    y: np.ndarray
    residual: float
    iterations: int
    converged: bool
    diverged: bool = False


class _DualBlocks:
    """Dual side of ``h(T z)`` with ``h`` = conic indicator + prox pieces.

    Rows ``[0, m_cone)`` carry ``T z - b in K``; the remaining rows carry
    prox terms (elementwise and balls) evaluated at ``T z``.
    """

    def __init__(self, cone, b, pieces: CompiledProx):
        self.cone = cone
        self.b = b
        self.m_cone = cone.dim if cone is not None else 0
        self.pieces = pieces

    def soc_blocks(self):
        """Row ranges that need a single dual step."""
        out = []
        if self.m_cone:
            out.extend(self.cone._soc if isinstance(self.cone, ProductCone) else [])
        if self.pieces is not None:
            out.extend((self.m_cone + idx.min(), self.m_cone + idx.max() + 1)
                       for idx, _, _ in self.pieces.balls)
        return out

    def prox_conj(self, v, sigma):
        out = np.empty_like(v)
        mc = self.m_cone
        if mc:
            out[:mc] = self.cone.project_polar(v[:mc] - sigma[:mc] * self.b)
        if self.pieces is not None and self.pieces.n:
            s = sigma[mc:]
            w = v[mc:]
            out[mc:] = w - s * self.pieces.prox(w / s, 1.0 / s)
        return out


def pda_solve(Q, q, g: CompiledProx, T, dual: _DualBlocks, tol: float = 1e-9,
              max_iter: int = 2_000_000, z0=None, y0=None, check_every: int = 50) -> PDAResult:
    """Preconditioned primal-dual iterations for ``min q(z) + g(z) + h(Tz)``.

    ``q(z) = z^T Q z / 2 + q^T z``. Step sizes are diagonal:
    ``tau_j = 0.99 / (sum_i |T_ij| + sum_k |Q_jk|)`` and
    ``sigma_i = 0.99 / sum_j |T_ij|``, which satisfy the convergence
    condition by diagonal dominance. Stops when the norm of the primal and
    dual optimality residuals falls below ``tol``.
    """
    n = Q.shape[0]
    T = sp.csr_matrix(T)
    TT = T.T.tocsr()
    absT = abs(T)
    col = np.asarray(absT.sum(axis=0)).ravel()
    row = np.asarray(absT.sum(axis=1)).ravel()
    qrow = np.asarray(abs(Q).sum(axis=1)).ravel()
    denom = col + qrow
    tau = 0.99 / np.where(denom > 0, denom, 1.0)
    sigma = 0.99 / np.where(row > 0, row, 1.0)
    # balls and second-order blocks need one step per block
    for idx, _, _ in g.balls:
        tau[idx] = tau[idx].min()
    for a, b in dual.soc_blocks():
        sigma[a:b] = sigma[a:b].min()
    z = np.zeros(n) if z0 is None else np.array(z0, dtype=float)
    y = np.zeros(T.shape[0]) if y0 is None else np.array(y0, dtype=float)
    grad = Q @ z + q
    res = np.inf
    for it in range(1, max_iter + 1):
        z_new = g.prox(z - tau * (grad + TT @ y), tau)
        dz = z_new - z
        y_new = dual.prox_conj(y + sigma * (T @ (z_new + dz)), sigma)
        grad_new = Q @ z_new + q
        if it % check_every == 0 or it == max_iter:
            dy = y_new - y
            p = -dz / tau - (grad - grad_new) + TT @ dy
            d = -dy / sigma + T @ dz
            res = float(np.sqrt(p @ p + d @ d))
            if not np.isfinite(res) or np.linalg.norm(y_new) > 1e14:
                return PDAResult(z_new, y_new, res, it, False, diverged=True)
            if res <= tol:
                return PDAResult(z_new, y_new, res, it, True)
        z, y, grad = z_new, y_new, grad_new
    return PDAResult(z, y, res, max_iter, False)


@dataclass
class CentralSolution:
    """Reference primal-dual solution.

    Attributes
    ----------
    mode : {"consensus", "resource"}
    x : list of per-agent arrays
        ``x_i*`` (consensus) or ``xi_i*`` (resource).
    phi_star : float
    theta : list of per-agent conic multipliers (consensus)
    g : ndarray (N, n_shared)
        Per-agent stationarity vectors on the shared block; the consensus
        multipliers solve ``M^T lam = -g``.
    y : ndarray (m,)
        Resource multiplier in the polar cone.
    w : ndarray (N, m)
        Resource consensus multipliers.
    """

    mode: str
    x: list
    phi_star: float
    kkt_residual: float
    iterations: int
    converged: bool
    theta: list = field(default_factory=list)
    g: np.ndarray = None
    y: np.ndarray = None
    w: np.ndarray = None
    n_shared: int = 0
    primal_infeasibility: float = 0.0
    infeasible: bool = False

    def edge_multipliers(self, graph: Graph) -> np.ndarray:
        """Least-squares solution of ``M^T lam = -g`` (diagnostic grade)."""
        if self.mode != "consensus":
            raise ValueError("edge multipliers exist only in consensus mode")
        if graph.num_edges == 0:
            return np.zeros((0, self.n_shared))
        H = np.zeros((graph.num_edges, graph.n))
        H[np.arange(graph.num_edges), graph.heads] = 1.0
        H[np.arange(graph.num_edges), graph.tails] = -1.0
        lam, *_ = np.linalg.lstsq(H.T, -self.g, rcond=None)
        return lam

    def node_multipliers(self) -> np.ndarray:
        """Multipliers of the consensus-set form, ``lam_i = -g_i``."""
        return -np.asarray(self.g)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "phi_star": self.phi_star,
            "x": [np.asarray(v).tolist() for v in self.x],
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "primal_infeasibility": self.primal_infeasibility,
            "infeasible": self.infeasible,
            "n_shared": self.n_shared,
        }
        if self.mode == "consensus":
            d["theta"] = [np.asarray(t).tolist() for t in self.theta]
            d["g"] = np.asarray(self.g).tolist()
        else:
            d["y"] = np.asarray(self.y).tolist()
            d["w"] = np.asarray(self.w).tolist()
        return d

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "CentralSolution":
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)
        return cls(
            mode=d["mode"],
            x=[np.asarray(v, dtype=float) for v in d["x"]],
            phi_star=float(d["phi_star"]),
            kkt_residual=float(d["kkt_residual"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            theta=[np.asarray(t, dtype=float) for t in d.get("theta", [])],
            g=arr(d.get("g")),
            y=arr(d.get("y")),
            w=arr(d.get("w")),
            n_shared=int(d.get("n_shared", 0)),
            primal_infeasibility=float(d.get("primal_infeasibility", 0.0)),
            infeasible=bool(d.get("infeasible", False)),
        )

    @classmethod
    def read_json(cls, path) -> "CentralSolution":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _selection(rows_from, n_cols):
    """Sparse 0/1 matrix picking ``rows_from[k]`` into row ``k``."""
    k = len(rows_from)
    return sp.csr_matrix((np.ones(k), (np.arange(k), rows_from)), shape=(k, n_cols))


def _consensus(problems, tol, max_iter):
    N = len(problems)
    ns = problems[0].n_shared
    if any(p.n_shared != ns for p in problems):
        raise ValueError("all agents must share n_shared")
    loc_off = np.r_[0, np.cumsum([p.n_local for p in problems])] + ns
    n = int(loc_off[-1])
    # column map of each agent's variable into z
    cols = [np.r_[np.arange(ns), np.arange(loc_off[i], loc_off[i + 1])].astype(int) for i in range(N)]
    P = [_selection(c, n) for c in cols]

    Q = sp.csr_matrix((n, n))
    q = np.zeros(n)
    const = 0.0
    for Pi, p in zip(P, problems):
        Qi, qi, ci = p.f.as_quadratic(p.dim)
        Q = Q + Pi.T @ sp.csr_matrix(Qi) @ Pi
        q += Pi.T @ qi
        const += ci

    # split each rho into primal (local-only) and dual (touching shared) parts
    wP, cP = np.zeros(n), np.zeros(n)
    loP, hiP = np.full(n, -np.inf), np.full(n, np.inf)
    ballsP = []
    piece_rows, pw, pc, plo, phi, pballs = [], [], [], [], [], []
    piece_owner = []
    for i, p in enumerate(problems):
        cp = CompiledProx([(0, p.dim, p.rho)], p.dim)
        for j in range(p.dim):
            trivial = cp.w[j] == 0 and cp.c[j] == 0 and np.isinf(cp.lo[j]) and np.isinf(cp.hi[j])
            if trivial:
                continue
            if j >= ns:
                zj = cols[i][j]
                wP[zj], cP[zj], loP[zj], hiP[zj] = cp.w[j], cp.c[j], cp.lo[j], cp.hi[j]
            else:
                piece_rows.append(cols[i][j])
                piece_owner.append(i)
                pw.append(cp.w[j]); pc.append(cp.c[j]); plo.append(cp.lo[j]); phi.append(cp.hi[j])
        for idx, center, radius in cp.balls:
            if np.all(idx >= ns):
                ballsP.append((cols[i][idx], center, radius))
            else:
                start = len(piece_rows)
                piece_rows.extend(cols[i][idx].tolist())
                piece_owner.extend([i] * len(idx))
                k = len(idx)
                pw.extend([0.0] * k); pc.extend([0.0] * k)
                plo.extend([-np.inf] * k); phi.extend([np.inf] * k)
                pballs.append((np.arange(start, start + k), center, radius))
    g_primal = CompiledProx.from_arrays(wP, cP, loP, hiP, ballsP)
    pieces = CompiledProx.from_arrays(pw, pc, plo, phi, pballs) if piece_rows else None

    A_rows = [p.A @ Pi for p, Pi in zip(problems, P)]
    conic = sp.vstack(A_rows, format="csr") if any(p.m for p in problems) else sp.csr_matrix((0, n))
    m_cone = conic.shape[0]
    cone = ProductCone(tuple(p.cone for p in problems)) if m_cone else None
    b = np.concatenate([p.b for p in problems]) if m_cone else np.zeros(0)
    T = sp.vstack([conic, _selection(np.array(piece_rows, dtype=int), n)], format="csr") \
        if piece_rows else conic
    dual = _DualBlocks(cone, b, pieces)

    res = pda_solve(Q, q, g_primal, T, dual, tol=tol, max_iter=max_iter)
    z, y = res.z, res.y
    xs = [z[c].copy() for c in cols]
    y_off = np.r_[0, np.cumsum([p.m for p in problems])]
    theta = [y[y_off[i]:y_off[i + 1]].copy() for i in range(N)]
    # per-agent stationarity on the shared block
    y_piece = y[m_cone:]
    owner = np.array(piece_owner, dtype=int)
    prow = np.array(piece_rows, dtype=int)
    G = np.zeros((N, ns))
    for i, p in enumerate(problems):
        _, grad = p.f.value_grad(xs[i])
        gi = grad + p.A.T @ theta[i]
        sel = owner == i
        if np.any(sel):
            contrib = np.zeros(n)
            np.add.at(contrib, prow[sel], y_piece[sel])
            gi = gi + contrib[cols[i]]
        G[i] = gi[:ns]
    phi_star = float(sum(_finite_value(p, xi) for p, xi in zip(problems, xs)))
    infeas = float(sum(p.cone.distance(p.A @ xi - p.b) for p, xi in zip(problems, xs) if p.m))
    if not res.converged:
        log.warning("centralized solve stopped at residual %.3e after %d iterations", res.residual, res.iterations)
    return CentralSolution(
        mode="consensus", x=xs, phi_star=phi_star, kkt_residual=res.residual,
        iterations=res.iterations, converged=res.converged, theta=theta, g=G, n_shared=ns,
        primal_infeasibility=infeas, infeasible=res.diverged,
    )


def _finite_value(p, x) -> float:
    cp = CompiledProx([(0, p.dim, p.rho)], p.dim)
    return cp.value_finite(x) + p.f.value_grad(x)[0]


def _resource(problems, tol, max_iter, constrained=True):
    from .problems import ResourceLayout

    lay = ResourceLayout(problems)
    n = lay.n
    if constrained:
        T = lay.Rsum
        dual = _DualBlocks(lay.cone, lay.r.sum(axis=0), None)
    else:
        T = sp.csr_matrix((0, n))
        dual = _DualBlocks(None, np.zeros(0), None)
    res = pda_solve(lay.f.Q, lay.f.q, lay.rho, T, dual, tol=tol, max_iter=max_iter)
    xs = lay.split(res.z)
    phi = float(lay.rho.value_finite(res.z) + lay.f.value(res.z))
    if not constrained:
        return phi, res
    y = res.y.copy()
    parts = np.stack([p.R @ x - p.r for p, x in zip(problems, xs)])
    w = parts - parts.sum(axis=0, keepdims=True) / lay.N
    if not res.converged:
        log.warning("centralized solve stopped at residual %.3e after %d iterations", res.residual, res.iterations)
    return CentralSolution(
        mode="resource", x=[x.copy() for x in xs], phi_star=phi, kkt_residual=res.residual,
        iterations=res.iterations, converged=res.converged, y=y, w=w,
        primal_infeasibility=lay.global_infeasibility(res.z), infeasible=res.diverged,
    )


def solve_centralized(problems, mode: str = None, tol: float = 1e-9, max_iter: int = 2_000_000) -> CentralSolution:
    """High-accuracy centralized solution with multipliers.

    Parameters
    ----------
    problems : list of AgentProblem or list of ResourceAgentProblem
    mode : {"consensus", "resource"}, optional
        Inferred from the problem type when omitted.
    tol : float
        Target norm of the optimality residual.
    max_iter : int

    Returns
    -------
    CentralSolution
        ``converged`` is False when ``max_iter`` ran out; ``infeasible`` is
        set when the dual iterates blew up.
    """
    if mode is None:
        mode = "resource" if isinstance(problems[0], ResourceAgentProblem) else "consensus"
    if mode == "consensus":
        if not all(isinstance(p, AgentProblem) for p in problems):
            raise TypeError("consensus mode needs AgentProblem instances")
        return _consensus(problems, tol, max_iter)
    if mode == "resource":
        if not all(isinstance(p, ResourceAgentProblem) for p in problems):
            raise TypeError("resource mode needs ResourceAgentProblem instances")
        return _resource(problems, tol, max_iter)
    raise ValueError(f"unknown mode {mode!r}")


def unconstrained_minimum(problems, tol: float = 1e-10, max_iter: int = 2_000_000) -> float:
    """``min sum_i Phi_i(xi_i)`` with the shared constraint dropped, i.e. ``q(0)``."""
    phi, res = _resource(problems, tol, max_iter, constrained=False)
    if not res.converged:
        log.warning("unconstrained solve stopped at residual %.3e", res.residual)
    return phi
