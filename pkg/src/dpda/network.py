"""Graphs, Laplacian and incidence actions, and gossip mixing processes.

Stacked per-node vectors are 2-D arrays of shape ``(N, d)``, one row per
node; 1-D arrays of length ``N`` are treated as ``d = 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "GraphGenerationError",
    "laplacian_apply",
    "incidence_apply",
    "incidence_adjoint",
    "algebraic_connectivity",
    "generate_graph",
    "metropolis_matrix",
    "MixingConstants",
    "mixing_constants",
    "MixingProcess",
    "multi_consensus",
    "write_edge_list",
    "read_edge_list",
    "path_graph",
    "ring_graph",
    "complete_graph",
    "star_graph",
]

log = logging.getLogger(__name__)


class GraphGenerationError(RuntimeError):
    """Raised when no graph near the target connectivity was found."""

    def __init__(self, msg, best_graph=None, best_lambda2=float("nan")):
        super().__init__(f"{msg} (best lambda2 found: {best_lambda2:.6g})")
        self.best_graph = best_graph
        self.best_lambda2 = best_lambda2


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored as ``(i, j)`` with ``i < j`` in sorted order. Set
    ``require_connected=False`` for the active subgraphs of a mixing process.
    """

    n: int
    edges: tuple
    require_connected: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range")
            e = (min(i, j), max(i, j))
            if e in norm:
                raise ValueError(f"duplicate edge {e}")
            norm.add(e)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if self.require_connected and not self.is_connected():
            raise ValueError("graph is not connected")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def heads(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges], dtype=int)

    @property
    def tails(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges], dtype=int)

    @property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def neighbors(self, i: int) -> list:
        return sorted({j for a, b in self.edges for j in (a, b) if i in (a, b) and j != i})

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    def laplacian(self) -> sp.csr_matrix:
        """Sparse Laplacian (used by vectorized solver loops and tests)."""
        h, t = self.heads, self.tails
        m = len(h)
        H = sp.csr_matrix(
            (np.r_[np.ones(m), -np.ones(m)], (np.r_[np.arange(m), np.arange(m)], np.r_[h, t])),
            shape=(m, self.n),
        )
        return (H.T @ H).tocsr()


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def ring_graph(n: int) -> Graph:
    if n < 3:
        return path_graph(n)
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def star_graph(n: int) -> Graph:
    return Graph(n, tuple((0, j) for j in range(1, n)))


def _blocks(graph: Graph, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != graph.n:
        raise ValueError(f"expected {graph.n} node blocks, got {x.shape[0]}")
    return x


def laplacian_apply(graph: Graph, x) -> np.ndarray:
    """Apply the graph Laplacian blockwise, ``(Omega kron I) x``.

    Block ``i`` of the result is ``sum_{j in N_i} (x_i - x_j)``.
    """
    x = _blocks(graph, x)
    out = np.zeros_like(x)
    if graph.num_edges:
        h, t = graph.heads, graph.tails
        diff = x[h] - x[t]
        np.add.at(out, h, diff)
        np.subtract.at(out, t, diff)
    return out


def incidence_apply(graph: Graph, x) -> np.ndarray:
    """Per-edge differences ``x_i - x_j`` for each edge ``(i, j)``."""
    x = _blocks(graph, x)
    return x[graph.heads] - x[graph.tails]


def incidence_adjoint(graph: Graph, lam) -> np.ndarray:
    """Adjoint of :func:`incidence_apply`, mapping edge blocks to node blocks."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[0] != graph.num_edges:
        raise ValueError(f"expected {graph.num_edges} edge blocks, got {lam.shape[0]}")
    out = np.zeros((graph.n,) + lam.shape[1:])
    np.add.at(out, graph.heads, lam)
    np.subtract.at(out, graph.tails, lam)
    return out


def algebraic_connectivity(graph: Graph) -> float:
    """Second-smallest Laplacian eigenvalue; 0 for disconnected graphs."""
    if graph.n < 2:
        return 0.0
    if not graph.is_connected():
        log.warning("graph is disconnected; algebraic connectivity is 0")
        return 0.0
    ev = np.linalg.eigvalsh(graph.laplacian().toarray())
    return float(ev[1])


def _lambda2_edges(n, edges) -> float:
    L = np.zeros((n, n))
    for i, j in edges:
        L[i, i] += 1
        L[j, j] += 1
        L[i, j] -= 1
        L[j, i] -= 1
    return float(np.linalg.eigvalsh(L)[1])


def generate_graph(n: int, target: float, tolerance: float, seed, max_attempts: int = 10_000,
                   strict: bool = True) -> Graph:
    """Random connected graph with algebraic connectivity near ``target``.

    Starts from a random spanning tree and greedily toggles random edges
    (or swaps one in and one out) while ``|lambda2 - target|`` decreases.

    Parameters
    ----------
    n : int
        Node count, at least 2.
    target : float
        Desired lambda2, in ``(0, n]``.
    tolerance : float
        Accepted relative deviation; the result satisfies
        ``|lambda2 - target| <= tolerance * target``.
    seed : int or numpy Generator
    max_attempts : int
        Bound on edge toggles.
    strict : bool
        If False, return the best graph found instead of raising.

    Raises
    ------
    GraphGenerationError
        When the search ends outside the tolerance band (strict mode).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not 0 < target <= n:
        raise ValueError(f"target lambda2 must lie in (0, {n}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    band = tolerance * target

    # random spanning tree: attach each node of a random order to an earlier one
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        u, v = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(u, v), max(u, v)))
    lam = _lambda2_edges(n, edges)
    best, best_err = set(edges), abs(lam - target)
    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    attempts = 0
    while best_err > band and attempts < max_attempts:
        attempts += 1
        e = all_pairs[rng.integers(len(all_pairs))]
        trial = set(best)
        if e in trial:
            trial.discard(e)
        else:
            trial.add(e)
            if rng.random() < 0.5:
                # paired move: also drop a random existing edge (keeps sparsity)
                cur = sorted(best)
                trial.discard(cur[rng.integers(len(cur))])
        lam_t = _lambda2_edges(n, trial)
        if lam_t <= 1e-9:
            continue
        err = abs(lam_t - target)
        if err < best_err:
            best, best_err = trial, err
    graph = Graph(n, tuple(best))
    lam = algebraic_connectivity(graph)
    if abs(lam - target) > band + 1e-12:
        if strict:
            raise GraphGenerationError(
                f"no graph with lambda2 within {tolerance:g} of {target:g} after {attempts} attempts",
                graph, lam)
        log.warning("best graph has lambda2=%.6g (target %.6g)", lam, target)
    return graph


def metropolis_matrix(graph: Graph, active=None) -> np.ndarray:
    """Metropolis weights over the active edges.

    Parameters
    ----------
    graph : Graph
    active : boolean mask over ``graph.edges`` or iterable of edges, optional
        Defaults to all edges.

    Returns
    -------
    ndarray of shape (N, N)
        Symmetric doubly stochastic matrix with
        ``V_ij = 1 / (1 + max(d_i, d_j))`` on active edges, degrees counted
        in the active subgraph.
    """
    m = graph.num_edges
    if active is None:
        mask = np.ones(m, dtype=bool)
    else:
        arr = np.asarray(active)
        if arr.dtype == bool:
            if arr.shape != (m,):
                raise ValueError("active mask has the wrong length")
            mask = arr
        else:
            index = {e: k for k, e in enumerate(graph.edges)}
            mask = np.zeros(m, dtype=bool)
            for i, j in active:
                e = (min(i, j), max(i, j))
                if e not in index:
                    raise ValueError(f"active edge {e} is not in the graph")
                mask[index[e]] = True
    return _metropolis_batch(graph.n, graph.heads, graph.tails, mask[None, :])[0]


def _metropolis_batch(n, heads, tails, masks) -> np.ndarray:
    """Metropolis matrices for a batch of edge masks, shape ``(q, n, n)``."""
    q = masks.shape[0]
    mf = masks.astype(float)
    deg = np.zeros((q, n))
    if heads.size:
        np.add.at(deg.T, heads, mf.T)
        np.add.at(deg.T, tails, mf.T)
    w = mf / (1.0 + np.maximum(deg[:, heads], deg[:, tails]))
    V = np.zeros((q, n, n))
    V[:, heads, tails] = w
    V[:, tails, heads] = w
    idx = np.arange(n)
    V[:, idx, idx] = 1.0 - V.sum(axis=2)
    return V


@dataclass(frozen=True)
class MixingConstants:
    """Geometric mixing constants: ``|W_ij - 1/N| <= Gamma alpha^(t-s)``."""

    Gamma: float
    alpha: float
    T_bar: int


def mixing_constants(zeta: float, T: int, N: int) -> MixingConstants:
    """Mixing constants from the weight floor ``zeta`` and window ``T``.

    ``T_bar = (N - 1) T``, ``alpha = (1 - zeta^T_bar)^(1/T_bar)`` and
    ``Gamma = 2 (1 + zeta^-T_bar) / (1 - zeta^T_bar)``.
    """
    if not 0 < zeta < 1:
        raise ValueError("zeta must lie in (0, 1)")
    if T < 1 or N < 2:
        raise ValueError("need T >= 1 and N >= 2")
    T_bar = (N - 1) * T
    log_zt = T_bar * math.log(zeta)
    zt = math.exp(log_zt)
    one_minus = -math.expm1(log_zt)
    alpha = math.exp(math.log1p(-zt) / T_bar)
    inv = math.exp(-log_zt) if -log_zt < 709.0 else math.inf
    Gamma = 2.0 * (1.0 + inv) / one_minus
    return MixingConstants(Gamma=Gamma, alpha=alpha, T_bar=T_bar)


class MixingProcess:
    """Sequence of Metropolis mixing matrices over a fixed base graph.

    Parameters
    ----------
    graph : Graph
        Connected base graph.
    policy : {"full", "bernoulli"}
        ``"full"`` activates every edge each round. ``"bernoulli"`` keeps each
        edge independently with probability ``prob`` and forces a fully active
        round every ``period``-th round, so every window of ``period``
        consecutive rounds contains a connected graph.
    prob : float
    period : int
    seed : int or Generator
    """

    def __init__(self, graph: Graph, policy: str = "full", prob: float = 1.0,
                 period: int = 1, seed=None):
        if policy not in ("full", "bernoulli"):
            raise ValueError(f"unknown activation policy {policy!r}")
        if policy == "bernoulli" and not 0 <= prob <= 1:
            raise ValueError("activation probability must lie in [0, 1]")
        if period < 1:
            raise ValueError("period must be >= 1")
        self.graph = graph
        self.policy = policy
        self.prob = float(prob)
        self.period = int(period) if policy == "bernoulli" else 1
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.t = 0
        self._heads, self._tails = graph.heads, graph.tails
        self._full = metropolis_matrix(graph)
        # on a complete graph one full round is exact averaging; apply it as a
        # mean so that rounding cannot leave a residual disagreement
        n = graph.n
        self._averaging = graph.num_edges == n * (n - 1) // 2 and n > 1

    @property
    def zeta(self) -> float:
        """Lower bound on every nonzero weight, ``1/N``."""
        return 1.0 / self.graph.n

    @property
    def window(self) -> int:
        return self.period

    def constants(self) -> MixingConstants:
        return mixing_constants(self.zeta, self.window, max(self.graph.n, 2))

    def next_matrices(self, q: int) -> np.ndarray:
        """The next ``q`` matrices, shape ``(q, N, N)``; advances the counter."""
        rounds = self.t + 1 + np.arange(q)
        self.t += q
        if self.policy == "full":
            return np.broadcast_to(self._full, (q,) + self._full.shape)
        m = self.graph.num_edges
        masks = self.rng.random((q, m)) < self.prob
        masks[rounds % self.period == 0] = True
        return _metropolis_batch(self.graph.n, self._heads, self._tails, masks)

    def next_matrix(self) -> np.ndarray:
        return np.array(self.next_matrices(1)[0])

    def mix(self, x: np.ndarray, q: int) -> np.ndarray:
        """Apply the next ``q`` matrices to stacked ``x`` (first is applied first)."""
        if self.policy == "full":
            self.t += q
            if self._averaging:
                return np.broadcast_to(x.mean(axis=0), x.shape).copy()
            V = self._full
            for _ in range(q):
                x = V @ x
            return x
        for V in self.next_matrices(q):
            x = V @ x
        return x


def _ball_rows(x: np.ndarray, B: float) -> np.ndarray:
    if x.ndim == 1:
        return np.clip(x, -B, B)
    nrm = np.linalg.norm(x, axis=1)
    scale = np.where(nrm > B, B / np.where(nrm > 0, nrm, 1.0), 1.0)
    return x * scale[:, None]


def multi_consensus(process: MixingProcess, x, q: int, B: float) -> np.ndarray:
    """``q`` gossip rounds followed by a per-node projection onto the B-ball.

    Each round counts as one communication per node and advances the
    process's round counter.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if not B > 0:
        raise ValueError("ball radius must be positive")
    x = _blocks(process.graph, x)
    return _ball_rows(process.mix(x, int(q)), B)


def ball_project_rows(x: np.ndarray, B: float) -> np.ndarray:
    return _ball_rows(x, B)


def write_edge_list(graph: Graph, path) -> None:
    lines = [f"nodes {graph.n}"] + [f"{i} {j}" for i, j in graph.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, require_connected: bool = True) -> Graph:
    """Read the ``nodes N`` + ``i j`` edge-list format."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or rows[0][0] != "nodes" or len(rows[0]) != 2:
        raise ValueError(f"{path}: first line must be 'nodes N'")
    n = int(rows[0][1])
    edges = []
    for k, r in enumerate(rows[1:], start=2):
        if len(r) != 2:
            raise ValueError(f"{path}:{k}: expected 'i j'")
        edges.append((int(r[0]), int(r[1])))
    return Graph(n, tuple(edges), require_connected=require_connected)
