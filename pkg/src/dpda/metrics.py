"""Run metrics, error-bound certificates and report serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Graph, MixingConstants, incidence_apply

__all__ = [
    "IterationMetrics",
    "RunReport",
    "Certificate",
    "compute_metrics",
    "compute_resource_metrics",
    "consensus_distance",
    "theta1",
    "theta2",
    "theta3",
    "theta3_partial",
    "theta_dynamic",
    "theta4",
    "theta5",
    "theta5_partial",
    "theta_resource",
    "static_certificate",
    "dynamic_certificate",
    "resource_certificate",
    "CSV_COLUMNS",
    "log_checkpoints",
]

CSV_COLUMNS = ("k", "comms", "objective", "subopt", "infeas_sum", "cons_viol", "d_ctilde", "bound_value")


@dataclass
class IterationMetrics:
    """Quality of the ergodic average after ``k`` iterations.

    ``subopt`` and ``bound_value`` are NaN when no reference solution or
    certificate was supplied.
    """

    k: int
    comms: int
    objective: float
    subopt: float
    infeas_sum: float
    cons_viol: float
    d_ctilde: float
    bound_value: float = float("nan")
    weighted_infeas: float = float("nan")
    infeas: list = field(default_factory=list)

    def row(self) -> list:
        return [self.k, self.comms] + [getattr(self, c) for c in CSV_COLUMNS[2:]]


def consensus_distance(X: np.ndarray) -> float:
    """``||X - 1 (x) mean(X)||`` over stacked rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    return float(np.linalg.norm(X - X.mean(axis=0, keepdims=True)))


def _edge_spread(graph: Graph, X: np.ndarray) -> float:
    if graph.num_edges == 0:
        return 0.0
    D = incidence_apply(graph, X)
    D = D.reshape(D.shape[0], -1)
    return float(np.max(np.linalg.norm(D, axis=1)))


def compute_metrics(x_bar, layout, graph: Graph, k: int, comms: int,
                    phi_star: float = None, certificate: "Certificate" = None) -> IterationMetrics:
    """Metrics of a stacked consensus iterate.

    Parameters
    ----------
    x_bar : ndarray
        Stacked ergodic iterate.
    layout : ConsensusLayout
    graph : Graph
        Graph whose edges define the consensus violation.
    """
    X = x_bar[layout.shared_idx]
    infeas = layout.infeasibility(x_bar)
    obj = layout.objective(x_bar)
    m = IterationMetrics(
        k=int(k),
        comms=int(comms),
        objective=obj,
        subopt=abs(obj - phi_star) if phi_star is not None else float("nan"),
        infeas_sum=float(infeas.sum()),
        cons_viol=_edge_spread(graph, X),
        d_ctilde=consensus_distance(X),
        infeas=infeas.tolist(),
    )
    if certificate is not None:
        m.bound_value = certificate.bound(k)
        m.weighted_infeas = certificate.weighted_infeasibility(x_bar, layout, graph, infeas)
    return m


def compute_resource_metrics(xi_bar, y_bar, layout, graph: Graph, k: int, comms: int,
                             phi_star: float = None, certificate: "Certificate" = None) -> IterationMetrics:
    """Metrics of a resource-sharing iterate.

    ``infeas_sum`` is the global ``d_K(sum_i R_i xi_i - r_i)`` and the
    consensus columns measure the spread of the local dual estimates.
    """
    obj = layout.objective(xi_bar)
    g = layout.global_infeasibility(xi_bar)
    m = IterationMetrics(
        k=int(k),
        comms=int(comms),
        objective=obj,
        subopt=abs(obj - phi_star) if phi_star is not None else float("nan"),
        infeas_sum=g,
        cons_viol=_edge_spread(graph, y_bar),
        d_ctilde=consensus_distance(y_bar),
        infeas=[g],
    )
    if certificate is not None:
        m.bound_value = certificate.bound(k)
        m.weighted_infeas = certificate.y_norm * g
    return m


# ---------------------------------------------------------------------------
# bound constants


def _sq(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.ravel() @ v.ravel())


def _per_agent_sq(xs, x0s) -> np.ndarray:
    return np.array([_sq(np.asarray(a) - np.asarray(b)) for a, b in zip(xs, x0s)])


def theta1(saddle, steps, x0, graph: Graph) -> float:
    """Static constant.

    ``(2/gamma)||lam||^2 - (gamma/2)||M x0||^2
    + sum_i ||x_i* - x_i0||^2 / (2 tau_i) + 4 ||theta_i*||^2 / kappa_i``.

    Parameters
    ----------
    saddle : CentralSolution
        Supplies per-agent ``x`` and ``theta`` and edge multipliers.
    x0 : list of per-agent arrays
    """
    g = steps.gamma
    lam = saddle.edge_multipliers(graph)
    X0 = np.array([np.asarray(v)[:saddle.n_shared] for v in x0])
    Mx0 = incidence_apply(graph, X0) if graph.num_edges else np.zeros(0)
    th = np.array([_sq(t) for t in saddle.theta])
    dx = _per_agent_sq(saddle.x, x0)
    return float(2.0 / g * _sq(lam) - 0.5 * g * _sq(Mx0)
                 + np.sum(dx / (2.0 * steps.tau) + 4.0 * th / steps.kappa))


def theta2(saddle, steps, x0) -> float:
    """Dynamic constant ``2||lam||((1/gamma)||lam|| + ||x0 - x*||) + sum_i[...]``."""
    g = steps.gamma
    lam = float(np.linalg.norm(saddle.node_multipliers()))
    dx = _per_agent_sq(saddle.x, x0)
    th = np.array([_sq(t) for t in saddle.theta])
    return float(2.0 * lam * (lam / g + math.sqrt(dx.sum()))
                 + np.sum(dx / steps.tau + 4.0 * th / steps.kappa))


def _alpha_pow(q: np.ndarray, alpha: float) -> np.ndarray:
    if alpha >= 1.0:
        return np.ones_like(q, dtype=float)
    return np.exp(q * math.log(alpha))


def _schedule(k: np.ndarray, p) -> np.ndarray:
    from .dynamic import consensus_schedule_array

    return consensus_schedule_array(k, p)


def theta3_partial(K: int, N: int, B: float, gamma: float, lam_norm: float,
                   consts: MixingConstants, p) -> np.ndarray:
    """Partial sums ``Theta3(1..K)`` as an array of length ``K``."""
    k = np.arange(1, K + 1, dtype=float)
    a = _alpha_pow(_schedule(k, p), consts.alpha)
    terms = a * (2.0 * gamma * k ** 2 + (gamma + lam_norm / (math.sqrt(N) * B)) * k)
    return 8.0 * N ** 2 * B ** 2 * consts.Gamma * np.cumsum(terms)


def _chunked(K, term, chunk=1 << 22) -> float:
    total = 0.0
    for start in range(1, K + 1, chunk):
        k = np.arange(start, min(K, start + chunk - 1) + 1, dtype=float)
        total += float(np.sum(term(k)))
    return total


def theta3(K: int, N: int, B: float, gamma: float, lam_norm: float,
           consts: MixingConstants, p) -> float:
    """``8 N^2 B^2 Gamma sum_{k<=K} alpha^{q_k} [2 gamma k^2 + (gamma + ||lam||/(sqrt(N) B)) k]``."""
    c = gamma + lam_norm / (math.sqrt(N) * B)

    def term(k):
        return _alpha_pow(_schedule(k, p), consts.alpha) * (2.0 * gamma * k ** 2 + c * k)

    return 8.0 * N ** 2 * B ** 2 * consts.Gamma * _chunked(K, term)


def theta_dynamic(saddle, steps, consts: MixingConstants, K: int, p, B: float, x0):
    """``(Theta2, Theta3(K))`` for the time-varying solver."""
    lam = float(np.linalg.norm(saddle.node_multipliers()))
    N = len(saddle.x)
    return theta2(saddle, steps, x0), theta3(K, N, B, steps.gamma, lam, consts, p)


def theta4(saddle, steps, xi0) -> float:
    """``||w||(||w||/(2 gamma) + 2||y||) + sum_i ||xi_i* - xi_i0||^2/tau_i + 4||y_i*||^2/kappa_i``."""
    w = float(np.linalg.norm(saddle.w))
    N = len(saddle.x)
    y_stack = math.sqrt(N) * float(np.linalg.norm(saddle.y))
    dx = _per_agent_sq(saddle.x, xi0)
    ysq = _sq(saddle.y)
    return float(w * (w / (2.0 * steps.gamma) + 2.0 * y_stack)
                 + np.sum(dx / steps.tau + 4.0 * ysq / steps.kappa))


def theta5_partial(K: int, N: int, B_d: float, gamma: float, w_norm: float,
                   consts: MixingConstants, p) -> np.ndarray:
    k = np.arange(1, K + 1, dtype=float)
    a = _alpha_pow(_schedule(k, p), consts.alpha)
    terms = a * k * (2.0 * gamma * (k + 1.0) + w_norm / (math.sqrt(N) * B_d))
    return 2.0 * N ** 2 * B_d ** 2 * consts.Gamma * np.cumsum(terms)


def theta5(K: int, N: int, B_d: float, gamma: float, w_norm: float,
           consts: MixingConstants, p) -> float:
    """``2 N^2 B_d^2 Gamma sum_{k<=K} alpha^{q_k} k (2 gamma (k+1) + ||w||/(sqrt(N) B_d))``."""
    c = w_norm / (math.sqrt(N) * B_d)

    def term(k):
        return _alpha_pow(_schedule(k, p), consts.alpha) * k * (2.0 * gamma * (k + 1.0) + c)

    return 2.0 * N ** 2 * B_d ** 2 * consts.Gamma * _chunked(K, term)


def theta_resource(saddle, steps, consts: MixingConstants, K: int, p, B_d: float, xi0):
    """``(Theta4, Theta5(K))`` for the resource-sharing solver."""
    N = len(saddle.x)
    w = float(np.linalg.norm(saddle.w))
    return theta4(saddle, steps, xi0), theta5(K, N, B_d, steps.gamma, w, consts, p)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class Certificate:
    """Error bound ``(c0 + c1(K)) / K`` plus the weights of the infeasibility term.

    Attributes
    ----------
    kind : {"static", "dynamic", "resource"}
    constant : float
        Theta1, Theta2 or Theta4.
    partial : callable or None
        ``K -> Theta3(K)`` or ``Theta5(K)``.
    lam_norm : float
        Norm of the consensus multiplier (static/dynamic).
    theta_norms : ndarray
        Per-agent conic multiplier norms.
    y_norm : float
        Stacked dual norm (resource).
    """

    kind: str
    constant: float
    partial: object = None
    lam_norm: float = 0.0
    theta_norms: np.ndarray = None
    y_norm: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def bound(self, K: int) -> float:
        extra = 0.0
        if self.partial is not None:
            if K not in self._cache:
                self._cache[K] = self.partial(K)
            extra = self._cache[K]
        return (self.constant + extra) / K

    def weighted_infeasibility(self, x_bar, layout, graph, infeas) -> float:
        X = x_bar[layout.shared_idx]
        if self.kind == "static":
            cons = float(np.linalg.norm(incidence_apply(graph, X))) if graph.num_edges else 0.0
        else:
            cons = consensus_distance(X)
        return float(self.lam_norm * cons + np.dot(self.theta_norms, infeas))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "constant": self.constant,
            "lam_norm": self.lam_norm,
            "y_norm": self.y_norm,
            "theta_norms": None if self.theta_norms is None else list(map(float, self.theta_norms)),
        }


def static_certificate(saddle, steps, x0, graph) -> Certificate:
    lam = saddle.edge_multipliers(graph)
    return Certificate(
        kind="static",
        constant=theta1(saddle, steps, x0, graph),
        lam_norm=float(np.linalg.norm(lam)),
        theta_norms=np.array([np.linalg.norm(t) for t in saddle.theta]),
    )


def dynamic_certificate(saddle, steps, consts, p, B, x0) -> Certificate:
    lam = float(np.linalg.norm(saddle.node_multipliers()))
    N = len(saddle.x)
    return Certificate(
        kind="dynamic",
        constant=theta2(saddle, steps, x0),
        partial=lambda K: theta3(K, N, B, steps.gamma, lam, consts, p),
        lam_norm=lam,
        theta_norms=np.array([np.linalg.norm(t) for t in saddle.theta]),
    )


def resource_certificate(saddle, steps, consts, p, B_d, xi0) -> Certificate:
    N = len(saddle.x)
    w = float(np.linalg.norm(saddle.w))
    return Certificate(
        kind="resource",
        constant=theta4(saddle, steps, xi0),
        partial=lambda K: theta5(K, N, B_d, steps.gamma, w, consts, p),
        y_norm=math.sqrt(N) * float(np.linalg.norm(saddle.y)),
    )


# ---------------------------------------------------------------------------
# reports


def log_checkpoints(K: int, per_decade: int = 20, every: int = None) -> np.ndarray:
    """Iteration indices at which metrics are logged.

    Log-spaced (``per_decade`` points per factor of ten) plus all powers of
    two and ``K`` itself; ``every`` adds a regular grid.
    """
    pts = set(np.unique(np.round(np.logspace(0, math.log10(max(K, 1)), per_decade * max(1, int(math.log10(max(K, 1))) + 1))).astype(int)))
    k = 1
    while k <= K:
        pts.add(k)
        k *= 2
    if every:
        pts.update(range(every, K + 1, every))
    pts.add(K)
    return np.array(sorted(p for p in pts if 1 <= p <= K), dtype=int)


def _fmt(v) -> str:
    return "%.12e" % v


@dataclass
class RunReport:
    """Outcome of one solver run.

    Attributes
    ----------
    solver : str
    metrics : list of IterationMetrics
    x_bar : list of per-agent ergodic iterates
    comms : int
        Communication rounds per node.
    diagnostics : dict
        Solver-specific arrays (q_k, ||e^k||, ||mu^k||, bound checks).
    certificate : Certificate or None
    config : dict
        Echo of the configuration.
    """

    solver: str
    metrics: list
    x_bar: list
    comms: int
    iterations: int
    diagnostics: dict = field(default_factory=dict)
    certificate: Certificate = None
    phi_star: float = None
    config: dict = field(default_factory=dict)
    state: object = None
    y_bar: list = None

    @property
    def final(self) -> IterationMetrics:
        return self.metrics[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.metrics], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for m in self.metrics:
                w.writerow([str(m.k), str(m.comms)] + [_fmt(getattr(m, c)) for c in CSV_COLUMNS[2:]])

    def summary(self) -> dict:
        rows = []
        for m in self.metrics:
            d = {c: getattr(m, c) for c in CSV_COLUMNS}
            d["weighted_infeas"] = m.weighted_infeas
            rows.append(d)
        out = {
            "solver": self.solver,
            "iterations": self.iterations,
            "comms": self.comms,
            "phi_star": self.phi_star,
            "config": self.config,
            "seed": self.config.get("seed"),
            "final": rows[-1] if rows else None,
            "rows": rows,
            "x_bar": [np.asarray(v).tolist() for v in self.x_bar],
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
        }
        if self.y_bar is not None:
            out["y_bar"] = [np.asarray(v).tolist() for v in self.y_bar]
        return out

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(_clean(self.summary()), indent=1, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _clean(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _jsonable(obj) if isinstance(obj, (np.generic, np.ndarray)) else obj


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    out = []
    for r in rows[1:]:
        d = dict(zip(CSV_COLUMNS, r))
        out.append({"k": int(d["k"]), "comms": int(d["comms"]),
                    **{c: float(d[c]) for c in CSV_COLUMNS[2:]}})
    return out
