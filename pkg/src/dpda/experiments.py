"""Distributed linear SVM benchmark: data, problem construction and the replication suite."""

from __future__ import annotations

import csv
import json
import logging
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cones import NonnegativeOrthant
from .dynamic import DynamicSolver
from .errors import SolverDivergedError
from .functions import HalfSquaredNormOfSubblock, IndicatorBall, SeparableSum, WeightedLinearPlusNonneg
from .metrics import CSV_COLUMNS, _clean, log_checkpoints
from .network import GraphGenerationError, MixingProcess, algebraic_connectivity, generate_graph
from .oracle import solve_centralized
from .problems import AgentProblem, select_stepsizes_dynamic, select_stepsizes_static
from .static import StaticSolver

__all__ = [
    "SvmDataset",
    "SuiteConfig",
    "substream",
    "generate_svm_data",
    "build_svm_instance",
    "evaluate_classifier",
    "run_experiment_suite",
]

log = logging.getLogger(__name__)

N_SAMPLES = 900
N_TRAIN = 300
COVARIANCE = np.diag([1.0, 2.0])
MEANS = {-1: np.array([-1.0, -1.0]), 1: np.array([1.0, 1.0])}
N_SHARED = 3


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the named sub-stream of a 64-bit master seed.

    ``substream(s, "graph", 3)`` is independent of ``substream(s, "data")``
    and stable across runs and platforms.
    """
    key = tuple(zlib.crc32(str(n).encode()) for n in names)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass
class SvmDataset:
    """Two-class Gaussian sample with a train/test split.

    Attributes
    ----------
    X : ndarray of shape (900, 2)
    y : ndarray of +-1 labels; +1 marks the mean ``(1, 1)``
    train, test : index arrays (300 and 600 entries)
    """

    X: np.ndarray
    y: np.ndarray
    train: np.ndarray
    test: np.ndarray

    def partition(self, N: int) -> list:
        """Contiguous split of the train indices; the first ``300 mod N`` nodes get one extra."""
        if N < 1:
            raise ValueError("N must be >= 1")
        return np.array_split(self.train, N)


def generate_svm_data(seed) -> SvmDataset:
    """900 points with equiprobable labels, covariance ``diag(1, 2)`` and means ``+-(1, 1)``.

    The first 300 samples form the training set and the remaining 600 the
    test set. ``seed`` may be an int or a Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y = np.where(rng.random(N_SAMPLES) < 0.5, -1.0, 1.0)
    noise = rng.multivariate_normal(np.zeros(2), COVARIANCE, size=N_SAMPLES)
    X = np.where(y[:, None] > 0, MEANS[1], MEANS[-1]) + noise
    idx = np.arange(N_SAMPLES)
    return SvmDataset(X, y, idx[:N_TRAIN], idx[N_TRAIN:])


def build_svm_instance(dataset: SvmDataset, N: int, C: float, B: float = None) -> list:
    """One :class:`AgentProblem` per node for the soft-margin SVM.

    Node ``i`` holds ``x_i = (w, b, slack)`` with ``(w, b)`` shared,
    ``f_i = ||w||^2 / 2``, ``rho_i = N C sum(slack) + 1{slack >= 0}`` plus an
    optional ball of radius ``B`` on ``(w, b)``, and margin constraints
    ``y (w^T x + b) - 1 + slack >= 0``.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    out = []
    for S in dataset.partition(N):
        n_l = S.size
        d = N_SHARED + n_l
        yl = dataset.y[S]
        A = np.zeros((n_l, d))
        A[:, :2] = yl[:, None] * dataset.X[S]
        A[:, 2] = yl
        A[:, N_SHARED:] = np.eye(n_l)
        pieces = [((N_SHARED, d), WeightedLinearPlusNonneg(N * C))]
        if B is not None:
            pieces.insert(0, ((0, N_SHARED), IndicatorBall(np.zeros(N_SHARED), B)))
        rho = SeparableSum(tuple(pieces), d)
        out.append(AgentProblem(N_SHARED, n_l, rho, HalfSquaredNormOfSubblock(0, 2), A,
                                np.ones(n_l), NonnegativeOrthant(n_l)))
    return out


def evaluate_classifier(w, b: float, dataset: SvmDataset, which: str = "test") -> float:
    """Fraction of points in the chosen split with ``sign(w^T x + b) != y``.

    Points on the boundary count as errors.
    """
    if which not in ("train", "test"):
        raise ValueError("which must be 'train' or 'test'")
    idx = dataset.train if which == "train" else dataset.test
    score = dataset.X[idx] @ np.asarray(w, dtype=float) + b
    return float(np.mean(np.sign(score) != dataset.y[idx]))


@dataclass
class SuiteConfig:
    """Parameters of the replication suite."""

    seed: int = 0
    N: int = 10
    C_values: tuple = (2.0, 10.0)
    lambda2_values: tuple = (0.05, 1.0)
    topologies: tuple = ("static", "dynamic")
    replications: int = 5
    K_static: int = 100_000
    K_dynamic: int = 10_000
    p: float = 2.0
    gamma: float = 10.0
    c: float = 1000.0
    activation_prob: float = 0.5
    T_window: int = 3
    B_factor: float = 10.0
    graph_tolerance: float = 0.1
    per_decade: int = 10
    out_dir: str = None


def _shared_solution(x_parts) -> np.ndarray:
    return np.mean([np.asarray(x)[:N_SHARED] for x in x_parts], axis=0)


def _graph_for(cfg: SuiteConfig, lam2: float, rep: int):
    rng = substream(cfg.seed, "graph", lam2, rep)
    try:
        g = generate_graph(cfg.N, lam2, cfg.graph_tolerance, rng)
    except GraphGenerationError as exc:
        log.warning("lambda2 target %.3g unreachable for N=%d; using best graph (%.4g)",
                    lam2, cfg.N, exc.best_lambda2)
        g = exc.best_graph
    return g


def _write_run_csv(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS + ("test_error",))
        for r in rows:
            w.writerow([str(r["k"]), str(r["comms"])] + ["%.12e" % r[c] for c in CSV_COLUMNS[2:]]
                       + ["%.12e" % r["test_error"]])


def run_experiment_suite(cfg: SuiteConfig, progress=None) -> dict:
    """Run every (C, lambda2, topology, replication) case.

    Returns a dict with the centralized and local-only references, one
    record per run and the pointwise-mean curves per case. When
    ``cfg.out_dir`` is set, writes one CSV per run, ``suite.json`` and
    ``boundaries.csv``.

    Errors in a run are recorded and the remaining runs continue.
    """
    t0 = time.perf_counter()
    data = generate_svm_data(substream(cfg.seed, "data"))
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    refs = {}
    boundaries = []
    for C in cfg.C_values:
        probs = build_svm_instance(data, cfg.N, C)
        sol = solve_centralized(probs)
        wb = _shared_solution(sol.x)
        refs[C] = {"phi_star": sol.phi_star, "w": wb[:2], "b": float(wb[2]),
                   "test_error": evaluate_classifier(wb[:2], wb[2], data),
                   "kkt_residual": sol.kkt_residual}
        boundaries.append(("centralized", C, -1, wb[0], wb[1], wb[2]))
        for i, p in enumerate(probs):
            loc = solve_centralized([p])
            lw = loc.x[0][:N_SHARED]
            boundaries.append(("local", C, i, lw[0], lw[1], lw[2]))
    runs = []
    for C in cfg.C_values:
        ref = refs[C]
        for lam2 in cfg.lambda2_values:
            for topo in cfg.topologies:
                for rep in range(cfg.replications):
                    rec = {"C": C, "lambda2_target": lam2, "topology": topo, "replication": rep}
                    try:
                        rec.update(_one_run(cfg, data, C, lam2, topo, rep, ref))
                    except (SolverDivergedError, ValueError, RuntimeError) as exc:
                        log.error("run %s failed: %s", rec, exc)
                        rec["error"] = str(exc)
                    runs.append(rec)
                    if "w" in rec:
                        boundaries.append((f"dpda_{topo}_l{lam2:g}_r{rep}", C, -1, *rec["w"], rec["b"]))
                    if out_dir and "rows" in rec:
                        _write_run_csv(out_dir / f"run_C{C:g}_l{lam2:g}_{topo}_r{rep}.csv", rec["rows"])
                    if progress is not None:
                        progress(rec)
    curves = _average_curves(runs)
    result = {
        "config": {k: v for k, v in cfg.__dict__.items()},
        "references": refs,
        "runs": runs,
        "curves": curves,
        "boundaries": boundaries,
        "elapsed": time.perf_counter() - t0,
    }
    if out_dir:
        with open(out_dir / "boundaries.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("method", "C", "node", "wx", "wy", "b"))
            for m, C, i, wx, wy, b in boundaries:
                w.writerow((m, "%g" % C, i, "%.12e" % wx, "%.12e" % wy, "%.12e" % b))
        slim = dict(result)
        slim["runs"] = [{k: v for k, v in r.items() if k != "rows"} for r in runs]
        slim.pop("boundaries")
        (out_dir / "suite.json").write_text(json.dumps(_clean(_plain(slim)), indent=1, sort_keys=True) + "\n")
    return result


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _one_run(cfg, data, C, lam2, topo, rep, ref) -> dict:
    graph = _graph_for(cfg, lam2, rep)
    rec = {"lambda2": algebraic_connectivity(graph), "edges": graph.num_edges}
    if topo == "static":
        probs = build_svm_instance(data, cfg.N, C)
        steps = select_stepsizes_static(probs, graph, cfg.gamma, cfg.c)
        solver = StaticSolver(probs, graph, steps)
        K = cfg.K_static
    elif topo == "dynamic":
        B = cfg.B_factor * float(np.linalg.norm(np.r_[ref["w"], ref["b"]]))
        probs = build_svm_instance(data, cfg.N, C, B)
        steps = select_stepsizes_dynamic(probs, cfg.gamma, cfg.c)
        proc = MixingProcess(graph, "bernoulli", cfg.activation_prob, cfg.T_window,
                             substream(cfg.seed, "activation", C, lam2, rep))
        solver = DynamicSolver(probs, proc, steps, p=cfg.p, B=B)
        rec["B"] = B
        K = cfg.K_dynamic
    else:
        raise ValueError(f"unknown topology {topo!r}")
    pts = log_checkpoints(K, per_decade=cfg.per_decade)
    rows = []
    lay = solver.layout

    def record(st):
        if st.k in pts_set:
            X = st.x_bar[lay.shared_idx]
            wb = X.mean(axis=0)
            rows.append(wb)

    pts_set = set(pts.tolist())
    rep_out = solver.run(K, phi_star=ref["phi_star"], checkpoints=pts, callback=record)
    out_rows = []
    for m, wb in zip(rep_out.metrics, rows):
        d = {c: getattr(m, c) for c in CSV_COLUMNS}
        d["test_error"] = evaluate_classifier(wb[:2], wb[2], data)
        out_rows.append(d)
    wb = _shared_solution(rep_out.x_bar)
    fin = rep_out.final
    rec.update({
        "K": K,
        "comms": rep_out.comms,
        "w": wb[:2],
        "b": float(wb[2]),
        "test_error": evaluate_classifier(wb[:2], wb[2], data),
        "test_error_gap": abs(evaluate_classifier(wb[:2], wb[2], data) - ref["test_error"]),
        "subopt": fin.subopt,
        "infeas_sum": fin.infeas_sum,
        "cons_viol": fin.cons_viol,
        "rows": out_rows,
    })
    return rec


def _average_curves(runs: list) -> dict:
    """Pointwise mean over replications of subopt, infeasibility and consensus violation."""
    groups = {}
    for r in runs:
        if "rows" not in r:
            continue
        groups.setdefault((r["C"], r["lambda2_target"], r["topology"]), []).append(r["rows"])
    out = {}
    for (C, lam2, topo), reps in groups.items():
        ks = [row["k"] for row in reps[0]]
        curve = {"k": ks}
        for col in ("subopt", "infeas_sum", "cons_viol", "test_error"):
            curve[col] = np.mean([[row[col] for row in rows] for rows in reps], axis=0).tolist()
        out[f"C={C:g},lambda2={lam2:g},{topo}"] = curve
    return out
