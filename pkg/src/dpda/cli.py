"""Command-line front end.

Exit codes: 0 success, 1 solver divergence or failed certification,
2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import suites
from .config import RunConfig, read_vectors, write_vectors
from .dual_bound import NotSlaterError, dual_radius, slater_certificate
from .dynamic import DynamicSolver
from .errors import ConfigError, SolverDivergedError
from .experiments import SuiteConfig, run_experiment_suite, substream
from .metrics import (
    CSV_COLUMNS,
    dynamic_certificate,
    log_checkpoints,
    read_metrics_csv,
    resource_certificate,
    static_certificate,
)
from .network import (
    GraphGenerationError,
    MixingProcess,
    algebraic_connectivity,
    complete_graph,
    generate_graph,
    path_graph,
    read_edge_list,
    ring_graph,
    star_graph,
    write_edge_list,
)
from .oracle import CentralSolution, solve_centralized
from .problems import (
    StepSizeError,
    select_stepsizes_dynamic,
    select_stepsizes_resource,
    select_stepsizes_static,
)
from .resource import ResourceSolver
from .static import StaticSolver

__all__ = ["main", "build_problems", "build_graph"]

log = logging.getLogger("dpda")

_SUITE_SEEDS = {"qp": 42, "resource_qp": 13}


# ---------------------------------------------------------------------------
# builders


def build_problems(cfg: RunConfig):
    """Problem list plus an optional built-in Slater point."""
    slater = None
    if cfg.problem == "toy_single":
        probs = suites.toy_single(cfg.ball)
    elif cfg.problem == "toy_pair":
        probs = suites.toy_pair(cfg.ball)
    elif cfg.problem == "qp":
        seed = _SUITE_SEEDS["qp"] if cfg.problem_seed is None else cfg.problem_seed
        probs = suites.random_qp_suite(N=cfg.N, seed=seed, ball=cfg.ball)
    elif cfg.problem == "toy_resource_single":
        probs, slater = suites.toy_resource_single(), [np.array([2.0])]
    elif cfg.problem == "toy_resource_pair":
        probs = suites.toy_resource_pair()
    else:
        seed = _SUITE_SEEDS["resource_qp"] if cfg.problem_seed is None else cfg.problem_seed
        probs, slater = suites.random_resource_suite(N=cfg.N, seed=seed, return_slater=True)
    return probs, slater


def build_graph(cfg: RunConfig, n: int):
    kind = cfg.graph
    if kind == "file":
        try:
            g = read_edge_list(cfg.graph_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"graph_file: {exc}") from None
        if g.n != n:
            raise ConfigError(f"graph_file has {g.n} nodes for {n} agents")
        return g
    if n == 1:
        return path_graph(1)
    if kind == "generated":
        rng = substream(cfg.seed, "graph")
        try:
            return generate_graph(n, cfg.lambda2, cfg.graph_tolerance, rng)
        except GraphGenerationError as exc:
            raise ConfigError(str(exc)) from None
    return {"ring": ring_graph, "path": path_graph, "complete": complete_graph, "star": star_graph}[kind](n)


def _load_x0(cfg: RunConfig, n_agents: int):
    if cfg.x0 is None:
        return None
    try:
        xs = read_vectors(cfg.x0)
    except OSError as exc:
        raise ConfigError(f"x0: {exc}") from None
    if len(xs) != n_agents:
        raise ConfigError(f"x0 has {len(xs)} vectors for {n_agents} agents")
    return xs


def _oracle(cfg: RunConfig, probs) -> CentralSolution:
    if cfg.oracle:
        try:
            return CentralSolution.read_json(cfg.oracle)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"oracle: {exc}") from None
    return solve_centralized(probs, tol=cfg.oracle_tol)


def _resource_radius(cfg: RunConfig, probs, slater):
    if cfg.slater_point not in (None, "auto"):
        try:
            slater = read_vectors(cfg.slater_point)
        except OSError as exc:
            raise ConfigError(f"slater_point: {exc}") from None
    elif cfg.slater_point is None:
        slater = None
    if slater is not None:
        try:
            cert = slater_certificate(probs, slater)
        except (NotSlaterError, ValueError) as exc:
            raise ConfigError(f"slater_point: {exc}") from None
        return dual_radius(cert), cert
    if cfg.B_d is None:
        raise ConfigError("resource runs need B_d or slater_point")
    return cfg.B_d, None


def _x0_list(x0, probs):
    return [np.zeros(p.dim) for p in probs] if x0 is None else x0


def run_solver(cfg: RunConfig):
    """Build, solve and write outputs; returns the :class:`RunReport`."""
    probs, slater = build_problems(cfg)
    N = len(probs)
    x0 = _load_x0(cfg, N)
    sol = _oracle(cfg, probs)
    graph = build_graph(cfg, N)
    pts = log_checkpoints(cfg.K, per_decade=cfg.per_decade)
    c = cfg.c_values()
    p = cfg.p_value()
    extra = {}
    try:
        if cfg.solver == "static":
            steps = select_stepsizes_static(probs, graph, cfg.gamma, c)
            cert = static_certificate(sol, steps, _x0_list(x0, probs), graph) if cfg.certify else None
            solver = StaticSolver(probs, graph, steps)
        else:
            proc = MixingProcess(graph, cfg.activation_policy, cfg.activation_prob, cfg.T_window,
                                 substream(cfg.seed, "activation"))
            if cfg.solver == "dynamic":
                B = cfg.B if cfg.B is not None else cfg.ball
                if B is None:
                    raise ConfigError("dynamic runs need B (or ball)")
                steps = select_stepsizes_dynamic(probs, cfg.gamma, c)
                cert = (dynamic_certificate(sol, steps, proc.constants(), p, B, _x0_list(x0, probs))
                        if cfg.certify and N > 1 else None)
                solver = DynamicSolver(probs, proc, steps, p=p, B=B, diagnostic=cfg.diagnostic_shadow)
            else:
                B_d, sc = _resource_radius(cfg, probs, slater)
                extra["B_d"] = B_d
                if sc is not None:
                    extra["slater"] = sc.to_dict()
                steps = select_stepsizes_resource(probs, cfg.gamma, cfg.margin)
                cert = (resource_certificate(sol, steps, proc.constants(), p, B_d, _x0_list(x0, probs))
                        if cfg.certify and N > 1 else None)
                solver = ResourceSolver(probs, proc, steps, p=p, B_d=B_d)
    except StepSizeError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    echo = cfg.to_dict()
    echo.update(extra)
    report = solver.run(cfg.K, x0, phi_star=sol.phi_star, certificate=cert, checkpoints=pts, config=echo)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "metrics.csv")
    report.write_json(out / "report.json")
    (out / "config.ini").write_text(cfg.to_ini())
    sol.write_json(out / "oracle.json")
    write_vectors(report.x_bar, out / "x_bar.txt")
    return report


# ---------------------------------------------------------------------------
# certify


def certify(report_path, oracle_path, csv_path=None, rtol: float = 1e-9) -> list:
    """Re-check a stored run against an oracle solution.

    Returns a list of failure messages; empty means PASS. Checks that the
    stored suboptimality equals ``|objective - Phi*|``, that every logged
    suboptimality and weighted infeasibility lies below the stored bound,
    and, when ``csv_path`` is given, that the CSV agrees with the JSON.
    """
    rep = json.loads(Path(report_path).read_text())
    sol = CentralSolution.read_json(oracle_path)
    phi = sol.phi_star
    fails = []
    rows = rep.get("rows") or []
    if not rows:
        return ["report has no metric rows"]
    for r in rows:
        obj, sub = float(r["objective"]), float(r["subopt"])
        tol = rtol * (1.0 + abs(obj))
        if not abs(abs(obj - phi) - sub) <= tol:
            fails.append(f"k={r['k']}: stored subopt {sub:.12e} != |objective - Phi*| {abs(obj - phi):.12e}")
        bnd = float(r["bound_value"])
        if rep.get("certificate") is not None:
            if not sub <= bnd:
                fails.append(f"k={r['k']}: subopt {sub:.6e} exceeds bound {bnd:.6e}")
            wi = float(r["weighted_infeas"])
            if not wi <= bnd:
                fails.append(f"k={r['k']}: weighted infeasibility {wi:.6e} exceeds bound {bnd:.6e}")
    if rep.get("certificate") is None:
        fails.append("report carries no certificate")
    if csv_path is not None:
        csv_rows = read_metrics_csv(csv_path)
        if len(csv_rows) != len(rows):
            fails.append("CSV and JSON row counts differ")
        for a, b in zip(csv_rows, rows):
            for col in CSV_COLUMNS:
                x, y = float(a[col]), float(b[col])
                if not (x == y or abs(x - y) <= 1e-11 * (1.0 + abs(y))):
                    fails.append(f"k={b['k']}: column {col} differs between CSV ({x!r}) and JSON ({y!r})")
    return fails


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(ap, cls, skip=()):
    for f in fields(cls):
        if f.name in skip:
            continue
        ap.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                        help=f"override {f.name}")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpda", description="Distributed primal-dual solvers and experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-graph", help="random connected graph with a target algebraic connectivity")
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--lambda2", type=float, required=True)
    g.add_argument("--tolerance", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="graph.txt")
    g.add_argument("--best-effort", action="store_true", help="write the closest graph if the target is unreachable")

    for name in ("run-static", "run-dynamic", "run-resource", "oracle"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI file with a [run] section")
        _add_config_flags(s, RunConfig, skip=("solver",) if name != "oracle" else ())
        if name == "oracle":
            s.add_argument("--out", default="oracle.json")

    s = sub.add_parser("svm-suite", help="distributed SVM replication suite")
    _add_config_flags(s, SuiteConfig)

    c = sub.add_parser("certify", help="re-check a run report against an oracle solution")
    c.add_argument("--run", required=True, help="report.json written by a run command")
    c.add_argument("--oracle", required=True, help="oracle solution JSON")
    c.add_argument("--csv", help="metrics CSV to cross-check against the report")
    return ap


def _run_config(args, solver=None) -> RunConfig:
    cfg = RunConfig.read(args.config) if args.config else RunConfig()
    over = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    if solver is not None:
        over["solver"] = solver
    return cfg.with_overrides(over)


def _suite_config(args) -> SuiteConfig:
    cfg = SuiteConfig()
    for f in fields(SuiteConfig):
        raw = getattr(args, f.name, None)
        if raw is None:
            continue
        cur = getattr(cfg, f.name)
        try:
            if isinstance(cur, tuple):
                kind = str if f.name == "topologies" else float
                val = tuple(kind(v) for v in raw.split(","))
            elif isinstance(cur, bool):
                val = raw.lower() in ("1", "true", "yes")
            elif isinstance(cur, int):
                val = int(raw)
            elif isinstance(cur, float):
                val = float(raw)
            else:
                val = raw
        except ValueError:
            raise ConfigError(f"{f.name}: cannot parse {raw!r}") from None
        setattr(cfg, f.name, val)
    if cfg.replications < 1 or cfg.K_static < 1 or cfg.K_dynamic < 1:
        raise ConfigError("replications and iteration counts must be >= 1")
    return cfg


def _cmd_gen_graph(args) -> int:
    if args.nodes < 1 or not args.lambda2 > 0:
        raise ConfigError("need nodes >= 1 and lambda2 > 0")
    try:
        g = generate_graph(args.nodes, args.lambda2, args.tolerance, args.seed, strict=not args.best_effort)
    except GraphGenerationError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_edge_list(g, args.out)
    print(f"gen-graph: nodes={g.n} edges={g.num_edges} lambda2={algebraic_connectivity(g):.6f} -> {args.out}")
    return 0


def _cmd_run(args, solver) -> int:
    cfg = _run_config(args, solver)
    rep = run_solver(cfg)
    f = rep.final
    print(f"{cfg.solver}: K={rep.iterations} comms={rep.comms} objective={f.objective:.9g} "
          f"subopt={f.subopt:.3e} infeas={f.infeas_sum:.3e} cons_viol={f.cons_viol:.3e} -> {cfg.out_dir}")
    return 0


def _cmd_oracle(args) -> int:
    prob = args.problem or (RunConfig.read(args.config).problem if args.config else RunConfig.problem)
    solver = "resource" if prob.startswith(("toy_resource", "resource")) else "static"
    cfg = _run_config(args, args.solver or solver)
    probs, _ = build_problems(cfg)
    sol = solve_centralized(probs, tol=cfg.oracle_tol)
    sol.write_json(args.out)
    flag = "" if sol.converged else " (not converged)"
    print(f"oracle: Phi*={sol.phi_star:.12g} residual={sol.kkt_residual:.3e} "
          f"iterations={sol.iterations}{flag} -> {args.out}")
    return 0 if not sol.infeasible else 1


def _cmd_svm(args) -> int:
    cfg = _suite_config(args)
    res = run_experiment_suite(cfg, progress=lambda r: log.info("run %s", {k: r[k] for k in (
        "C", "lambda2_target", "topology", "replication")}))
    failed = [r for r in res["runs"] if "error" in r]
    print(f"svm-suite: {len(res['runs'])} runs, {len(failed)} failed, {res['elapsed']:.1f} s"
          + (f" -> {cfg.out_dir}" if cfg.out_dir else ""))
    return 1 if failed else 0


def _cmd_certify(args) -> int:
    try:
        fails = certify(args.run, args.oracle, args.csv)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read inputs: {exc}") from None
    if fails:
        print(f"certify: FAIL ({len(fails)} problems); first: {fails[0]}")
        return 1
    print("certify: PASS")
    return 0


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-graph":
            return _cmd_gen_graph(args)
        if args.command.startswith("run-"):
            return _cmd_run(args, args.command[4:])
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "svm-suite":
            return _cmd_svm(args)
        return _cmd_certify(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverDivergedError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
