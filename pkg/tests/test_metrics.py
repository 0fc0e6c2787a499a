import math

import numpy as np
import pytest

from dpda.metrics import (
    CSV_COLUMNS,
    IterationMetrics,
    RunReport,
    compute_metrics,
    consensus_distance,
    log_checkpoints,
    read_metrics_csv,
    static_certificate,
    theta1,
    theta2,
    theta3,
    theta3_partial,
    theta4,
    theta5,
    theta5_partial,
)
from dpda.network import MixingConstants, path_graph
from dpda.oracle import CentralSolution, solve_centralized
from dpda.problems import ConsensusLayout, StepSizes, select_stepsizes_static
from dpda.static import dpda_s_run
from dpda.suites import toy_pair, toy_single


def _saddle(x, theta, g=None, n_shared=1):
    x = [np.asarray(v, dtype=float) for v in x]
    g = np.zeros((len(x), n_shared)) if g is None else np.asarray(g, dtype=float)
    return CentralSolution("consensus", x, 0.0, 0.0, 0, True, theta=[np.asarray(t, dtype=float) for t in theta],
                           g=g, n_shared=n_shared)


def _resource_saddle(x, y, w):
    return CentralSolution("resource", [np.asarray(v, dtype=float) for v in x], 0.0, 0.0, 0, True,
                           y=np.asarray(y, dtype=float), w=np.asarray(w, dtype=float))


# -- metrics ------------------------------------------------------------------


def test_identical_feasible_agents():
    probs = toy_pair()
    lay = ConsensusLayout(probs)
    m = compute_metrics(lay.stack([np.array([2.5]), np.array([2.5])]), lay, path_graph(2), 1, 1)
    assert m.cons_viol == 0.0 and m.d_ctilde == 0.0 and m.infeas_sum == 0.0
    assert math.isnan(m.subopt) and math.isnan(m.bound_value)


def test_two_agent_spread():
    probs = toy_pair()
    lay = ConsensusLayout(probs)
    m = compute_metrics(lay.stack([np.array([1.0]), np.array([3.0])]), lay, path_graph(2), 1, 1, phi_star=2.5)
    assert m.cons_viol == 2.0
    assert m.d_ctilde == pytest.approx(math.sqrt(2.0), rel=1e-15)
    # only agent 0 holds x >= 2.5, and x = 1 violates it by 1.5
    assert m.infeas_sum == pytest.approx(1.5)
    assert m.objective == 0.0
    assert consensus_distance(np.array([[1.0], [3.0]])) == pytest.approx(math.sqrt(2.0))


def test_metrics_match_recomputation_from_state():
    probs = toy_pair()
    g = path_graph(2)
    rep = dpda_s_run(probs, g, select_stepsizes_static(probs, g), K=50, checkpoints=[50])
    x = [v[0] for v in rep.x_bar]
    assert rep.final.cons_viol == pytest.approx(abs(x[0] - x[1]), rel=1e-12)
    assert rep.final.d_ctilde == pytest.approx(abs(x[0] - x[1]) / math.sqrt(2.0), rel=1e-12)
    want = (x[0] - 1) ** 2 + (x[1] - 3) ** 2
    assert rep.final.objective == pytest.approx(want, rel=1e-12)
    assert rep.final.infeas_sum == pytest.approx(max(0.0, 2.5 - x[0]), abs=1e-15)


# -- constants ----------------------------------------------------------------


def test_theta1_collapse():
    x = [np.array([2.0]), np.array([2.0])]
    steps = StepSizes(1.0, np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert theta1(_saddle(x, [[0.0], [0.0]]), steps, x, path_graph(2)) == 0.0


def test_theta1_gamma_scaling():
    sad = _saddle([[2.0], [2.0]], [[-1.0], [0.5]], g=[[1.0], [-1.0]])
    x0 = [np.array([0.0]), np.array([1.0])]
    g = path_graph(2)
    tau, kap = np.array([0.5, 0.25]), np.array([0.5, 0.5])
    lam2 = float(np.sum(sad.edge_multipliers(g) ** 2))
    assert lam2 == pytest.approx(1.0)
    rest = (4 / (2 * 0.5) + 1 / (2 * 0.25)) + 4 * (1.0 / 0.5 + 0.25 / 0.5)
    for gamma in (1.0, 2.0):
        want = 2 / gamma * lam2 - gamma / 2 * 1.0 + rest
        assert theta1(sad, StepSizes(gamma, tau, kap), x0, g) == pytest.approx(want, rel=1e-14)


def test_theta2_collapse():
    x = [np.array([1.0]), np.array([1.0])]
    steps = StepSizes(1.0, np.array([0.5, 0.5]), np.array([0.5, 0.25]))
    sad = _saddle(x, [[-1.0], [-2.0]])
    assert theta2(sad, steps, x) == pytest.approx(4 * 1 / 0.5 + 4 * 4 / 0.25)


def test_theta4_collapse():
    x = [np.array([1.0]), np.array([1.0])]
    steps = StepSizes(1.0, np.array([0.5, 0.5]), np.array([0.5, 0.25]))
    sad = _resource_saddle(x, [-1.0], [[0.0], [0.0]])
    assert theta4(sad, steps, x) == pytest.approx(4 / 0.5 + 4 / 0.25)


def test_theta3_hand_sum():
    # p = 1 gives q_k = k, so alpha^q = 1/2, 1/4, 1/8
    consts = MixingConstants(Gamma=3.0, alpha=0.5, T_bar=1)
    N, B, gamma, lam = 2, 1.5, 0.7, 0.4
    c = gamma + lam / (math.sqrt(N) * B)
    hand = sum(0.5 ** k * (2 * gamma * k ** 2 + c * k) for k in (1, 2, 3)) * 8 * N ** 2 * B ** 2 * 3.0
    assert theta3(3, N, B, gamma, lam, consts, 1) == pytest.approx(hand, rel=1e-14)
    assert theta3_partial(3, N, B, gamma, lam, consts, 1)[-1] == pytest.approx(hand, rel=1e-14)


def test_theta5_hand_sum():
    consts = MixingConstants(Gamma=3.0, alpha=0.5, T_bar=1)
    N, B_d, gamma, w = 2, 1.5, 0.7, 0.4
    c = w / (math.sqrt(N) * B_d)
    hand = sum(0.5 ** k * k * (2 * gamma * (k + 1) + c) for k in (1, 2, 3)) * 2 * N ** 2 * B_d ** 2 * 3.0
    assert theta5(3, N, B_d, gamma, w, consts, 1) == pytest.approx(hand, rel=1e-14)
    assert theta5_partial(3, N, B_d, gamma, w, consts, 1)[-1] == pytest.approx(hand, rel=1e-14)


@pytest.mark.parametrize("p,K1", [(1, 1_000), (2, 10_000), (3, 1_000_000)])
@pytest.mark.parametrize("which", ["theta3", "theta5"])
def test_plateau(p, K1, which):
    consts = MixingConstants(Gamma=2.0, alpha=0.5, T_bar=1)
    fn = theta3 if which == "theta3" else theta5
    a, b = fn(K1, 3, 1.0, 1.0, 0.5, consts, p), fn(2 * K1, 3, 1.0, 1.0, 0.5, consts, p)
    assert 0 <= b - a <= 1e-6 * a
    part = (theta3_partial if which == "theta3" else theta5_partial)(min(K1, 20_000), 3, 1.0, 1.0, 0.5, consts, p)
    assert np.all(np.diff(part) >= 0)


def test_theta_with_unit_alpha_grows():
    consts = MixingConstants(Gamma=1.0, alpha=1.0, T_bar=1)
    assert theta3(20, 2, 1.0, 1.0, 0.0, consts, 2) > theta3(10, 2, 1.0, 1.0, 0.0, consts, 2)


def test_static_certificate_on_toy_pair():
    probs = toy_pair()
    g = path_graph(2)
    steps = select_stepsizes_static(probs, g)
    sol = solve_centralized(probs)
    cert = static_certificate(sol, steps, [np.zeros(1)] * 2, g)
    assert np.isfinite(cert.constant) and cert.constant > 0
    rep = dpda_s_run(probs, g, steps, K=10_000, phi_star=sol.phi_star, certificate=cert,
                     checkpoints=[100, 1_000, 10_000])
    for m in rep.metrics:
        assert m.subopt <= m.bound_value and m.weighted_infeas <= m.bound_value


def test_certificate_single_agent():
    probs = toy_single()
    g = path_graph(1)
    steps = select_stepsizes_static(probs, g)
    cert = static_certificate(solve_centralized(probs), steps, [np.zeros(1)], g)
    assert cert.bound(10) == pytest.approx(cert.constant / 10)


# -- checkpoints and files ----------------------------------------------------


def test_log_checkpoints():
    pts = log_checkpoints(1000, per_decade=5)
    assert pts[0] == 1 and pts[-1] == 1000
    assert np.all(np.diff(pts) > 0)
    assert {2, 4, 512}.issubset(set(pts))
    assert set(range(100, 1001, 100)).issubset(set(log_checkpoints(1000, every=100)))


def test_csv_format(tmp_path):
    m = IterationMetrics(k=3, comms=5, objective=1.0 / 3.0, subopt=0.25, infeas_sum=0.0, cons_viol=2.0,
                         d_ctilde=math.sqrt(2.0))
    rep = RunReport("static", [m], [np.zeros(1)], 5, 3)
    path = tmp_path / "m.csv"
    rep.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == ("3,5,3.333333333333e-01,2.500000000000e-01,0.000000000000e+00,"
                        "2.000000000000e+00,1.414213562373e+00,nan")
    back = read_metrics_csv(path)
    assert back[0]["k"] == 3 and back[0]["cons_viol"] == 2.0 and math.isnan(back[0]["bound_value"])


def test_json_summary_is_standard(tmp_path):
    import json

    m = IterationMetrics(k=1, comms=1, objective=1.0, subopt=float("nan"), infeas_sum=0.0, cons_viol=0.0,
                         d_ctilde=0.0)
    rep = RunReport("static", [m], [np.zeros(2)], 1, 1, config={"seed": 7})
    path = tmp_path / "r.json"
    rep.write_json(path)
    d = json.loads(path.read_text())
    assert d["seed"] == 7 and d["final"]["subopt"] == "nan" and d["x_bar"] == [[0.0, 0.0]]
