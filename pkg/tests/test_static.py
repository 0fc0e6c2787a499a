import numpy as np
import pytest

from dpda.errors import SolverDivergedError
from dpda.metrics import static_certificate
from dpda.network import complete_graph, incidence_apply, path_graph, ring_graph
from dpda.oracle import solve_centralized
from dpda.problems import StepSizes, select_stepsizes_static
from dpda.static import StaticSolver, dpda_s_run, dpda_s_step
from dpda.suites import random_qp_suite, toy_pair, toy_single


def test_single_agent_reaches_kkt_point():
    probs = toy_single()
    rep = dpda_s_run(probs, path_graph(1), select_stepsizes_static(probs, path_graph(1)), K=5000, phi_star=0.0)
    assert rep.x_bar[0][0] == pytest.approx(1.0, abs=1e-3)


def test_toy_pair_matches_hand_solution():
    probs = toy_pair()
    g = path_graph(2)
    rep = dpda_s_run(probs, g, select_stepsizes_static(probs, g), K=20000, phi_star=2.5)
    assert rep.final.subopt <= 1e-3
    assert all(abs(x[0] - 2.5) < 1e-3 for x in rep.x_bar)


def test_step_function_matches_solver():
    probs = random_qp_suite(N=4, seed=3)
    g = ring_graph(4)
    steps = select_stepsizes_static(probs, g)
    solver = StaticSolver(probs, g, steps)
    a = solver.initial_state()
    b = solver.initial_state()
    for _ in range(25):
        a = dpda_s_step(a, probs, g, steps)
        solver.advance(b)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.theta, b.theta) and np.array_equal(a.s, b.s)
    assert a.comms == 25


def test_step_does_not_mutate_input():
    probs = toy_pair()
    g = path_graph(2)
    solver = StaticSolver(probs, g, select_stepsizes_static(probs, g))
    st = solver.initial_state()
    x_before = st.x.copy()
    solver.step(st)
    assert np.array_equal(st.x, x_before) and st.k == 0


def test_dual_stays_in_polar_cone(qp42):
    probs, _ = qp42
    g = ring_graph(5)
    solver = StaticSolver(probs, g, select_stepsizes_static(probs, g))
    st = solver.initial_state()
    for _ in range(200):
        solver.advance(st)
        assert np.all(st.theta <= 0)


def test_running_sum_identity(qp42):
    # s^k = x^k + sum_{l<=k} x^l on the shared block (x^0 included as x^0 + x^0 - x^0)
    probs, _ = qp42
    g = ring_graph(5)
    solver = StaticSolver(probs, g, select_stepsizes_static(probs, g))
    st = solver.initial_state()
    lay = solver.layout
    for _ in range(30):
        solver.advance(st)
    want = st.x[lay.shared_idx] + st.x_sum[lay.shared_idx]
    assert np.allclose(st.s, want, rtol=1e-12, atol=1e-12)


def test_oracle_match_at_1e5(qp42):
    probs, sol = qp42
    g = ring_graph(5)
    rep = dpda_s_run(probs, g, select_stepsizes_static(probs, g, c=10.0), K=100_000, phi_star=sol.phi_star,
                     checkpoints=[100_000])
    assert rep.final.subopt <= 1e-3


def test_certificate_toy_pair():
    probs = toy_pair()
    g = path_graph(2)
    sol = solve_centralized(probs)
    steps = select_stepsizes_static(probs, g)
    cert = static_certificate(sol, steps, [np.zeros(1)] * 2, g)
    rep = dpda_s_run(probs, g, steps, K=10_000, phi_star=sol.phi_star, certificate=cert)
    for m in rep.metrics:
        assert m.subopt <= m.bound_value and m.weighted_infeas <= m.bound_value


def test_divergence_is_reported():
    probs = toy_pair()
    g = path_graph(2)
    bad = StepSizes(1.0, np.array([1e300, 1e300]), np.array([1e300, 1e300]))
    solver = StaticSolver(probs, g, bad, validate=False)
    with pytest.raises(SolverDivergedError) as exc, np.errstate(all="ignore"):
        solver.run(50)
    assert exc.value.step >= 1


def test_graph_size_mismatch():
    probs = toy_pair()
    with pytest.raises(ValueError):
        StaticSolver(probs, complete_graph(3), select_stepsizes_static(probs, path_graph(2)))


def test_consensus_violation_decays(qp42):
    probs, _ = qp42
    g = ring_graph(5)
    rep = dpda_s_run(probs, g, select_stepsizes_static(probs, g), K=4096, checkpoints=[256, 4096])
    X = np.array([x[:3] for x in rep.x_bar])
    assert rep.metrics[1].cons_viol < rep.metrics[0].cons_viol
    assert np.max(np.linalg.norm(incidence_apply(g, X), axis=1)) == pytest.approx(rep.final.cons_viol)
