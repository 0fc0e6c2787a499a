import math
from fractions import Fraction

import numpy as np
import pytest

from dpda.dynamic import (
    DynamicSolver,
    consensus_schedule,
    consensus_schedule_array,
    dpda_d_run,
    dpda_d_step,
    total_communications,
)
from dpda.metrics import dynamic_certificate
from dpda.network import MixingProcess, complete_graph, path_graph, ring_graph
from dpda.oracle import solve_centralized
from dpda.problems import select_stepsizes_dynamic
from dpda.suites import toy_pair


def _brute_q(k, p):
    # smallest integer q with q^p >= k, by linear search with exact rationals
    p = Fraction(p)
    q = 1
    while Fraction(q) ** p.numerator < Fraction(k) ** p.denominator:
        q += 1
    return q


def test_schedule_examples():
    assert [consensus_schedule(k, 2) for k in (1, 2, 4, 5, 9, 10)] == [1, 2, 2, 3, 3, 4]
    assert [consensus_schedule(k, 1) for k in (1, 7, 100)] == [1, 7, 100]
    with pytest.raises(ValueError):
        consensus_schedule(0, 2)
    with pytest.raises(ValueError):
        consensus_schedule(3, 0.5)


@pytest.mark.parametrize("p", [1, 2, 3, Fraction(3, 2), 1.5])
def test_schedule_matches_brute_force(p):
    for k in range(1, 400):
        assert consensus_schedule(k, p) == _brute_q(k, p)
    ks = np.arange(1, 400)
    assert np.array_equal(consensus_schedule_array(ks, p), [_brute_q(k, p) for k in ks])


def test_schedule_exact_at_perfect_powers():
    for q in range(1, 3000):
        assert consensus_schedule(q * q, 2) == q
        assert consensus_schedule(q * q + 1, 2) == q + 1
    assert consensus_schedule(10 ** 18, 2) == 10 ** 9
    assert consensus_schedule(10 ** 18 + 1, 2) == 10 ** 9 + 1


def test_total_communications():
    assert total_communications(100, 1) == 5050
    # direct summation oracle: ceil(sqrt k) = isqrt(k - 1) + 1
    assert total_communications(100, 2) == sum(math.isqrt(k - 1) + 1 for k in range(1, 101)) == 715
    assert total_communications(10_000, 2) == 671_650


@pytest.mark.xfail(strict=True, reason="stated total 671 for K=100, p=2 disagrees with direct summation (715)")
def test_total_communications_stated_value():
    assert total_communications(100, 2) == 671


def _toy(ball=3.0):
    probs = toy_pair(ball=ball)
    return probs, select_stepsizes_dynamic(probs)


def test_comm_count_in_run():
    probs, steps = _toy()
    rep = dpda_d_run(probs, MixingProcess(path_graph(2), "full"), steps, K=100, B=3.0, p=2)
    assert rep.comms == 715 and rep.final.comms == 715


def test_requires_ball():
    probs = toy_pair()
    with pytest.raises(ValueError):
        DynamicSolver(probs, MixingProcess(path_graph(2)), select_stepsizes_dynamic(probs), B=1.0)


def test_complete_graph_full_mixing_is_exact():
    probs = toy_pair(ball=3.0)
    probs = [probs[0], probs[1], probs[1]]
    steps = select_stepsizes_dynamic(probs)
    g = complete_graph(3)
    inexact = DynamicSolver(probs, MixingProcess(g, "full"), steps, B=3.0, diagnostic=True)
    exact = DynamicSolver(probs, MixingProcess(g, "full"), steps, B=3.0, exact=True)
    a, b = inexact.initial_state(), exact.initial_state()
    for _ in range(300):
        inexact.advance(a)
        exact.advance(b)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.mu, b.mu)
    d = inexact.diagnostics()
    assert np.all(d["e_norm"] == 0.0)


def test_bounds_hold_every_iteration(qp11_ball):
    probs, _ = qp11_ball
    steps = select_stepsizes_dynamic(probs)
    solver = DynamicSolver(probs, MixingProcess(ring_graph(5), "bernoulli", 0.7, 3, seed=2), steps,
                           B=2.0, diagnostic=True)
    solver.run(2000, checkpoints=[2000])
    d = solver.diagnostics()
    assert d["mu_bound_ok"] and d["e_bound_ok"]
    assert np.all(d["mu_norm"] <= d["mu_bound"])


def test_step_function_matches_solver():
    probs, steps = _toy()
    proc_a = MixingProcess(path_graph(2), "bernoulli", 0.5, 2, seed=4)
    proc_b = MixingProcess(path_graph(2), "bernoulli", 0.5, 2, seed=4)
    solver = DynamicSolver(probs, proc_b, steps, B=3.0)
    a, b = solver.initial_state(), solver.initial_state()
    for _ in range(20):
        a = dpda_d_step(a, probs, proc_a, steps, B=3.0)
        solver.advance(b)
    # dpda_d_step rebuilds the solver each call, so q_k restarts; compare first step only
    a1 = dpda_d_step(solver.initial_state(), probs, MixingProcess(path_graph(2), "full"), steps, B=3.0)
    b1 = DynamicSolver(probs, MixingProcess(path_graph(2), "full"), steps, B=3.0).step(solver.initial_state())
    assert np.array_equal(a1.x, b1.x)


def test_toy_pair_converges_and_certifies():
    probs, steps = _toy()
    sol = solve_centralized(probs)
    proc = MixingProcess(path_graph(2), "bernoulli", 0.7, 2, seed=0)
    cert = dynamic_certificate(sol, steps, proc.constants(), 2, 3.0, [np.zeros(1)] * 2)
    rep = dpda_d_run(probs, proc, steps, K=5000, B=3.0, phi_star=sol.phi_star, certificate=cert)
    assert rep.final.subopt <= 5e-3
    for m in rep.metrics:
        assert m.subopt <= m.bound_value and m.weighted_infeas <= m.bound_value


def test_deterministic(qp11_ball):
    probs, _ = qp11_ball
    steps = select_stepsizes_dynamic(probs)
    runs = [dpda_d_run(probs, MixingProcess(ring_graph(5), "bernoulli", 0.7, 3, seed=5), steps, K=300, B=2.0)
            for _ in range(2)]
    assert np.array_equal(runs[0].state.x, runs[1].state.x)
