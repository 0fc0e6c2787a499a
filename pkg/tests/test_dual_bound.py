import logging

import numpy as np
import pytest

from dpda.cones import FreeCone, NonnegativeOrthant, ProductCone, SecondOrderCone, ZeroCone
from dpda.dual_bound import NotSlaterError, SlaterCertificate, compute_r_tilde, dual_radius, slater_certificate
from dpda.oracle import solve_centralized
from dpda.suites import random_resource_suite, toy_resource_single


def _soc_grid_min(g, n=1_000_000, l1=True):
    # extreme rays of SOC_3 are (1, cos t, sin t); scale onto the l1 (or l2) sphere
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    W = np.stack([np.ones_like(t), np.cos(t), np.sin(t)], axis=1)
    W /= (np.abs(W).sum(axis=1) if l1 else np.linalg.norm(W, axis=1))[:, None]
    return float((W @ g).min())


def _cert(phi, q, g, cone):
    g = np.asarray(g, dtype=float)
    return SlaterCertificate([g], g, cone, phi, q, compute_r_tilde(g, cone))


def test_orthant_closed_form():
    assert compute_r_tilde([2.0, 3.0], NonnegativeOrthant(2)) == 2.0
    assert compute_r_tilde([5.0], NonnegativeOrthant(1)) == 5.0


def test_soc_matches_grid_oracle():
    g = np.array([2.0, 0.6, 0.0])
    oracle = _soc_grid_min(g)
    assert oracle == pytest.approx(0.62490, abs=1e-5)
    assert compute_r_tilde(g, SecondOrderCone(3)) == pytest.approx(oracle, abs=1e-7)


def test_soc_surrogate_below_l2_margin(rng):
    # ||w||_2 <= ||w||_1, so the l1-normalized minimum never exceeds the l2 one
    for _ in range(20):
        tail = rng.standard_normal(2)
        g = np.r_[np.linalg.norm(tail) + rng.uniform(0.1, 2.0), tail]
        r = compute_r_tilde(g, SecondOrderCone(3))
        assert 0 < r <= _soc_grid_min(g, 200_000, l1=False) + 1e-9
        assert r == pytest.approx(_soc_grid_min(g, 200_000), abs=1e-6)


def test_product_and_free_components():
    cone = ProductCone((NonnegativeOrthant(2), FreeCone(1), SecondOrderCone(3)))
    g = np.array([4.0, 3.0, -7.0, 2.0, 0.6, 0.0])
    assert compute_r_tilde(g, cone) == pytest.approx(_soc_grid_min(g[3:]), abs=1e-7)
    assert compute_r_tilde([-1.0], FreeCone(1)) == np.inf


def test_not_slater():
    with pytest.raises(NotSlaterError):
        compute_r_tilde([0.0, 1.0], NonnegativeOrthant(2))
    with pytest.raises(NotSlaterError):
        compute_r_tilde([1.0, 2.0, 0.0], SecondOrderCone(3))
    with pytest.raises(NotSlaterError):
        compute_r_tilde([0.0], ZeroCone(1))
    with pytest.raises(NotSlaterError):
        slater_certificate(toy_resource_single(), [[0.5]])


def test_radius_examples(caplog):
    assert dual_radius(_cert(10.0, 0.0, [2.0, 3.0], NonnegativeOrthant(2))) == 5.0
    with caplog.at_level(logging.WARNING, logger="dpda.dual_bound"):
        assert dual_radius(_cert(1.0, 1.0, [2.0, 3.0], NonnegativeOrthant(2))) == 0.0
    assert "degenerate" in caplog.text
    with pytest.raises(ValueError):
        _cert(0.0, 1.0, [2.0], NonnegativeOrthant(1))


def test_one_dimensional_kkt():
    probs = toy_resource_single()
    cert = slater_certificate(probs, [[2.0]])
    assert cert.phi_bar == 2.0 and cert.r_tilde == 1.0
    assert cert.q_lower == pytest.approx(0.0, abs=1e-8)
    assert dual_radius(cert) == pytest.approx(2.0, abs=1e-8)
    sol = solve_centralized(probs)
    assert np.linalg.norm(sol.y) == pytest.approx(1.0, abs=1e-8)
    assert np.linalg.norm(sol.y) <= dual_radius(cert)
    assert cert.to_dict()["radius"] == pytest.approx(2.0, abs=1e-8)


def test_containment_on_random_battery():
    for seed in range(50):
        probs, slater = random_resource_suite(N=2, n=2, m=2, seed=seed, return_slater=True)
        cert = slater_certificate(probs, slater)
        assert cert.r_tilde == float(np.min(cert.g))
        sol = solve_centralized(probs)
        assert np.linalg.norm(sol.y) <= dual_radius(cert)
