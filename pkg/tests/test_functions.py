import numpy as np
import pytest
from scipy.optimize import minimize

from dpda.functions import (
    CompiledProx,
    CompiledQuadratic,
    HalfSquaredNormOfSubblock,
    IndicatorBall,
    IndicatorBox,
    L1Norm,
    LeastSquares,
    Quadratic,
    SeparableSum,
    WeightedLinearPlusNonneg,
    Zero,
    ZeroSmooth,
    prox_apply,
    smooth_eval,
)


def test_prox_examples():
    assert np.array_equal(prox_apply(L1Norm(1.0), [2.0, -0.5], 1.0), [1.0, 0.0])
    assert np.array_equal(prox_apply(WeightedLinearPlusNonneg(np.array([3.0])), [5.0], 1.0), [2.0])
    assert np.allclose(prox_apply(IndicatorBall(0.0, 1.0), [3.0, 4.0], 0.7), [0.6, 0.8], rtol=0, atol=1e-15)
    assert np.array_equal(prox_apply(IndicatorBox(-1.0, 1.0), [3.0, 0.2], 5.0), [1.0, 0.2])
    assert np.array_equal(prox_apply(Zero(), [3.0, -2.0], 1.0), [3.0, -2.0])


def test_slack_prox_matches_svm_rule():
    v = np.array([-1.0, 0.5, 150.0])
    assert np.array_equal(prox_apply(WeightedLinearPlusNonneg(100.0), v, 0.5), np.maximum(0, v - 50.0))


def test_prox_errors():
    with pytest.raises(ValueError):
        prox_apply(L1Norm(1.0), [1.0], 0.0)
    with pytest.raises(ValueError):
        prox_apply(L1Norm(1.0), [1.0], -1.0)
    with pytest.raises(ValueError):
        SeparableSum((((0, 2), Zero()), ((1, 3), Zero())), 3)
    with pytest.raises(ValueError):
        prox_apply(IndicatorBall(np.zeros(2), 1.0), np.ones(3), 1.0)


def _separable():
    return SeparableSum((
        ((0, 2), L1Norm(0.5)),
        ((2, 4), IndicatorBall(np.array([1.0, 0.0]), 2.0)),
        ((4, 6), IndicatorBox(np.array([-1.0, 0.0]), np.array([1.0, 3.0]))),
        ((6, 8), WeightedLinearPlusNonneg(np.array([1.0, 2.0]))),
    ), 9)


PROX_TERMS = [
    L1Norm(0.7), WeightedLinearPlusNonneg(np.array([0.3, 1.0, 2.0])), IndicatorBall(np.array([1.0, -1.0, 0.5]), 1.5),
    IndicatorBox(np.array([-1.0, 0.0, -2.0]), np.array([1.0, 2.0, -1.0])), _separable(),
]


def _dim(rho):
    return rho.dim or 3


@pytest.mark.parametrize("rho", PROX_TERMS, ids=lambda r: type(r).__name__)
def test_prox_is_minimizer(rho, rng):
    # compare with a numerical minimizer of rho(y) + |y - v|^2/(2 tau); indicators handled by
    # checking that no feasible perturbation improves the objective
    n = _dim(rho)
    for _ in range(30):
        v = 3.0 * rng.standard_normal(n)
        tau = rng.uniform(0.1, 2.0)
        p = prox_apply(rho, v, tau)
        obj = lambda y: rho.value(y) + (y - v) @ (y - v) / (2 * tau)  # noqa: E731
        base = obj(p)
        assert np.isfinite(base)
        for _ in range(40):
            z = p + 0.05 * rng.standard_normal(n)
            assert obj(z) >= base - 1e-12


@pytest.mark.parametrize("rho", PROX_TERMS, ids=lambda r: type(r).__name__)
def test_prox_nonexpansive(rho, rng):
    n = _dim(rho)
    for _ in range(500):
        u, v = 3 * rng.standard_normal(n), 3 * rng.standard_normal(n)
        tau = rng.uniform(0.01, 3.0)
        pu, pv = prox_apply(rho, u, tau), prox_apply(rho, v, tau)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12
        # firm nonexpansiveness
        assert (pu - pv) @ (u - v) >= (pu - pv) @ (pu - pv) - 1e-12


def test_l1_prox_against_numeric(rng):
    rho = L1Norm(0.7)
    for _ in range(10):
        v, tau = rng.standard_normal(4), 0.9
        num = minimize(lambda y: 0.7 * np.abs(y).sum() + (y - v) @ (y - v) / (2 * tau), v,
                       method="Powell", options={"xtol": 1e-10, "ftol": 1e-14}).x
        assert np.allclose(prox_apply(rho, v, tau), num, atol=1e-5)


def test_separable_uncovered_coordinates_are_identity(rng):
    rho = _separable()
    v = rng.standard_normal(9)
    assert prox_apply(rho, v, 1.0)[8] == v[8]


def test_compiled_prox_matches_pieces(rng):
    rho = _separable()
    cp = CompiledProx([(0, 9, rho)], 9)
    for _ in range(100):
        v, tau = 3 * rng.standard_normal(9), rng.uniform(0.1, 2)
        assert np.allclose(cp.prox(v, tau), prox_apply(rho, v, tau), rtol=0, atol=1e-14)


def test_smooth_examples():
    val, g = smooth_eval(HalfSquaredNormOfSubblock(0, 2), np.array([3.0, 4.0, 7.0]))
    assert val == 12.5 and np.array_equal(g, [3.0, 4.0, 0.0])
    val, g = smooth_eval(ZeroSmooth(), np.array([1.0, 2.0]))
    assert val == 0.0 and np.array_equal(g, [0.0, 0.0])
    val, g = smooth_eval(Quadratic(np.eye(2), np.array([-1.0, -3.0])), np.array([2.0, 2.0]))
    assert val == -4.0 and np.array_equal(g, [1.0, -1.0])


def test_smooth_dimension_errors():
    with pytest.raises(ValueError):
        smooth_eval(Quadratic(np.eye(2)), np.ones(3))
    with pytest.raises(ValueError):
        smooth_eval(HalfSquaredNormOfSubblock(0, 4), np.ones(3))
    with pytest.raises(ValueError):
        Quadratic(np.array([[1.0, 0.0], [0.0, -1.0]]))


def _smooth_terms(rng):
    G = rng.standard_normal((4, 4))
    A = rng.standard_normal((6, 4))
    return [
        Quadratic(G @ G.T, rng.standard_normal(4), 1.5),
        LeastSquares(A, rng.standard_normal(6)),
        HalfSquaredNormOfSubblock(1, 3),
        ZeroSmooth(),
    ]


def test_gradient_finite_differences(rng):
    for f in _smooth_terms(rng):
        for _ in range(100):
            x = rng.standard_normal(4)
            _, g = smooth_eval(f, x)
            h = 1e-6
            fd = np.array([(smooth_eval(f, x + h * e)[0] - smooth_eval(f, x - h * e)[0]) / (2 * h)
                           for e in np.eye(4)])
            assert np.linalg.norm(fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))


def test_lipschitz_constants(rng):
    for f in _smooth_terms(rng):
        L = f.lipschitz
        for _ in range(200):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            gx, gy = smooth_eval(f, x)[1], smooth_eval(f, y)[1]
            assert np.linalg.norm(gx - gy) <= L * np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12


def test_least_squares_value():
    f = LeastSquares(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1.0, 1.0]))
    val, g = smooth_eval(f, np.array([1.0, 1.0]))
    assert val == pytest.approx(0.5) and np.allclose(g, [0.0, 2.0])
    assert f.lipschitz == pytest.approx(4.0)


def test_compiled_quadratic_stacks_blocks(rng):
    fs = _smooth_terms(rng)[:3]
    cq = CompiledQuadratic([(0, 4, fs[0]), (4, 4, fs[1]), (8, 4, fs[2])], 12)
    x = rng.standard_normal(12)
    val = sum(smooth_eval(f, x[4 * i:4 * i + 4])[0] for i, f in enumerate(fs))
    grad = np.concatenate([smooth_eval(f, x[4 * i:4 * i + 4])[1] for i, f in enumerate(fs)])
    assert cq.value(x) == pytest.approx(val, rel=1e-12)
    assert np.allclose(cq.grad(x), grad, rtol=1e-12, atol=1e-12)
