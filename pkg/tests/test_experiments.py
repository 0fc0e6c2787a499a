import csv
import json

import numpy as np
import pytest

from dpda.experiments import (
    SuiteConfig,
    SvmDataset,
    build_svm_instance,
    evaluate_classifier,
    generate_svm_data,
    run_experiment_suite,
    substream,
)
from dpda.oracle import solve_centralized


@pytest.fixture(scope="module")
def data():
    return generate_svm_data(substream(0, "data"))


def test_sample_counts(data):
    assert data.X.shape == (900, 2) and data.y.shape == (900,)
    assert data.train.size == 300 and data.test.size == 600
    assert np.intersect1d(data.train, data.test).size == 0
    assert set(np.unique(data.y)) == {-1.0, 1.0}


def test_class_balance(data):
    # binomial(300, 1/2): mean 150, sd sqrt(75)
    pos = int(np.sum(data.y[data.train] > 0))
    assert abs(pos - 150) <= 3 * np.sqrt(75)


def test_class_covariance_and_means(data):
    for label, mean in ((1.0, [1.0, 1.0]), (-1.0, [-1.0, -1.0])):
        X = data.X[data.y == label]
        assert np.all(np.abs(np.cov(X.T) - np.diag([1.0, 2.0])) <= 0.2)
        assert np.all(np.abs(X.mean(axis=0) - mean) <= 0.2)


def test_generation_deterministic():
    a, b = generate_svm_data(3), generate_svm_data(3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, generate_svm_data(4).X)


def test_substreams_independent():
    a = substream(0, "graph", 1.0, 0).random(4)
    assert np.array_equal(a, substream(0, "graph", 1.0, 0).random(4))
    assert not np.array_equal(a, substream(0, "graph", 1.0, 1).random(4))
    assert not np.array_equal(a, substream(0, "activation", 1.0, 0).random(4))


def test_partition_covers_train(data):
    parts = data.partition(7)
    joined = np.concatenate(parts)
    assert np.array_equal(np.sort(joined), np.sort(data.train))
    assert max(p.size for p in parts) - min(p.size for p in parts) <= 1


def test_instance_dimensions(data):
    probs = build_svm_instance(data, 10, 10.0)
    assert len(probs) == 10
    for p in probs:
        assert p.A.shape == (30, 33) and p.n_shared == 3 and p.n_local == 30
        assert p.sigma_max >= np.linalg.norm(p.A.toarray(), 2) * (1 - 1e-12)
        assert p.lipschitz == 1.0
    with pytest.raises(ValueError):
        build_svm_instance(data, 10, 0.0)


def test_slack_prox(data):
    p = build_svm_instance(data, 10, 10.0)[0]
    v = np.linspace(-200.0, 200.0, p.dim)
    out = p.rho.prox(v, 0.5)
    assert np.array_equal(out[:3], v[:3])
    assert np.allclose(out[3:], np.maximum(0.0, v[3:] - 0.5 * 10 * 10.0), rtol=0, atol=1e-12)


def test_single_node_is_hinge_svm(data):
    C = 10.0
    sol1 = solve_centralized(build_svm_instance(data, 1, C))
    w, b = sol1.x[0][:2], sol1.x[0][2]
    Xt, yt = data.X[data.train], data.y[data.train]
    hinge = 0.5 * w @ w + C * np.sum(np.maximum(0.0, 1.0 - yt * (Xt @ w + b)))
    assert sol1.phi_star == pytest.approx(hinge, rel=1e-8)
    # the N-node objective is N times the single-node one under consensus
    sol10 = solve_centralized(build_svm_instance(data, 10, C))
    assert np.allclose(sol10.x[0][:3], sol1.x[0][:3], atol=1e-6)
    assert sol10.phi_star == pytest.approx(10 * sol1.phi_star, rel=1e-7)


def test_classifier_examples():
    X = np.array([[-2.0, 0.0], [-1.0, 1.0], [1.0, -1.0], [2.0, 0.5]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    ds = SvmDataset(X, y, np.arange(2), np.arange(4))
    assert evaluate_classifier([1.0, 0.0], 0.0, ds, "test") == 0.0
    assert evaluate_classifier([0.0, 0.0], 1.0, ds, "test") == 0.5
    assert evaluate_classifier([0.0, 0.0], 1.0, ds, "train") == 1.0
    with pytest.raises(ValueError):
        evaluate_classifier([1.0, 0.0], 0.0, ds, "val")


def _small(tmp_path=None):
    return SuiteConfig(seed=1, N=3, C_values=(2.0,), lambda2_values=(1.0, 3.0), replications=2,
                       K_static=300, K_dynamic=100, per_decade=3,
                       out_dir=None if tmp_path is None else str(tmp_path))


def test_small_suite(tmp_path):
    res = run_experiment_suite(_small(tmp_path))
    runs = res["runs"]
    assert len(runs) == 1 * 2 * 2 * 2
    assert all("error" not in r for r in runs)
    assert all(r["lambda2"] == pytest.approx(3.0) for r in runs if r["lambda2_target"] == 3.0)
    # averaged curve is the pointwise mean of the replications
    key = "C=2,lambda2=1,static"
    reps = [r for r in runs if r["lambda2_target"] == 1.0 and r["topology"] == "static"]
    want = np.mean([[row["subopt"] for row in r["rows"]] for r in reps], axis=0)
    assert np.allclose(res["curves"][key]["subopt"], want, rtol=0, atol=0)
    assert res["curves"][key]["k"][-1] == 300
    dyn = [r for r in runs if r["topology"] == "dynamic"]
    assert all(r["comms"] == sum(int(np.ceil(np.sqrt(k))) for k in range(1, 101)) for r in dyn)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert "suite.json" in files and "boundaries.csv" in files
    assert sum(f.startswith("run_") for f in files) == 8
    suite = json.loads((tmp_path / "suite.json").read_text())
    assert len(suite["runs"]) == 8 and "rows" not in suite["runs"][0]
    with open(tmp_path / "boundaries.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "C", "node", "wx", "wy", "b"]
    methods = {r[0] for r in rows[1:]}
    assert "centralized" in methods and "local" in methods
    assert sum(r[0] == "local" for r in rows[1:]) == 3


def test_suite_deterministic():
    a, b = run_experiment_suite(_small()), run_experiment_suite(_small())
    for ra, rb in zip(a["runs"], b["runs"]):
        assert np.array_equal(ra["w"], rb["w"]) and ra["b"] == rb["b"]
        assert [r["subopt"] for r in ra["rows"]] == [r["subopt"] for r in rb["rows"]]
