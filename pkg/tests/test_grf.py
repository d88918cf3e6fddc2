import json
import warnings

import numpy as np
import pytest

from grfrisk.forest import ForestParams, fit_forest
from grfrisk.grf import GrfHyperParams, GrfModel, blend, fit_grf, local_seed, predict_grf
from grfrisk.spatial import SpatialIndex


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(0)
    n = 80
    coords = rng.uniform(0, 1000, size=(n, 2))
    X = rng.normal(size=(n, 4))
    y = ((X[:, 0] > 0) ^ (coords[:, 0] > 500)).astype(int)
    hyper = GrfHyperParams(15, 0.5, ForestParams(b_trees=10))
    return X, coords, y, hyper, fit_grf(X, coords, y, hyper, seed=7)


def test_kernels_are_nearest_rows_including_anchor(fitted):
    X, coords, y, hyper, model = fitted
    for i in range(len(X)):
        d = np.hypot(*(coords - coords[i]).T)
        want = np.sort(np.lexsort((np.arange(len(d)), d))[: hyper.bandwidth_n])
        assert np.array_equal(model.kernels[i], want)
        assert i in model.kernels[i]


def test_local_forests_match_independent_fits(fitted):
    X, coords, y, hyper, model = fitted
    for i in (0, 17, 79):
        f = fit_forest(X, y, hyper.forest_params, seed=local_seed(7, i), rows=model.kernels[i])
        assert np.array_equal(f.predict_proba(X), model.local_forests[i].predict_proba(X))


def test_degenerate_weights(fitted):
    X, coords, y, hyper, model = fitted
    rng = np.random.default_rng(1)
    Q, C = rng.normal(size=(50, 4)), rng.uniform(0, 1000, size=(50, 2))
    assert np.array_equal(model.predict(Q, C, a=0.0), model.global_forest.predict_proba(Q))
    nearest = SpatialIndex(coords).nearest(C)
    want = np.array([model.local_forests[j].predict_proba(Q[i])[0] for i, j in enumerate(nearest)])
    assert np.array_equal(model.predict(Q, C, a=1.0), want)


def test_blend_linearity(fitted):
    X, coords, y, hyper, model = fitted
    rng = np.random.default_rng(2)
    Q, C = rng.normal(size=(30, 4)), rng.uniform(0, 1000, size=(30, 2))
    p0, p1 = model.predict(Q, C, a=0.0), model.predict(Q, C, a=1.0)
    for a in np.linspace(0.1, 0.9, 9):
        assert np.max(np.abs(model.predict(Q, C, a=a) - (a * p1 + (1 - a) * p0))) <= 1e-12


def test_full_bandwidth_shared_seed_equals_global():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(25, 3))
    C = rng.uniform(size=(25, 2))
    y = (X[:, 0] > 0).astype(int)
    m = fit_grf(X, C, y, GrfHyperParams(25, 0.5, ForestParams(b_trees=6)), seed=4, shared_local_seed=True)
    Q = rng.normal(size=(20, 3))
    g = m.global_forest.predict_proba(Q)
    for f in m.local_forests:
        assert np.array_equal(f.predict_proba(Q), g)
    assert np.array_equal(m.predict(Q, rng.uniform(size=(20, 2)), a=0.37), blend(g, g, 0.37))


def test_clusters_give_disjoint_kernels():
    rng = np.random.default_rng(4)
    A = rng.normal(0, 1, size=(10, 2))
    B = rng.normal(0, 1, size=(10, 2)) + 1e4
    C = np.vstack([A, B])
    X = rng.normal(size=(20, 2))
    y = np.array([0, 1] * 10)
    m = fit_grf(X, C, y, GrfHyperParams(10, 0.5, ForestParams(b_trees=3)), seed=0)
    for i in range(10):
        assert set(m.kernels[i]) == set(range(10))
    for i in range(10, 20):
        assert set(m.kernels[i]) == set(range(10, 20))


def test_locality_trace():
    # label depends on feature sign, flipped between the two halves of space
    rng = np.random.default_rng(5)
    n = 300
    C = rng.uniform(0, 1000, size=(n, 2))
    X = rng.normal(size=(n, 2))
    y = ((X[:, 0] > 0) == (C[:, 0] < 500)).astype(int)
    m = fit_grf(X, C, y, GrfHyperParams(40, 0.5, ForestParams(b_trees=20)), seed=0)
    Q = rng.normal(size=(200, 2))
    Cq = np.column_stack([rng.uniform(50, 400, 100).tolist() + rng.uniform(600, 950, 100).tolist(),
                          rng.uniform(0, 1000, 200)])
    truth = ((Q[:, 0] > 0) == (Cq[:, 0] < 500)).astype(int)
    acc_local = np.mean((m.predict(Q, Cq, a=1.0) >= 0.5) == truth)
    acc_global = np.mean((m.predict(Q, Cq, a=0.0) >= 0.5) == truth)
    assert acc_local > 0.85
    assert acc_local > acc_global + 0.2


def test_bandwidth_validation():
    X = np.zeros((5, 2))
    with pytest.raises(ValueError, match="bandwidth exceeds sample count"):
        fit_grf(X, np.arange(10.0).reshape(5, 2), np.zeros(5, dtype=int), GrfHyperParams(6))
    with pytest.raises(ValueError):
        GrfHyperParams(1)
    with pytest.raises(ValueError):
        GrfHyperParams(5, 1.5)


def test_identical_coordinates_warn():
    X = np.random.default_rng(0).normal(size=(6, 2))
    with pytest.warns(UserWarning, match="identical"):
        fit_grf(X, np.zeros((6, 2)), np.array([0, 1] * 3), GrfHyperParams(3, 0.5, ForestParams(b_trees=2)))


def test_serialization_round_trip(fitted):
    X, coords, y, hyper, model = fitted
    doc = json.loads(json.dumps(model.to_dict()))
    m2 = GrfModel.from_dict(doc)
    Q = X[:20]
    assert np.array_equal(m2.predict(Q, coords[:20]), model.predict(Q, coords[:20]))
    assert m2.feature_names == model.feature_names
    assert predict_grf(m2, Q[0], coords[0]) == model.predict(Q[:1], coords[:1])[0]


def test_deserialization_rejects_inconsistency(fitted):
    model = fitted[4]
    doc = json.loads(json.dumps(model.to_dict()))
    doc["anchors"] = doc["anchors"][:-1]
    with pytest.raises(ValueError, match="one local forest per anchor"):
        GrfModel.from_dict(doc)
    doc = json.loads(json.dumps(model.to_dict()))
    doc["schema_version"] = 99
    with pytest.raises(ValueError, match="schema_version"):
        GrfModel.from_dict(doc)


def test_predict_feature_count_check(fitted):
    model = fitted[4]
    with pytest.raises(ValueError, match="features"):
        model.predict(np.zeros((2, 5)), np.zeros((2, 2)))


def test_mix_k_at_anchor_equals_nearest(fitted):
    X, coords, y, hyper, model = fitted
    a = model.predict(X[:10], coords[:10], a=1.0, mix_k=4)
    b = model.predict(X[:10], coords[:10], a=1.0)
    assert np.array_equal(a, b)


def test_fitting_is_deterministic():
    rng = np.random.default_rng(9)
    X, C = rng.normal(size=(30, 2)), rng.uniform(size=(30, 2))
    y = (X[:, 0] > 0).astype(int)
    h = GrfHyperParams(8, 0.5, ForestParams(b_trees=4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d1 = json.dumps(fit_grf(X, C, y, h, seed=1).to_dict())
        d2 = json.dumps(fit_grf(X, C, y, h, seed=1).to_dict())
    assert d1 == d2
