import csv
import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from grfrisk.evaluation import (
    ConfusionMatrix,
    SweepRow,
    annotate_best,
    confusion,
    metrics,
    r_squared,
    stratified_split,
    sweep_localization,
    welch_t,
    write_sweep_csv,
    zone_association_ttest,
)
from grfrisk.forest import ForestParams
from grfrisk.grf import GrfHyperParams, fit_grf


def test_metrics_exhaustive_rational():
    for tp, fp, tn, fn in itertools.product(range(6), repeat=4):
        m = metrics(ConfusionMatrix(tp, fp, tn, fn), exact=True)
        assert m.recall == (Fraction(tp, tp + fn) if tp + fn else None)
        assert m.precision == (Fraction(tp, tp + fp) if tp + fp else None)
        total = tp + fp + tn + fn
        assert m.accuracy == (Fraction(tp + tn, total) if total else None)


def test_confusion_threshold_inclusive():
    cm = confusion([0.5, 0.49, 0.9, 0.1], [1, 1, 0, 0])
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (1, 1, 1, 1)
    m = metrics(confusion([0.0, 0.0], [0, 0]))
    assert m.recall is None and m.precision is None and m.accuracy == 1.0
    assert m.undefined == ("recall", "precision")


def test_r_squared():
    assert r_squared([0, 1, 0, 1], [0, 1, 0, 1]) == 1.0
    assert r_squared([0.5] * 4, [0, 1, 0, 1]) == 0.0
    assert r_squared([0.2, 0.3], [1, 1]) is None


def test_stratified_split():
    y = np.array([1] * 30 + [0] * 120)
    tr, te = stratified_split(y, 0.2, seed=3)
    assert len(te) == 30 and y[te].sum() == 6
    assert set(tr).isdisjoint(te) and len(tr) + len(te) == 150
    tr2, te2 = stratified_split(y, 0.2, seed=3)
    assert np.array_equal(te, te2)


def test_annotations():
    rows = [SweepRow(0.1, None, None, 0.7, 0.5, 0.9), SweepRow(0.5, None, None, 0.8, 0.5, 0.9),
            SweepRow(0.9, None, None, 0.8, 0.5, 0.95)]
    out = annotate_best(rows)
    assert [r.remarks for r in out] == ["", "Best Accuracy", "Best Recall"]
    single = annotate_best([SweepRow(0.3, None, None, None, None, None)])
    assert single[0].remarks == "Best Accuracy; Best Recall"


@pytest.fixture(scope="module")
def sweep_data():
    rng = np.random.default_rng(0)
    n = 150
    C = rng.uniform(0, 1000, size=(n, 2))
    X = rng.normal(size=(n, 3))
    y = ((X[:, 0] + (C[:, 0] > 500) * X[:, 1]) > 0.8).astype(int)
    return X, C, y


def test_sweep_matches_independent_refits(sweep_data, tmp_path):
    X, C, y = sweep_data
    hyper = GrfHyperParams(20, 0.5, ForestParams(b_trees=8))
    a_values = [0.01, 0.16, 0.25, 0.5, 0.75, 0.99]
    res = sweep_localization(X, C, y, hyper, a_values, split_seed=1, seed=5)
    assert [r.a for r in res.rows] == a_values
    tr, te = res.train_idx, res.test_idx
    for a in (0.16, 0.75):
        m = fit_grf(X[tr], C[tr], y[tr], hyper.with_weight(a), seed=5)
        p = m.predict(X[te], C[te])
        assert np.array_equal(p, res.test_predictions[a])
        want = metrics(confusion(p, y[te]))
        row = next(r for r in res.rows if r.a == a)
        assert (row.accuracy, row.recall) == (want.accuracy, want.recall)
    path = tmp_path / "sweep.csv"
    res.to_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    accs = [float(r["accuracy"]) for r in rows]
    best = [i for i, r in enumerate(rows) if "Best Accuracy" in r["remarks"]]
    assert best == [int(np.argmax(accs))]
    assert rows[0]["global_pct"] == "99.000000" and rows[0]["local_pct"] == "1.000000"


def test_sweep_validation(sweep_data):
    X, C, y = sweep_data
    with pytest.raises(ValueError):
        sweep_localization(X, C, y, GrfHyperParams(5), [1.2])
    with pytest.raises(ValueError):
        sweep_localization(X, C, y, GrfHyperParams(5), [])


def test_welch_matches_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 40), rng.normal(0.4, 2, 25)
    t, p = welch_t(a, b)
    want = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(want.statistic, rel=1e-12)
    assert p == pytest.approx(want.pvalue, rel=1e-9)


def test_zone_tests():
    rng = np.random.default_rng(2)
    n = 400
    risk = np.r_[np.full(200, 0.8), np.full(200, 0.2)]
    F = rng.normal(size=(n, 2))
    F[:200, 0] += 10
    out = zone_association_ttest(risk, F, ["shift", "same"])
    assert out[0].direction == "positive" and out[0].p < 1e-6
    flipped = zone_association_ttest(1 - risk + 1e-9, F, ["shift", "same"])
    assert flipped[0].t == pytest.approx(-out[0].t)
    assert flipped[0].p == pytest.approx(out[0].p)
    same = zone_association_ttest(risk, np.vstack([F[:200, 1:], F[:200, 1:]]), ["x"])
    assert same[0].t == pytest.approx(0.0) and same[0].p == pytest.approx(1.0)
    lonely = zone_association_ttest(np.array([0.9, 0.1, 0.1]), np.ones((3, 1)), ["c"])
    assert lonely[0].t is None and lonely[0].flag


def test_write_sweep_csv_blank_for_undefined(tmp_path):
    write_sweep_csv([SweepRow(0.5, None, None, 1.0, None, None, "Best Accuracy")], tmp_path / "s.csv")
    line = (tmp_path / "s.csv").read_text().splitlines()[1]
    assert line == "0.5,50.000000,50.000000,,,,1.000000,,,Best Accuracy"
