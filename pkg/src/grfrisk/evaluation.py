"""Classification metrics, localization-weight sweeps and zone association tests."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .grf import GrfHyperParams, GrfModel, blend, fit_grf
from .forest import oob_proba


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    """``None`` marks a metric whose denominator is zero."""

    recall: float | None
    precision: float | None
    accuracy: float | None

    @property
    def undefined(self) -> tuple[str, ...]:
        return tuple(k for k in ("recall", "precision", "accuracy") if getattr(self, k) is None)


def confusion(predictions, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Tally outcomes with ``prediction >= threshold`` as class 1."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError("predictions and labels differ in length")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    hat = p >= threshold
    pos = y == 1
    return ConfusionMatrix(
        tp=int(np.count_nonzero(hat & pos)),
        fp=int(np.count_nonzero(hat & ~pos)),
        tn=int(np.count_nonzero(~hat & ~pos)),
        fn=int(np.count_nonzero(~hat & pos)),
    )


def _ratio(num: int, den: int, exact: bool):
    if den == 0:
        return None
    return Fraction(num, den) if exact else num / den


def metrics(cm: ConfusionMatrix, exact: bool = False) -> Metrics:
    """Recall, precision and accuracy; ``exact=True`` returns :class:`fractions.Fraction`."""
    return Metrics(
        recall=_ratio(cm.tp, cm.tp + cm.fn, exact),
        precision=_ratio(cm.tp, cm.tp + cm.fp, exact),
        accuracy=_ratio(cm.tp + cm.tn, cm.total, exact),
    )


def r_squared(predictions, labels) -> float | None:
    """``1 - SS_res / SS_tot``; ``None`` when the labels have no variance."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("predictions and labels differ in length")
    if len(y) < 2:
        return None
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return None
    return 1.0 - float(((y - p) ** 2).sum()) / ss_tot


# --------------------------------------------------------------------------
# train/test split and the localization sweep
# --------------------------------------------------------------------------

def stratified_split(y, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class split; returns sorted ``(train_idx, test_idx)``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    test = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        n_test = int(round(test_fraction * len(idx)))
        test.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test)).astype(np.int64)
    train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
    return train_idx, test_idx


@dataclass(frozen=True)
class SweepRow:
    a: float
    r2: float | None
    r2_global: float | None
    accuracy: float | None
    precision: float | None
    recall: float | None
    remarks: str = ""

    @property
    def global_pct(self) -> float:
        return round(100 * (1 - self.a), 6)

    @property
    def local_pct(self) -> float:
        return round(100 * self.a, 6)


@dataclass
class SweepResult:
    rows: list[SweepRow]
    model: GrfModel
    train_idx: np.ndarray
    test_idx: np.ndarray
    oob_r2_global: float | None = None
    test_predictions: dict[float, np.ndarray] = field(default_factory=dict, repr=False)

    def to_csv(self, path) -> None:
        write_sweep_csv(self.rows, path, self.oob_r2_global)


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def write_sweep_csv(rows: Sequence[SweepRow], path, oob_r2_global: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "global_pct", "local_pct", "r2", "r2_global", "r2_global_oob",
                    "accuracy", "precision", "recall", "remarks"])
        for r in rows:
            w.writerow([repr(r.a), _fmt(r.global_pct), _fmt(r.local_pct), _fmt(r.r2), _fmt(r.r2_global),
                        _fmt(oob_r2_global), _fmt(r.accuracy), _fmt(r.precision), _fmt(r.recall), r.remarks])


def annotate_best(rows: Sequence[SweepRow]) -> list[SweepRow]:
    """Mark the best-accuracy and best-recall rows (ties go to the lower ``a``)."""
    rows = list(rows)
    if not rows:
        return rows

    def best(metric: str) -> int:
        order = sorted(range(len(rows)), key=lambda i: (rows[i].a, i))
        best_i, best_v = None, -math.inf
        for i in order:
            v = getattr(rows[i], metric)
            v = -math.inf if v is None else v
            if best_i is None or v > best_v:
                best_i, best_v = i, v
        return best_i

    tags = {i: [] for i in range(len(rows))}
    tags[best("accuracy")].append("Best Accuracy")
    tags[best("recall")].append("Best Recall")
    return [
        SweepRow(r.a, r.r2, r.r2_global, r.accuracy, r.precision, r.recall, "; ".join(tags[i]))
        for i, r in enumerate(rows)
    ]


def sweep_localization(
    X,
    coords,
    y,
    hyper_base: GrfHyperParams,
    a_values: Sequence[float],
    split_seed: int = 0,
    test_fraction: float = 0.2,
    prepare: Callable | None = None,
    seed: int | None = None,
    threshold: float = 0.5,
) -> SweepResult:
    """Evaluate one fitted GRF at every localization weight on a fixed split.

    The model does not depend on ``a``, so a single fit (one global forest,
    one set of local forests) serves every row; this is identical to refitting
    per ``a`` with a shared seed. ``prepare(X_train, coords_train, y_train)``
    may rebalance/standardize the training rows and must return
    ``(X_fit, coords_fit, y_fit, transform)`` where ``transform`` maps raw test
    rows into the fitted feature space.
    """
    a_values = [float(a) for a in a_values]
    if not a_values:
        raise ValueError("a_values must be non-empty")
    if any(not 0.0 <= a <= 1.0 for a in a_values):
        raise ValueError("every a must lie in [0, 1]")
    X = np.asarray(X, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    y = np.asarray(y)
    train_idx, test_idx = stratified_split(y, test_fraction, split_seed)

    if prepare is None:
        X_fit, c_fit, y_fit = X[train_idx], coords[train_idx], y[train_idx]
        X_test = X[test_idx]
    else:
        X_fit, c_fit, y_fit, transform = prepare(X[train_idx], coords[train_idx], y[train_idx])
        X_test = transform(X[test_idx])

    model = fit_grf(X_fit, c_fit, y_fit, hyper_base, seed=seed)
    local, glob, _ = model.components(X_test, coords[test_idx])
    y_test = y[test_idx]
    oob = oob_proba(model.global_forest, X_fit)
    seen = ~np.isnan(oob)
    oob_r2 = r_squared(oob[seen], y_fit[seen]) if seen.sum() >= 2 else None
    r2_global = r_squared(glob, y_test)

    rows, preds = [], {}
    for a in a_values:
        p = blend(local, glob, a)
        preds[a] = p
        m = metrics(confusion(p, y_test, threshold))
        rows.append(SweepRow(a, r_squared(p, y_test), r2_global, m.accuracy, m.precision, m.recall))
    return SweepResult(annotate_best(rows), model, train_idx, test_idx, oob_r2, preds)


# --------------------------------------------------------------------------
# direction of association between predicted risk zones
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ZoneTest:
    feature: str
    t: float | None
    p: float | None
    direction: str
    mean_high: float | None
    mean_low: float | None
    flag: str = ""


def welch_t(a, b) -> tuple[float, float] | None:
    """Welch statistic and two-sided p; ``None`` if both variances vanish."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    se2 = va / na + vb / nb
    diff = a.mean() - b.mean()
    if se2 <= 0:
        if diff == 0:
            return 0.0, 1.0
        return None
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(t), float(min(1.0, p))


def zone_association_ttest(risk, features, names: Sequence[str], risk_threshold: float = 0.5) -> list[ZoneTest]:
    """Per-feature Welch test between cells with ``risk >= threshold`` and the rest.

    ``direction`` is the sign of (high-zone mean - low-zone mean).
    """
    risk = np.asarray(risk, dtype=np.float64)
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != len(risk) or F.shape[1] != len(names):
        raise ValueError("features must be (cells, len(names))")
    high = risk >= risk_threshold
    out = []
    for j, name in enumerate(names):
        a, b = F[high, j], F[~high, j]
        if len(a) < 2 or len(b) < 2:
            out.append(ZoneTest(name, None, None, "none",
                                float(a.mean()) if len(a) else None,
                                float(b.mean()) if len(b) else None,
                                "zone has fewer than 2 cells"))
            continue
        res = welch_t(a, b)
        diff = a.mean() - b.mean()
        direction = "positive" if diff > 0 else "negative" if diff < 0 else "none"
        if res is None:
            out.append(ZoneTest(name, None, None, direction, float(a.mean()), float(b.mean()),
                                "zero variance in both zones"))
        else:
            out.append(ZoneTest(name, res[0], res[1], direction, float(a.mean()), float(b.mean())))
    return out
