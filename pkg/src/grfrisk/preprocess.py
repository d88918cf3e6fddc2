"""Rebalancing, standardization and univariate/multicollinearity feature screening."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.stats import rankdata

VIF_CAP = 1e12
EXACT_MWU_MAX_N = 12


# --------------------------------------------------------------------------
# SMOTE
# --------------------------------------------------------------------------

def smote_interpolate(x, x_n, w: float) -> np.ndarray:
    """Point ``x + w (x_n - x)``, exact at both ends and clamped to the segment's box."""
    x = np.asarray(x, dtype=np.float64)
    x_n = np.asarray(x_n, dtype=np.float64)
    if w == 0.0:
        return x.copy()
    if w == 1.0:
        return x_n.copy()
    out = x + w * (x_n - x)
    return np.clip(out, np.minimum(x, x_n), np.maximum(x, x_n))


def _neighbor_table(X: np.ndarray, k: int) -> np.ndarray:
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    # stable sort: equal distances resolve to the lower row index
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote_pairs(minority_rows, k_neighbors: int, n_synthetic: int, seed: int = 0):
    """Draw SMOTE interpolation recipes.

    Base rows are taken round-robin; each gets a uniformly chosen neighbour
    among its ``k_neighbors`` nearest minority rows and a weight ``w ~ U[0, 1)``.
    Returns ``(base, neighbour, w)`` arrays of length ``n_synthetic``.
    """
    X = np.asarray(minority_rows, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("SMOTE requires >=2 minority samples")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if n_synthetic < 0:
        raise ValueError("n_synthetic must be >= 0")
    k = min(k_neighbors, len(X) - 1)
    table = _neighbor_table(X, k)
    rng = np.random.default_rng(seed)
    base = np.arange(n_synthetic) % len(X)
    pick = rng.integers(0, k, size=n_synthetic)
    w = rng.random(n_synthetic)
    return base, table[base, pick], w


def smote(minority_rows, k_neighbors: int = 5, n_synthetic: int = 0, seed: int = 0) -> np.ndarray:
    X = np.asarray(minority_rows, dtype=np.float64)
    base, nbr, w = smote_pairs(X, k_neighbors, n_synthetic, seed)
    return apply_pairs(X, base, nbr, w)


def apply_pairs(X, base, nbr, w) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    out = np.empty((len(base), X.shape[1]))
    for r, (i, j, wr) in enumerate(zip(base, nbr, w)):
        out[r] = smote_interpolate(X[i], X[j], float(wr))
    return out


def oversample_to_parity(X, y, coords=None, k_neighbors: int = 5, seed: int = 0,
                         coord_mode: Literal["base", "interpolate"] = "base"):
    """Append synthetic minority rows until both classes are equally frequent.

    Synthetic rows take the coordinates of the minority row they were grown
    from (``coord_mode="base"``) or are interpolated with the same neighbour and
    weight as the features (``"interpolate"``). Returns ``(X, y, coords)`` with
    the original rows first.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n1 = int(np.count_nonzero(y == 1))
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0 or n0 == n1:
        return X, y, coords
    minority = 1 if n1 < n0 else 0
    rows = np.flatnonzero(y == minority)
    base, nbr, w = smote_pairs(X[rows], k_neighbors, abs(n0 - n1), seed)
    Xs = apply_pairs(X[rows], base, nbr, w)
    X_out = np.vstack([X, Xs])
    y_out = np.concatenate([y, np.full(len(Xs), minority, dtype=y.dtype)])
    if coords is None:
        return X_out, y_out, None
    C = np.asarray(coords, dtype=np.float64)
    if coord_mode == "base":
        Cs = C[rows][base]
    elif coord_mode == "interpolate":
        Cs = apply_pairs(C[rows], base, nbr, w)
    else:
        raise ValueError(f"unknown coord_mode {coord_mode!r}")
    return X_out, y_out, np.vstack([C, Cs])


# --------------------------------------------------------------------------
# z-scores
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnStats:
    """Per-column mean and population SD; ``constant`` columns standardize to 0."""

    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.mean):
            raise ValueError("column count does not match the fitted statistics")
        safe = np.where(self.constant, 1.0, self.sd)
        Z = (X - self.mean) / safe
        Z[..., self.constant] = 0.0
        return Z

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["sd"], dtype=np.float64),
                   np.asarray(d["constant"], dtype=bool))


def zscore_fit(X) -> ColumnStats:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("z-score fitting needs a 2-D matrix with at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains NaN or Inf")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    return ColumnStats(mean, sd, constant)


def zscore_fit_apply(X) -> tuple[np.ndarray, ColumnStats]:
    stats = zscore_fit(X)
    return stats.apply(X), stats


# --------------------------------------------------------------------------
# Mann-Whitney U
# --------------------------------------------------------------------------

GreaterIn = Literal["a", "b", "none"]


@dataclass(frozen=True)
class MWUResult:
    u: float
    p_two_sided: float
    greater_in: GreaterIn
    exact: bool


def _u_distribution(n_a: int, n_b: int) -> np.ndarray:
    """Number of rank arrangements giving each U value, ``U = 0 .. n_a * n_b``."""
    # f[m][n] is the count vector for sample sizes (m, n)
    f = [[None] * (n_b + 1) for _ in range(n_a + 1)]
    for m in range(n_a + 1):
        for n in range(n_b + 1):
            if m == 0 or n == 0:
                vec = np.zeros(m * n + 1, dtype=object)
                vec[0] = 1
            else:
                vec = np.zeros(m * n + 1, dtype=object)
                # the largest observation belongs to sample a (adds n to U) or to b
                a_top = f[m - 1][n]
                vec[n:n + len(a_top)] += a_top
                b_top = f[m][n - 1]
                vec[:len(b_top)] += b_top
            f[m][n] = vec
    return f[n_a][n_b]


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> MWUResult:
    """Two-sided Mann-Whitney U test; ``u`` is the statistic of ``sample_a``.

    Exact p-values for tie-free data with ``n_a + n_b <= 12``, otherwise the
    normal approximation with tie and continuity corrections.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("Mann-Whitney U needs two non-empty samples")
    n_a, n_b = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    r_a = ranks[:n_a].sum()
    u_a = r_a - n_a * (n_a + 1) / 2.0

    mean_rank_a = r_a / n_a
    mean_rank_b = ranks[n_a:].sum() / n_b
    if abs(mean_rank_a - mean_rank_b) <= 1e-12 * max(1.0, mean_rank_a):
        greater: GreaterIn = "none"
    else:
        greater = "a" if mean_rank_a > mean_rank_b else "b"

    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))
    n = n_a + n_b
    if not has_ties and n <= EXACT_MWU_MAX_N:
        dist = _u_distribution(n_a, n_b)
        total = sum(dist)
        k = int(round(u_a))
        lower = sum(dist[: k + 1])
        upper = sum(dist[k:])
        p = min(1.0, 2.0 * min(lower, upper) / total)
        return MWUResult(float(u_a), float(p), greater, True)

    mu = n_a * n_b / 2.0
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return MWUResult(float(u_a), 1.0, greater, False)
    z = max(abs(u_a - mu) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return MWUResult(float(u_a), float(p), greater, False)


# --------------------------------------------------------------------------
# VIF
# --------------------------------------------------------------------------

def vif(X) -> np.ndarray:
    """Variance inflation factor of every column, ``1 / (1 - R^2)``.

    ``R^2`` comes from least squares of the column on all others plus an
    intercept; perfect collinearity (or a constant column) maps to ``VIF_CAP``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("VIF needs >=2 features")
    n, p = X.shape
    out = np.empty(p)
    ones = np.ones((n, 1))
    for j in range(p):
        target = X[:, j]
        centered = target - target.mean()
        ss_tot = float(centered @ centered)
        if ss_tot <= 1e-24 * max(1.0, float(target @ target)):
            out[j] = VIF_CAP
            continue
        A = np.hstack([ones, np.delete(X, j, axis=1)])
        coef, *_ = np.linalg.lstsq(A, target, rcond=None)
        resid = target - A @ coef
        ss_res = float(resid @ resid)
        tolerance = ss_res / ss_tot
        if tolerance <= 1.0 / VIF_CAP:
            out[j] = VIF_CAP
        else:
            out[j] = max(1.0, 1.0 / tolerance)
    return out


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------

def is_selected(p_value: float, vif_value: float, p_max: float = 0.2, vif_max: float = 10.0) -> bool:
    return vif_value < vif_max or p_value < p_max


@dataclass(frozen=True)
class SelectionRow:
    feature: str
    greater_in: Literal["high", "low", "none"]
    u_statistic: float
    p_value: float
    vif: float
    selected: bool


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple[SelectionRow, ...]
    p_max: float
    vif_max: float

    @property
    def selected(self) -> list[str]:
        return [r.feature for r in self.rows if r.selected]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "greater_in", "U", "p", "VIF", "selected"])
            for r in self.rows:
                w.writerow([r.feature, r.greater_in, repr(r.u_statistic), repr(r.p_value),
                            repr(r.vif), int(r.selected)])

    @classmethod
    def from_csv(cls, path, p_max: float = 0.2, vif_max: float = 10.0) -> "SelectionReport":
        with open(path, newline="") as fh:
            rows = tuple(
                SelectionRow(d["feature"], d["greater_in"], float(d["U"]), float(d["p"]),
                             float(d["VIF"]), bool(int(d["selected"])))
                for d in csv.DictReader(fh)
            )
        return cls(rows, p_max, vif_max)


def select_features(
    features: Iterable[tuple[str, float, float, float, str]] | Iterable[dict],
    p_max: float = 0.2,
    vif_max: float = 10.0,
) -> SelectionReport:
    """Apply ``VIF < vif_max or p < p_max`` to per-feature statistics.

    Each input item is ``(name, u, p, vif, greater_in)`` or a mapping with those
    keys; output rows keep the input order.
    """
    rows = []
    for item in features:
        if isinstance(item, dict):
            name, u, p, v = item["feature"], item["u"], item["p"], item["vif"]
            greater = item.get("greater_in", "none")
        else:
            name, u, p, v, greater = item
        rows.append(SelectionRow(name, greater, float(u), float(p), float(v),
                                 is_selected(float(p), float(v), p_max, vif_max)))
    return SelectionReport(tuple(rows), p_max, vif_max)


def screen_features(X, y, names: Sequence[str], p_max: float = 0.2, vif_max: float = 10.0) -> SelectionReport:
    """MWU (high-severity sample vs low) and VIF for every column, then select."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[1] != len(names):
        raise ValueError("one name per column required")
    high, low = X[y == 1], X[y == 0]
    if len(high) == 0 or len(low) == 0:
        raise ValueError("feature screening needs both severity classes")
    v = vif(X) if X.shape[1] >= 2 else np.ones(X.shape[1])
    items = []
    for j, name in enumerate(names):
        res = mann_whitney_u(high[:, j], low[:, j])
        greater = {"a": "high", "b": "low", "none": "none"}[res.greater_in]
        items.append((name, res.u, res.p_two_sided, v[j], greater))
    return select_features(items, p_max, vif_max)
