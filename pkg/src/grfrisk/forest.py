"""Binary classification trees and bootstrap forests emitting class-1 probability."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import _kernels

__all__ = [
    "ForestParams",
    "Leaf",
    "Split",
    "TreeNode",
    "SplitCandidate",
    "Forest",
    "gini_impurity",
    "best_split",
    "fit_forest",
    "predict_proba",
    "feature_importance",
    "oob_proba",
]

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters.

    ``mtry=None`` resolves to ``ceil(sqrt(p))`` at fit time and
    ``max_depth=None`` grows trees until leaves are pure or ``min_leaf`` stops them.
    """

    b_trees: int = 100
    mtry: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.b_trees < 1:
            raise ValueError("b_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if not 0 <= self.seed <= _U64_MAX:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def resolve_mtry(self, n_features: int) -> int:
        if self.mtry is None:
            return max(1, math.ceil(math.sqrt(n_features)))
        if self.mtry > n_features:
            raise ValueError(f"mtry={self.mtry} exceeds feature count {n_features}")
        return self.mtry

    def to_dict(self) -> dict:
        return {
            "b_trees": self.b_trees,
            "mtry": self.mtry,
            "min_leaf": self.min_leaf,
            "max_depth": self.max_depth,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**{k: d[k] for k in ("b_trees", "mtry", "min_leaf", "max_depth", "seed") if k in d})


@dataclass(frozen=True)
class Leaf:
    class1_fraction: float
    sample_count: int


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    impurity_decrease: float


def gini_impurity(labels: Sequence[int]) -> float:
    """Gini impurity ``1 - p0**2 - p1**2`` of a binary label set."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty node")
    p1 = float(np.count_nonzero(labels)) / labels.size
    p0 = 1.0 - p1
    return 1.0 - p0 * p0 - p1 * p1


def _as_xy(X, y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or Inf")
    if y is None:
        return X
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError("y must be 1-dimensional with one label per row")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return X, y.astype(np.int64)


def best_split(X, y, candidate_features: Sequence[int], min_leaf: int = 1) -> SplitCandidate | None:
    """Best Gini split of the rows over ``candidate_features``, or ``None``.

    Thresholds are midpoints between consecutive distinct values; rows with
    ``x <= threshold`` go left. Equal decreases resolve to the lowest feature
    index, then the lowest threshold.
    """
    X, y = _as_xy(X, y)
    if X.shape[0] < 2:
        raise ValueError("best_split needs at least 2 rows")
    features = np.asarray(candidate_features, dtype=np.int64)
    if features.size and (features.min() < 0 or features.max() >= X.shape[1]):
        raise ValueError("candidate feature index out of range")
    idx = np.arange(X.shape[0], dtype=np.int64)
    f, t, g = _kernels.best_split_kernel(X, y, idx, features, int(min_leaf))
    if f < 0:
        return None
    return SplitCandidate(int(f), float(t), float(g))


@dataclass(frozen=True, eq=False)
class Forest:
    """Trained ensemble stored as flat node arrays.

    Node ``k`` of tree ``b`` lives at ``offsets[b] + k``; children indices are
    tree-local. ``gain`` holds the count-weighted impurity decrease of each
    split (zero at leaves). ``inbag`` counts how often each training row was
    drawn for each tree.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    gain: np.ndarray
    offsets: np.ndarray
    feature_count: int
    params: ForestParams
    inbag: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_nodes(self) -> int:
        return int(self.offsets[-1])

    @property
    def oob_indices(self) -> list[np.ndarray]:
        if self.inbag is None:
            raise AttributeError("out-of-bag bookkeeping not available (forest was loaded or built by hand)")
        return [np.flatnonzero(row == 0) for row in self.inbag]

    def _check_dim(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Mean leaf class-1 fraction over trees, one value per row."""
        X = self._check_dim(X)
        return _kernels.predict_kernel(
            self.feature, self.threshold, self.left, self.right, self.value, self.offsets, X
        )

    def tree_outputs(self, x) -> np.ndarray:
        """Per-tree leaf values for a single feature vector."""
        x = self._check_dim(x)[0]
        return _kernels.tree_outputs_kernel(
            self.feature, self.threshold, self.left, self.right, self.value, self.offsets, x
        )

    def tree(self, b: int) -> TreeNode:
        base = int(self.offsets[b])

        def build(k: int) -> TreeNode:
            i = base + k
            if self.feature[i] < 0:
                return Leaf(float(self.value[i]), int(self.count[i]))
            return Split(int(self.feature[i]), float(self.threshold[i]),
                         build(int(self.left[i])), build(int(self.right[i])))

        return build(0)

    @classmethod
    def from_trees(cls, trees: Sequence[TreeNode], feature_count: int,
                   params: ForestParams | None = None) -> "Forest":
        """Assemble a forest from explicit node trees (no training data attached)."""
        rows: list[list] = []  # feature, threshold, left, right, value, count
        offsets = [0]

        def emit(node: TreeNode) -> int:
            me = len(rows) - offsets[-1]
            if isinstance(node, Leaf):
                if not 0.0 <= node.class1_fraction <= 1.0:
                    raise ValueError("leaf class1_fraction outside [0, 1]")
                rows.append([-1, 0.0, -1, -1, node.class1_fraction, node.sample_count])
                return me
            if not 0 <= node.feature_index < feature_count:
                raise ValueError("feature_index out of range")
            slot = [node.feature_index, node.threshold, -1, -1, 0.0, 0]
            rows.append(slot)
            slot[2] = emit(node.left)
            slot[3] = emit(node.right)
            return me

        for root in trees:
            emit(root)
            offsets.append(len(rows))

        cols = list(zip(*rows))
        return cls(
            feature=np.asarray(cols[0], dtype=np.int32),
            threshold=np.asarray(cols[1], dtype=np.float64),
            left=np.asarray(cols[2], dtype=np.int32),
            right=np.asarray(cols[3], dtype=np.int32),
            value=np.asarray(cols[4], dtype=np.float64),
            count=np.asarray(cols[5], dtype=np.int32),
            gain=np.zeros(len(rows), dtype=np.float64),
            offsets=np.asarray(offsets, dtype=np.int64),
            feature_count=feature_count,
            params=params or ForestParams(b_trees=len(trees)),
        )

    def to_dict(self) -> dict:
        return {
            "feature_count": self.feature_count,
            "params": self.params.to_dict(),
            "offsets": self.offsets.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "count": self.count.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        forest = cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            count=np.asarray(d["count"], dtype=np.int32),
            gain=np.asarray(d["gain"], dtype=np.float64),
            offsets=np.asarray(d["offsets"], dtype=np.int64),
            feature_count=int(d["feature_count"]),
            params=ForestParams.from_dict(d["params"]),
        )
        forest.validate()
        return forest

    def validate(self) -> None:
        """Raise ``ValueError`` if the node arrays do not describe valid trees."""
        n = self.n_nodes
        if self.n_trees < 1:
            raise ValueError("forest has no trees")
        if np.any(np.diff(self.offsets) < 1) or self.offsets[0] != 0:
            raise ValueError("malformed tree offsets")
        arrays = (self.feature, self.threshold, self.left, self.right, self.value, self.count, self.gain)
        if any(len(a) != n for a in arrays):
            raise ValueError("node arrays have inconsistent lengths")
        if np.any(self.feature >= self.feature_count) or np.any(self.feature < -1):
            raise ValueError("feature index out of range")
        if np.any((self.value < 0) | (self.value > 1)) or not np.all(np.isfinite(self.threshold)):
            raise ValueError("invalid leaf value or threshold")
        sizes = np.repeat(np.diff(self.offsets), np.diff(self.offsets))
        internal = self.feature >= 0
        for child in (self.left, self.right):
            c = child[internal]
            if np.any(c <= 0) or np.any(c >= sizes[internal]):
                raise ValueError("child index out of range")
        if np.any(self.left[~internal] != -1) or np.any(self.right[~internal] != -1):
            raise ValueError("leaf with children")


def fit_forest(X, y, params: ForestParams = ForestParams(), seed: int | None = None,
               rows=None) -> Forest:
    """Fit a bootstrap forest on ``X[rows]`` (all rows by default).

    Each tree sees ``len(rows)`` draws with replacement; its seed is derived
    from ``(seed, tree index)`` so results do not depend on fitting order.
    ``inbag`` and ``oob_indices`` are positions into ``rows``.
    """
    X, y = _as_xy(X, y)
    rows = np.arange(X.shape[0], dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot fit a forest on zero samples")
    seed = params.seed if seed is None else seed
    if not 0 <= seed <= _U64_MAX:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    mtry = params.resolve_mtry(X.shape[1])
    max_depth = -1 if params.max_depth is None else params.max_depth
    feat, thr, left, right, value, count, gain, offsets, inbag = _kernels.fit_forest_kernel(
        X, y, rows, params.b_trees, mtry, params.min_leaf, max_depth, np.uint64(seed)
    )
    return Forest(feat, thr, left, right, value, count, gain, offsets, X.shape[1], params, inbag)


def predict_proba(forest: Forest, x) -> float:
    """Class-1 probability of a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict_proba expects a single feature vector; use Forest.predict_proba for batches")
    return float(forest.predict_proba(x)[0])


def feature_importance(forest: Forest) -> np.ndarray:
    """Gini importance: node-fraction-weighted impurity decrease per feature, summing to 1.

    A forest made only of leaves yields an all-zero vector.
    """
    raw = _kernels.importance_kernel(forest.feature, forest.count, forest.gain, forest.offsets,
                                     forest.feature_count)
    total = raw.sum()
    if total <= 0:
        return np.zeros(forest.feature_count)
    return raw / total


def oob_proba(forest: Forest, X_rows) -> np.ndarray:
    """Out-of-bag class-1 probability for each training row (NaN if never out of bag).

    ``X_rows`` must be the feature rows the forest was fitted on, in fitting order.
    """
    if forest.inbag is None:
        raise ValueError("forest carries no in-bag bookkeeping")
    X = forest._check_dim(X_rows)
    if X.shape[0] != forest.inbag.shape[1]:
        raise ValueError("X_rows must match the forest's training rows")
    return _kernels.oob_kernel(forest.feature, forest.threshold, forest.left, forest.right,
                               forest.value, forest.offsets, X, forest.inbag)
