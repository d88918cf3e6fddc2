"""Geographical random forest: a global forest blended with per-location local forests.

Every training row anchors a local forest fitted on its ``bandwidth_n`` nearest
training rows (itself included). A query at ``(u, v)`` uses the local forest of
the nearest anchor, and the final probability is
``a * local + (1 - a) * global``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .forest import Forest, ForestParams, fit_forest
from .spatial import SpatialIndex, _as_points

log = logging.getLogger(__name__)

MODEL_FORMAT = "grfrisk.grf"
MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GrfHyperParams:
    bandwidth_n: int
    local_weight_a: float = 0.5
    forest_params: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        if self.bandwidth_n < 2:
            raise ValueError("bandwidth_n must be >= 2")
        if not 0.0 <= self.local_weight_a <= 1.0:
            raise ValueError("local_weight_a must lie in [0, 1]")

    def with_weight(self, a: float) -> "GrfHyperParams":
        return GrfHyperParams(self.bandwidth_n, a, self.forest_params)

    def to_dict(self) -> dict:
        return {
            "bandwidth_n": self.bandwidth_n,
            "local_weight_a": self.local_weight_a,
            "forest_params": self.forest_params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GrfHyperParams":
        return cls(int(d["bandwidth_n"]), float(d["local_weight_a"]),
                   ForestParams.from_dict(d.get("forest_params", {})))


def local_seed(master: int, anchor: int) -> int:
    """Seed of the local forest anchored at training row ``anchor``."""
    return int(_kernels.derive_seed(np.uint64(master), anchor + 1))


@dataclass(eq=False)
class GrfModel:
    global_forest: Forest
    anchors: np.ndarray
    local_forests: list[Forest]
    hyper: GrfHyperParams
    feature_names: list[str]
    kernels: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.anchors = _as_points(self.anchors)
        self.index = SpatialIndex(self.anchors)

    @property
    def feature_count(self) -> int:
        return self.global_forest.feature_count

    def _inputs(self, X, coords):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {X.shape[1]}")
        coords = _as_points(coords)
        if len(coords) != len(X):
            raise ValueError("X and coords must have the same number of rows")
        return X, coords

    def components(self, X, coords, mix_k: int = 1):
        """Local prediction, global prediction and nearest-anchor index per row.

        ``mix_k > 1`` replaces the single nearest local forest with an
        inverse-square-distance mix of the ``mix_k`` nearest ones.
        """
        X, coords = self._inputs(X, coords)
        glob = self.global_forest.predict_proba(X)
        anchor = self.index.nearest(coords)
        local = np.empty(len(X))
        if mix_k <= 1:
            for j in np.unique(anchor):
                rows = np.flatnonzero(anchor == j)
                local[rows] = self.local_forests[j].predict_proba(X[rows])
        else:
            for q in range(len(X)):
                nbrs = self.index.knn(coords[q], mix_k)
                d = np.hypot(*(self.anchors[nbrs] - coords[q]).T)
                if d[0] < 1e-9:
                    local[q] = self.local_forests[nbrs[0]].predict_proba(X[q])[0]
                    continue
                w = d ** -2.0
                preds = np.array([self.local_forests[j].predict_proba(X[q])[0] for j in nbrs])
                local[q] = float(np.dot(w, preds) / w.sum())
        return local, glob, anchor

    def predict(self, X, coords, a: float | None = None, mix_k: int = 1) -> np.ndarray:
        a = self.hyper.local_weight_a if a is None else float(a)
        if not 0.0 <= a <= 1.0:
            raise ValueError("a must lie in [0, 1]")
        local, glob, _ = self.components(X, coords, mix_k=mix_k)
        return blend(local, glob, a)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "schema_version": MODEL_SCHEMA_VERSION,
            "hyper": self.hyper.to_dict(),
            "feature_names": list(self.feature_names),
            "anchors": self.anchors.tolist(),
            "global_forest": self.global_forest.to_dict(),
            "local_forests": [f.to_dict() for f in self.local_forests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GrfModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a GRF model document")
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {d.get('schema_version')!r}")
        hyper = GrfHyperParams.from_dict(d["hyper"])
        glob = Forest.from_dict(d["global_forest"])
        locs = [Forest.from_dict(f) for f in d["local_forests"]]
        anchors = np.asarray(d["anchors"], dtype=np.float64)
        if len(anchors) != len(locs) or len(locs) == 0:
            raise ValueError("need exactly one local forest per anchor")
        if hyper.bandwidth_n > len(anchors):
            raise ValueError("bandwidth exceeds sample count")
        if any(f.feature_count != glob.feature_count for f in locs):
            raise ValueError("local and global forests disagree on feature count")
        names = list(d["feature_names"])
        if len(names) != glob.feature_count:
            raise ValueError("feature_names length does not match the forests")
        return cls(glob, anchors, locs, hyper, names)


def blend(local, glob, a: float):
    return a * local + (1.0 - a) * glob


def fit_grf(X, coords, y, hyper: GrfHyperParams, seed: int | None = None,
            feature_names=None, shared_local_seed: bool = False) -> GrfModel:
    """Fit the global forest on all rows and one local forest per training row.

    Local kernels are the ``bandwidth_n`` nearest rows (ties to the lower row
    index), fitted in ascending row order. The global forest uses ``seed``;
    local forest ``i`` uses :func:`local_seed` unless ``shared_local_seed``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    coords = _as_points(coords)
    y = np.asarray(y)
    n = len(X)
    if len(coords) != n or len(y) != n:
        raise ValueError("X, coords and y must have the same number of rows")
    if hyper.bandwidth_n > n:
        raise ValueError(f"bandwidth exceeds sample count ({hyper.bandwidth_n} > {n})")
    if np.all(coords == coords[0]):
        warnings.warn("all training coordinates are identical; local kernels coincide", stacklevel=2)
    seed = hyper.forest_params.seed if seed is None else int(seed)
    params = hyper.forest_params

    glob = fit_forest(X, y, params, seed=seed)
    index = SpatialIndex(coords)
    kernels = []
    local = []
    for i in range(n):
        rows = np.sort(index.knn(coords[i], hyper.bandwidth_n))
        kernels.append(rows)
        s = seed if shared_local_seed else local_seed(seed, i)
        local.append(fit_forest(X, y, params, seed=s, rows=rows))
    log.debug("fitted %d local forests (bandwidth %d)", n, hyper.bandwidth_n)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    return GrfModel(glob, coords, local, hyper, names, kernels=kernels)


def predict_grf(model: GrfModel, x, coord) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict_grf expects a single feature vector")
    return float(model.predict(x[None, :], np.asarray(coord, dtype=np.float64)[None, :])[0])
