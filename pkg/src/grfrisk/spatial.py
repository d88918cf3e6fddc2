"""k-nearest-neighbour index over planar coordinates (meters).

Backed by :class:`scipy.spatial.cKDTree`; results are re-ranked with an explicit
Euclidean distance so that equal distances always resolve to the lower index.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("coordinates must have shape (n, 2)")
    if not np.all(np.isfinite(pts)):
        raise ValueError("coordinates must be finite")
    return pts


def euclidean(points: np.ndarray, q) -> np.ndarray:
    du = points[:, 0] - q[0]
    dv = points[:, 1] - q[1]
    return np.sqrt(du * du + dv * dv)


class SpatialIndex:
    """Static point index answering k-NN and radius queries."""

    def __init__(self, points):
        self.points = _as_points(points) if len(points) else np.empty((0, 2))
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def _require(self):
        if self._tree is None:
            raise ValueError("spatial index is empty")

    def knn(self, coord, k: int) -> np.ndarray:
        """Indices of the ``min(k, N)`` nearest points, by distance then index."""
        self._require()
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(coord, dtype=np.float64)
        k = min(int(k), len(self.points))
        d, _ = self._tree.query(q, k=k)
        kth = float(np.atleast_1d(d)[-1])
        # every point tied with the k-th distance is a candidate
        radius = kth * (1 + 1e-9) + 1e-9
        cand = np.asarray(self._tree.query_ball_point(q, radius), dtype=np.int64)
        dist = euclidean(self.points[cand], q)
        order = np.lexsort((cand, dist))
        return cand[order[:k]]

    def nearest(self, coords) -> np.ndarray:
        """Nearest point index for each query row (ties to the lowest index)."""
        self._require()
        qs = _as_points(coords)
        if len(self.points) == 1:
            return np.zeros(len(qs), dtype=np.int64)
        d, i = self._tree.query(qs, k=2)
        out = i[:, 0].astype(np.int64)
        # only near-ties need the exact re-ranking
        close = d[:, 1] - d[:, 0] <= 1e-9 * (1 + d[:, 1])
        for row in np.flatnonzero(close):
            out[row] = self.knn(qs[row], 1)[0]
        return out

    def within(self, coord, radius: float) -> np.ndarray:
        """Sorted indices of points with distance <= ``radius`` (inclusive)."""
        self._require()
        q = np.asarray(coord, dtype=np.float64)
        cand = np.asarray(self._tree.query_ball_point(q, radius * (1 + 1e-9) + 1e-9), dtype=np.int64)
        if cand.size == 0:
            return cand
        keep = euclidean(self.points[cand], q) <= radius
        return np.sort(cand[keep])


def knn_query(index: SpatialIndex, coord, k: int) -> list[int]:
    return index.knn(coord, k).tolist()
