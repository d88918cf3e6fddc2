"""Buffer aggregation, prediction lattices, IDW interpolation and KDE surfaces.

All coordinates are planar meters in a projected CRS.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .spatial import SpatialIndex, _as_points, euclidean

AggregateMode = Literal["count", "weight_sum", "weight_mean"]


@dataclass
class GeoLayer:
    name: str
    coords: np.ndarray
    weights: np.ndarray | None = None
    categories: np.ndarray | None = None
    _index: SpatialIndex | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.coords = _as_points(self.coords) if len(self.coords) else np.empty((0, 2))
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (len(self.coords),):
                raise ValueError(f"layer {self.name!r}: one weight per feature required")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
                raise ValueError(f"layer {self.name!r}: weights must be finite and >= 0")
        if self.categories is not None:
            self.categories = np.asarray(self.categories, dtype=object)
            if self.categories.shape != (len(self.coords),):
                raise ValueError(f"layer {self.name!r}: one category per feature required")

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def index(self) -> SpatialIndex:
        if self._index is None:
            self._index = SpatialIndex(self.coords)
        return self._index

    def subset(self, category: str) -> "GeoLayer":
        if self.categories is None:
            raise ValueError(f"layer {self.name!r} has no categories")
        keep = self.categories == category
        return GeoLayer(f"{self.name}:{category}", self.coords[keep],
                        None if self.weights is None else self.weights[keep])


@dataclass
class BufferResult:
    values: np.ndarray
    empty: np.ndarray


def buffer_aggregate(layer: GeoLayer, centers, radius: float,
                     mode: AggregateMode = "count") -> BufferResult:
    """Aggregate layer features within ``radius`` (inclusive) of each center.

    ``weight_mean`` of an empty buffer is 0 with its ``empty`` flag set.
    """
    if not radius > 0:
        raise ValueError("radius must be > 0")
    if mode not in ("count", "weight_sum", "weight_mean"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if mode != "count" and layer.weights is None and len(layer):
        raise ValueError(f"layer {layer.name!r} has no weights for mode {mode!r}")
    centers = _as_points(centers)
    values = np.zeros(len(centers))
    empty = np.ones(len(centers), dtype=bool)
    if len(layer) == 0:
        return BufferResult(values, empty)
    hits = layer.index._tree.query_ball_point(centers, radius * (1 + 1e-9) + 1e-9)
    for i, cand in enumerate(hits):
        if not cand:
            continue
        cand = np.asarray(cand, dtype=np.int64)
        cand = cand[euclidean(layer.coords[cand], centers[i]) <= radius]
        if cand.size == 0:
            continue
        empty[i] = False
        if mode == "count":
            values[i] = cand.size
        else:
            w = np.sort(layer.weights[cand])  # order-independent summation
            values[i] = w.sum() if mode == "weight_sum" else w.mean()
    return BufferResult(values, empty)


# --------------------------------------------------------------------------
# lattices
# --------------------------------------------------------------------------

@dataclass
class RiskGrid:
    origin: tuple[float, float]
    spacing: float
    coords: np.ndarray
    shape: tuple[int, int]
    features: np.ndarray | None = None
    risk: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def cell_area(self) -> float:
        return self.spacing * self.spacing


def _points_in_polygon(pts: np.ndarray, rings: Sequence[np.ndarray], tol: float = 1e-9) -> np.ndarray:
    """Even-odd containment over all rings; points on an edge count as inside."""
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for ring in rings:
        ring = np.asarray(ring, dtype=np.float64)
        if len(ring) and np.array_equal(ring[0], ring[-1]):
            ring = ring[:-1]
        for k in range(len(ring)):
            x1, y1 = ring[k]
            x2, y2 = ring[(k + 1) % len(ring)]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < x_at)
            # distance to the segment, for boundary inclusion
            ex, ey = x2 - x1, y2 - y1
            L2 = ex * ex + ey * ey
            t = np.clip(((x - x1) * ex + (y - y1) * ey) / L2, 0, 1) if L2 > 0 else np.zeros(len(pts))
            dx, dy = x - (x1 + t * ex), y - (y1 + t * ey)
            on_edge |= dx * dx + dy * dy <= tol * tol
    return inside | on_edge


def points_in_polygon(pts, rings) -> np.ndarray:
    return _points_in_polygon(_as_points(pts), rings)


def make_grid(spacing: float, bbox: Sequence[float] | None = None,
              boundary: Sequence[np.ndarray] | None = None) -> RiskGrid:
    """Regular lattice anchored at the lower-left corner, clipped to ``boundary``.

    ``bbox`` is ``(umin, vmin, umax, vmax)``; with only a boundary (a list of
    rings) the ring extent is used. Cells on the boundary are kept.
    """
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    if bbox is None:
        if boundary is None:
            raise ValueError("make_grid needs a bbox or a boundary")
        allpts = np.vstack([np.asarray(r, dtype=np.float64) for r in boundary])
        bbox = (*allpts.min(axis=0), *allpts.max(axis=0))
    umin, vmin, umax, vmax = (float(b) for b in bbox)
    if not all(math.isfinite(b) for b in (umin, vmin, umax, vmax)) or umax < umin or vmax < vmin:
        raise ValueError("degenerate bounding box")
    nu = int(math.floor((umax - umin) / spacing + 1))
    nv = int(math.floor((vmax - vmin) / spacing + 1))
    us = umin + spacing * np.arange(nu)
    vs = vmin + spacing * np.arange(nv)
    uu, vv = np.meshgrid(us, vs)
    coords = np.column_stack([uu.ravel(), vv.ravel()])
    if boundary is not None:
        coords = coords[_points_in_polygon(coords, boundary)]
    return RiskGrid((umin, vmin), float(spacing), coords, (nv, nu))


# --------------------------------------------------------------------------
# interpolation and density
# --------------------------------------------------------------------------

def idw(sample_coords, sample_values, query, power: float = 2.0, k: int | None = 12) -> float:
    """Inverse-distance-weighted value at ``query`` from the ``k`` nearest samples.

    ``k=None`` uses every sample. A query within 1e-9 m of a sample returns
    that sample's value (lowest index among coincident samples).
    """
    pts = _as_points(sample_coords)
    vals = np.asarray(sample_values, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("IDW needs at least one sample")
    q = np.asarray(query, dtype=np.float64)
    if k is None or k >= len(pts):
        nbrs = np.arange(len(pts))
    else:
        nbrs = SpatialIndex(pts).knn(q, k)
    d = euclidean(pts[nbrs], q)
    hit = np.flatnonzero(d < 1e-9)
    if hit.size:
        return float(vals[nbrs[hit].min()])
    w = d ** (-power)
    return float(np.dot(w, vals[nbrs]) / w.sum())


def idw_surface(sample_coords, sample_values, queries, power: float = 2.0, k: int | None = 12) -> np.ndarray:
    pts = _as_points(sample_coords)
    vals = np.asarray(sample_values, dtype=np.float64)
    queries = _as_points(queries)
    if len(pts) == 0:
        raise ValueError("IDW needs at least one sample")
    index = SpatialIndex(pts)
    kk = len(pts) if k is None else min(k, len(pts))
    out = np.empty(len(queries))
    for i, q in enumerate(queries):
        nbrs = index.knn(q, kk) if kk < len(pts) else np.arange(len(pts))
        d = euclidean(pts[nbrs], q)
        hit = np.flatnonzero(d < 1e-9)
        if hit.size:
            out[i] = vals[nbrs[hit].min()]
        else:
            w = d ** (-power)
            out[i] = np.dot(w, vals[nbrs]) / w.sum()
    return out


def kde(points, bandwidth: float, grid: RiskGrid, normalize: bool = True) -> np.ndarray:
    """Gaussian kernel density at every grid cell.

    With ``normalize`` the surface is a probability density (cell sums times
    cell area approach 1 on a grid covering the points); otherwise it is the
    raw sum of unit-height kernels.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be > 0")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    out = np.zeros(len(grid.coords))
    if len(pts) == 0:
        return out
    h2 = 2.0 * bandwidth * bandwidth
    for p in pts:
        d2 = ((grid.coords - p) ** 2).sum(axis=1)
        out += np.exp(-d2 / h2)
    if normalize:
        out /= len(pts) * math.pi * h2
    return out


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def read_layer_csv(path, name: str | None = None) -> GeoLayer:
    """Layer CSV with columns ``u,v[,weight][,category]``."""
    path = Path(path)
    coords, weights, cats = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "u" not in cols or "v" not in cols:
            raise ValueError(f"{path}: layer CSV needs 'u' and 'v' columns")
        has_w, has_c = "weight" in cols, "category" in cols
        for line, row in enumerate(reader, start=2):
            try:
                u, v = float(row["u"]), float(row["v"])
                w = float(row["weight"]) if has_w else None
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: malformed row ({exc})") from None
            if not (math.isfinite(u) and math.isfinite(v)):
                raise ValueError(f"{path}:{line}: non-finite coordinate")
            coords.append((u, v))
            if has_w:
                weights.append(w)
            if has_c:
                cats.append(row["category"])
    return GeoLayer(name or path.stem, np.asarray(coords, dtype=np.float64).reshape(-1, 2),
                    np.asarray(weights) if has_w else None, np.asarray(cats, dtype=object) if has_c else None)


def read_layer_geojson(path, name: str | None = None, weight_property: str = "weight",
                       category_property: str = "category") -> GeoLayer:
    path = Path(path)
    doc = json.loads(path.read_text())
    coords, weights, cats = [], [], []
    for i, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            raise ValueError(f"{path}: feature {i} is not a Point")
        u, v = (float(c) for c in geom["coordinates"][:2])
        if not (math.isfinite(u) and math.isfinite(v)):
            raise ValueError(f"{path}: feature {i} has a non-finite coordinate")
        props = feat.get("properties") or {}
        coords.append((u, v))
        weights.append(props.get(weight_property))
        cats.append(props.get(category_property))
    has_w = bool(weights) and all(w is not None for w in weights)
    has_c = bool(cats) and all(c is not None for c in cats)
    return GeoLayer(name or path.stem, np.asarray(coords, dtype=np.float64).reshape(-1, 2),
                    np.asarray(weights, dtype=np.float64) if has_w else None,
                    np.asarray(cats, dtype=object) if has_c else None)


def read_layer(path, name: str | None = None) -> GeoLayer:
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        return read_layer_geojson(path, name)
    return read_layer_csv(path, name)


def read_boundary(path) -> list[np.ndarray]:
    """Rings of a GeoJSON Polygon/MultiPolygon (bare geometry, Feature or FeatureCollection)."""
    doc = json.loads(Path(path).read_text())
    geoms = []
    if doc.get("type") == "FeatureCollection":
        geoms = [f["geometry"] for f in doc["features"]]
    elif doc.get("type") == "Feature":
        geoms = [doc["geometry"]]
    else:
        geoms = [doc]
    rings = []
    for g in geoms:
        if g["type"] == "Polygon":
            rings += [np.asarray(r, dtype=np.float64)[:, :2] for r in g["coordinates"]]
        elif g["type"] == "MultiPolygon":
            rings += [np.asarray(r, dtype=np.float64)[:, :2] for poly in g["coordinates"] for r in poly]
        else:
            raise ValueError(f"unsupported boundary geometry {g['type']!r}")
    if not rings:
        raise ValueError("boundary has no polygon rings")
    return rings


def grid_to_geojson(grid: RiskGrid, path, extra: dict[str, np.ndarray] | None = None) -> None:
    if grid.risk is None:
        raise ValueError("grid carries no risk predictions")
    feats = []
    for i, (u, v) in enumerate(grid.coords):
        props = {"risk": round(float(grid.risk[i]), 6)}
        for key, arr in (extra or {}).items():
            props[key] = float(arr[i])
        feats.append({"type": "Feature", "geometry": {"type": "Point", "coordinates": [float(u), float(v)]},
                      "properties": props})
    doc = {"type": "FeatureCollection", "features": feats}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def grid_to_csv(grid: RiskGrid, path, feature_names: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v", "risk", *feature_names])
        for i, (u, v) in enumerate(grid.coords):
            row = [repr(float(u)), repr(float(v)), f"{float(grid.risk[i]):.6f}"]
            if feature_names:
                row += [repr(float(x)) for x in grid.features[i]]
            w.writerow(row)
