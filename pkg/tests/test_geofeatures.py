import json
import math

import numpy as np
import pytest

from grfrisk.geofeatures import (
    GeoLayer,
    RiskGrid,
    buffer_aggregate,
    grid_to_csv,
    grid_to_geojson,
    idw,
    idw_surface,
    kde,
    make_grid,
    points_in_polygon,
    read_boundary,
    read_layer,
)


def brute_buffer(coords, weights, centers, radius, mode):
    out, empty = [], []
    for c in centers:
        inside = np.sqrt(((coords - c) ** 2).sum(axis=1)) <= radius
        empty.append(not inside.any())
        if mode == "count":
            out.append(inside.sum())
        elif mode == "weight_sum":
            out.append(np.sort(weights[inside]).sum())
        else:
            out.append(np.sort(weights[inside]).mean() if inside.any() else 0.0)
    return np.array(out, dtype=float), np.array(empty)


@pytest.mark.parametrize("mode", ["count", "weight_sum", "weight_mean"])
def test_buffer_matches_bruteforce(mode):
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1000, size=(3000, 2))
    w = rng.gamma(2.0, size=3000)
    centers = rng.uniform(0, 1000, size=(200, 2))
    res = buffer_aggregate(GeoLayer("x", pts, w), centers, 60.0, mode)
    want, empty = brute_buffer(pts, w, centers, 60.0, mode)
    assert np.array_equal(res.values, want)
    assert np.array_equal(res.empty, empty)


def test_buffer_boundary_inclusive_and_empty_layer():
    layer = GeoLayer("x", np.array([[400.0, 0.0], [0.0, 400.0001]]))
    assert buffer_aggregate(layer, [[0.0, 0.0]], 400.0).values.tolist() == [1.0]
    empty = GeoLayer("e", np.empty((0, 2)))
    res = buffer_aggregate(empty, [[0.0, 0.0]], 10.0, "weight_mean")
    assert res.values.tolist() == [0.0] and res.empty.tolist() == [True]


def test_buffer_errors():
    layer = GeoLayer("x", np.zeros((2, 2)))
    with pytest.raises(ValueError, match="no weights"):
        buffer_aggregate(layer, [[0, 0]], 1.0, "weight_sum")
    with pytest.raises(ValueError):
        buffer_aggregate(layer, [[0, 0]], 0.0)
    with pytest.raises(ValueError):
        GeoLayer("x", np.zeros((2, 2)), weights=np.array([1.0, -1.0]))


def test_layer_subset():
    layer = GeoLayer("poi", np.arange(8.0).reshape(4, 2), categories=np.array(["a", "b", "a", "c"]))
    sub = layer.subset("a")
    assert sub.name == "poi:a" and len(sub) == 2


@pytest.mark.parametrize("seed", range(20))
def test_grid_count_formula(seed):
    rng = np.random.default_rng(seed)
    u0, v0 = rng.uniform(-1e4, 1e4, size=2)
    du, dv = rng.uniform(0, 3000, size=2)
    s = rng.uniform(10, 500)
    g = make_grid(s, bbox=(u0, v0, u0 + du, v0 + dv))
    nu = math.floor(du / s + 1)
    nv = math.floor(dv / s + 1)
    assert len(g) == nu * nv
    assert g.shape == (nv, nu)


def test_grid_clipped_to_polygon_matches_shapely():
    shapely = pytest.importorskip("shapely")
    from shapely.geometry import Point, Polygon

    ring = np.array([[0, 0], [1000, 0], [1000, 600], [500, 1000], [0, 600], [0, 0]], dtype=float)
    hole = np.array([[300, 300], [600, 300], [600, 500], [300, 500], [300, 300]], dtype=float)
    g = make_grid(37.0, boundary=[ring, hole])
    poly = Polygon(ring, [hole])
    full = make_grid(37.0, bbox=(0, 0, 1000, 1000))
    want = np.array([poly.covers(Point(p)) for p in full.coords])
    assert np.array_equal(points_in_polygon(full.coords, [ring, hole]), want)
    assert len(g) == want.sum()


def test_degenerate_bbox():
    with pytest.raises(ValueError, match="degenerate"):
        make_grid(10.0, bbox=(0, 0, -1, 5))
    assert len(make_grid(10.0, bbox=(0, 0, 0, 0))) == 1


def test_idw_exact_at_samples_and_convex():
    rng = np.random.default_rng(1)
    S = rng.uniform(0, 100, size=(50, 2))
    v = rng.normal(size=50)
    for i in range(50):
        assert idw(S, v, S[i]) == v[i]
    q = rng.uniform(0, 100, size=(100, 2))
    out = idw_surface(S, v, q)
    assert np.all(out >= v.min()) and np.all(out <= v.max())
    assert out[3] == pytest.approx(idw(S, v, q[3]))


def test_idw_hand_example():
    S = np.array([[0.0, 0.0], [2.0, 0.0]])
    v = np.array([0.0, 1.0])
    assert idw(S, v, [1.0, 0.0], power=2) == pytest.approx(0.5)
    # weights 1/1 and 1/9
    assert idw(S, v, [-1.0, 0.0], power=2, k=None) == pytest.approx((1 / 9) / (1 + 1 / 9))


def test_kde_mass_and_peak():
    grid = make_grid(5.0, bbox=(-200, -200, 200, 200))
    dens = kde([[0.0, 0.0]], 20.0, grid)
    assert dens.sum() * grid.cell_area == pytest.approx(1.0, rel=1e-3)
    assert grid.coords[np.argmax(dens)].tolist() == [0.0, 0.0]
    raw = kde([[0.0, 0.0], [0.0, 0.0]], 20.0, grid, normalize=False)
    assert raw.max() == pytest.approx(2.0)


def test_layer_io(tmp_path):
    p = tmp_path / "shops.csv"
    p.write_text("u,v,weight,category\n1,2,3,food\n4,5,6,retail\n")
    layer = read_layer(p)
    assert layer.name == "shops" and layer.weights.tolist() == [3.0, 6.0]
    assert layer.categories.tolist() == ["food", "retail"]
    bad = tmp_path / "bad.csv"
    bad.write_text("u,v\n1,2\nx,3\n")
    with pytest.raises(ValueError, match=":3"):
        read_layer(bad)
    gj = tmp_path / "pts.geojson"
    gj.write_text(json.dumps({"type": "FeatureCollection", "features": [
        {"type": "Feature", "geometry": {"type": "Point", "coordinates": [1, 2]}, "properties": {}}]}))
    assert read_layer(gj).coords.tolist() == [[1.0, 2.0]]


def test_boundary_and_outputs(tmp_path):
    b = tmp_path / "b.geojson"
    b.write_text(json.dumps({"type": "MultiPolygon", "coordinates": [[[[0, 0], [1, 0], [1, 1], [0, 0]]]]}))
    assert len(read_boundary(b)) == 1
    g = RiskGrid((0, 0), 1.0, np.array([[0.0, 0.0], [1.0, 0.0]]), (1, 2),
                 features=np.array([[1.0], [2.0]]), risk=np.array([0.1234567, 1.0]))
    grid_to_geojson(g, tmp_path / "r.geojson")
    doc = json.loads((tmp_path / "r.geojson").read_text())
    assert [f["properties"]["risk"] for f in doc["features"]] == [0.123457, 1.0]
    grid_to_csv(g, tmp_path / "r.csv", ["f"])
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "u,v,risk,f"
