"""End-to-end pipeline stages: featurize, select, train, sweep, riskmap, importance, synth.

Every stage reads and writes plain files inside ``PipelineConfig.output_dir``;
stages share nothing else. Outputs are deterministic for a fixed config.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import (
    confusion,
    metrics,
    r_squared,
    stratified_split,
    sweep_localization,
    write_sweep_csv,
    zone_association_ttest,
)
from .forest import ForestParams, feature_importance
from .geofeatures import (
    GeoLayer,
    RiskGrid,
    buffer_aggregate,
    grid_to_csv,
    grid_to_geojson,
    idw_surface,
    make_grid,
    read_boundary,
    read_layer,
)
from .grf import GrfHyperParams, GrfModel, fit_grf
from .preprocess import ColumnStats, oversample_to_parity, screen_features, zscore_fit
from .synth import synth_scenario

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
PIPELINE_MODEL_FORMAT = "grfrisk.pipeline-model"
DEFAULT_SEVERITY_MAP = {"no_damage": 0, "minor": 0, "moderate": 1, "major": 1}
PAPER_SWEEP = [0.01, 0.16, 0.25, 0.50, 0.75, 0.99]

FEATURES_CSV = "features.csv"
FEATURES_MANIFEST = "features.manifest.json"
SELECTION_CSV = "selection.csv"
SELECTED_JSON = "selected.json"
MODEL_JSON = "model.json"
METRICS_CSV = "metrics.csv"
SWEEP_CSV = "sweep.csv"
RISK_GEOJSON = "risk.geojson"
RISK_CSV = "risk.csv"
RISK_IDW_GEOJSON = "risk_idw.geojson"
IMPORTANCE_CSV = "importance.csv"


class PipelineError(Exception):
    """Invalid input or configuration detected by a pipeline stage."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class LayerSpec:
    name: str
    path: str
    mode: str = "count"
    categories: list[str] | None = None

    def columns(self) -> list[str]:
        if self.categories is None:
            return [self.name]
        return [f"{self.name}:{c}" for c in self.categories]


@dataclass
class SmoteSettings:
    enabled: bool = True
    k_neighbors: int = 5
    coord_mode: str = "base"


@dataclass
class IdwSettings:
    power: float = 2.0
    k: int | None = 12
    spacing_m: float | None = None


@dataclass
class PipelineConfig:
    events: str | None = None
    layers: list[LayerSpec] = field(default_factory=list)
    boundary: str | None = None
    output_dir: str = "out"
    buffer_radius_m: float = 400.0
    grid_spacing_m: float = 100.0
    bandwidth_n: int = 50
    local_weight_a: float = 0.5
    b_trees: int = 100
    mtry: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None
    p_max: float = 0.2
    vif_max: float = 10.0
    smote: SmoteSettings = field(default_factory=SmoteSettings)
    idw: IdwSettings = field(default_factory=IdwSettings)
    test_fraction: float = 0.2
    split_seed: int = 0
    seed: int = 0
    threshold: float = 0.5
    risk_threshold: float = 0.5
    sweep_a: list[float] = field(default_factory=lambda: list(PAPER_SWEEP))
    severity_map: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SEVERITY_MAP))
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    @property
    def hyper(self) -> GrfHyperParams:
        fp = ForestParams(self.b_trees, self.mtry, self.min_leaf, self.max_depth, self.seed)
        return GrfHyperParams(self.bandwidth_n, self.local_weight_a, fp)

    def path(self, p: str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return {"schema_version": CONFIG_SCHEMA_VERSION, **d}

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".") -> "PipelineConfig":
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise PipelineError(f"unsupported config schema_version {version!r}")
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(d) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        if "layers" in d:
            d["layers"] = [LayerSpec(**spec) for spec in d["layers"]]
        if "smote" in d:
            d["smote"] = SmoteSettings(**d["smote"])
        if "idw" in d:
            d["idw"] = IdwSettings(**d["idw"])
        return cls(**d, base_dir=Path(base_dir))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise PipelineError(f"config file not found: {path}") from None
        return cls.from_dict(doc, base_dir=path.parent)


# --------------------------------------------------------------------------
# ingestion
# --------------------------------------------------------------------------

@dataclass
class EventTable:
    ids: list[str]
    coords: np.ndarray
    severity_raw: list[str]
    labels: np.ndarray


def read_events(path, severity_map: dict[str, int] = DEFAULT_SEVERITY_MAP) -> EventTable:
    """Events CSV ``id,u,v,severity``; malformed rows are reported with their line number."""
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"events file not found: {path}")
    ids, coords, raw, labels = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "u", "v", "severity"} - set(reader.fieldnames or [])
        if missing:
            raise PipelineError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                u, v = float(row["u"]), float(row["v"])
            except (TypeError, ValueError):
                raise PipelineError(f"{path}:{line}: malformed coordinate") from None
            if not (math.isfinite(u) and math.isfinite(v)):
                raise PipelineError(f"{path}:{line}: non-finite coordinate")
            sev = (row["severity"] or "").strip().lower()
            if sev not in severity_map:
                raise PipelineError(f"{path}:{line}: unknown severity {row['severity']!r}")
            ids.append(row["id"])
            coords.append((u, v))
            raw.append(sev)
            labels.append(int(severity_map[sev]))
    if not ids:
        raise PipelineError(f"{path}: no events")
    return EventTable(ids, np.asarray(coords, dtype=np.float64), raw, np.asarray(labels, dtype=np.int64))


def write_events(path, ids, coords, severity) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "u", "v", "severity"])
        for i, (u, v), s in zip(ids, coords, severity):
            w.writerow([i, repr(float(u)), repr(float(v)), s])


def _load_layers(cfg: PipelineConfig) -> list[tuple[LayerSpec, GeoLayer]]:
    out = []
    for spec in cfg.layers:
        p = cfg.path(spec.path)
        if not p.exists():
            raise PipelineError(f"layer file not found: {p}")
        try:
            out.append((spec, read_layer(p, spec.name)))
        except ValueError as exc:
            raise PipelineError(str(exc)) from None
    return out


def buffer_features(layers: Sequence[tuple[LayerSpec, GeoLayer]], centers, radius: float):
    """Feature matrix, column names and empty-buffer flags for ``centers``."""
    cols, flags, names = [], [], []
    for spec, layer in layers:
        parts = [layer] if spec.categories is None else [
            layer.subset(c) if layer.categories is not None else GeoLayer(f"{layer.name}:{c}", np.empty((0, 2)))
            for c in spec.categories
        ]
        for name, part in zip(spec.columns(), parts):
            res = buffer_aggregate(part, centers, radius, spec.mode)
            cols.append(res.values)
            flags.append(res.empty)
            names.append(name)
    n = len(np.asarray(centers))
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    E = np.column_stack(flags) if flags else np.empty((n, 0), dtype=bool)
    return X, names, E


@dataclass
class FeatureTable:
    ids: list[str]
    coords: np.ndarray
    labels: np.ndarray
    X: np.ndarray
    names: list[str]


def write_feature_table(path, table: FeatureTable, severity_raw: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "u", "v", "severity", "label", *table.names])
        for i in range(len(table.ids)):
            w.writerow([table.ids[i], repr(float(table.coords[i, 0])), repr(float(table.coords[i, 1])),
                        severity_raw[i], int(table.labels[i]), *(repr(float(x)) for x in table.X[i])])


def read_feature_table(path) -> FeatureTable:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"feature table not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[5:]
        ids, coords, labels, rows = [], [], [], []
        for line, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise PipelineError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
            try:
                ids.append(rec[0])
                coords.append((float(rec[1]), float(rec[2])))
                labels.append(int(rec[4]))
                rows.append([float(x) for x in rec[5:]])
            except ValueError:
                raise PipelineError(f"{path}:{line}: malformed value") from None
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))
    return FeatureTable(ids, np.asarray(coords, dtype=np.float64).reshape(-1, 2),
                        np.asarray(labels, dtype=np.int64), X, names)


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def cmd_featurize(cfg: PipelineConfig) -> Path:
    if cfg.events is None:
        raise PipelineError("config has no events file")
    events = read_events(cfg.path(cfg.events), cfg.severity_map)
    layers = _load_layers(cfg)
    X, names, empty = buffer_features(layers, events.coords, cfg.buffer_radius_m)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    table = FeatureTable(events.ids, events.coords, events.labels, X, names)
    write_feature_table(out / FEATURES_CSV, table, events.severity_raw)
    _dump_json(out / FEATURES_MANIFEST, {
        "schema_version": 1,
        "columns": ["id", "u", "v", "severity", "label", *names],
        "features": names,
        "layers": [asdict(spec) for spec, _ in layers],
        "buffer_radius_m": cfg.buffer_radius_m,
        "n_events": len(events.ids),
        "empty_buffers": {n: int(empty[:, j].sum()) for j, n in enumerate(names)},
    })
    log.info("featurized %d events into %d features", len(events.ids), len(names))
    return out / FEATURES_CSV


def cmd_select(cfg: PipelineConfig, features_path=None) -> Path:
    table = read_feature_table(features_path or cfg.out / FEATURES_CSV)
    if len(np.unique(table.labels)) < 2:
        raise PipelineError("feature selection needs both severity classes")
    report = screen_features(table.X, table.labels, table.names, cfg.p_max, cfg.vif_max)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / SELECTION_CSV)
    _dump_json(out / SELECTED_JSON, {"schema_version": 1, "selected": report.selected,
                                     "p_max": cfg.p_max, "vif_max": cfg.vif_max})
    log.info("selected %d of %d features", len(report.selected), len(table.names))
    return out / SELECTION_CSV


def _read_selected(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"selected-feature manifest not found: {path}")
    return list(json.loads(path.read_text())["selected"])


@dataclass
class TrainingSet:
    """Rows fed to the GRF plus bookkeeping of which event rows reached each stage."""

    X: np.ndarray
    coords: np.ndarray
    y: np.ndarray
    stats: ColumnStats
    standardized_rows: np.ndarray
    smote_rows: np.ndarray
    n_synthetic: int


def prepare_training(cfg: PipelineConfig, X, coords, y, rows) -> TrainingSet:
    """Standardize on the given training rows, then rebalance them with SMOTE."""
    X = np.asarray(X, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    Xt, ct, yt = X[rows], np.asarray(coords)[rows], np.asarray(y)[rows]
    stats = zscore_fit(Xt)
    Z = stats.apply(Xt)
    n0 = len(Z)
    smote_rows = np.empty(0, dtype=np.int64)
    if cfg.smote.enabled and len(np.unique(yt)) == 2 and min(np.bincount(yt)) >= 2:
        smote_rows = rows
        Z, yt, ct = oversample_to_parity(Z, yt, ct, cfg.smote.k_neighbors, cfg.seed, cfg.smote.coord_mode)
    return TrainingSet(Z, ct, yt, stats, rows, smote_rows, len(Z) - n0)


def _load_training_inputs(cfg, features_path, selected_path):
    table = read_feature_table(features_path or cfg.out / FEATURES_CSV)
    selected = _read_selected(selected_path or cfg.out / SELECTED_JSON)
    if not selected:
        raise PipelineError("selected-feature manifest is empty")
    missing = [s for s in selected if s not in table.names]
    if missing:
        raise PipelineError(f"selected features missing from table: {missing}")
    cols = [table.names.index(s) for s in selected]
    return table, selected, table.X[:, cols]


def _check_bandwidth(cfg: PipelineConfig, n_fit: int) -> None:
    if cfg.bandwidth_n > n_fit:
        raise PipelineError(
            f"bandwidth_n={cfg.bandwidth_n} exceeds the {n_fit} training rows after the split; "
            f"lower bandwidth_n or enlarge the training data (test_fraction={cfg.test_fraction})"
        )


@dataclass
class TrainResult:
    model: GrfModel
    training: TrainingSet
    train_idx: np.ndarray
    test_idx: np.ndarray
    metrics_rows: list[dict]


def cmd_train(cfg: PipelineConfig, features_path=None, selected_path=None) -> TrainResult:
    table, selected, X = _load_training_inputs(cfg, features_path, selected_path)
    if len(np.unique(table.labels)) < 2:
        raise PipelineError("training needs both severity classes")
    train_idx, test_idx = stratified_split(table.labels, cfg.test_fraction, cfg.split_seed)
    ts = prepare_training(cfg, X, table.coords, table.labels, train_idx)
    _check_bandwidth(cfg, len(ts.X))
    model = fit_grf(ts.X, ts.coords, ts.y, cfg.hyper, seed=cfg.seed, feature_names=selected)

    X_test = ts.stats.apply(X[test_idx])
    y_test = table.labels[test_idx]
    local, glob, _ = model.components(X_test, table.coords[test_idx])
    rows = []
    for label, a in (("grf", cfg.local_weight_a), ("global", 0.0), ("local", 1.0)):
        p = a * local + (1.0 - a) * glob
        m = metrics(confusion(p, y_test, cfg.threshold))
        rows.append({"model": label, "a": a, "accuracy": m.accuracy, "precision": m.precision,
                     "recall": m.recall, "r2": r_squared(p, y_test), "r2_global": r_squared(glob, y_test),
                     "n_train": len(train_idx), "n_synthetic": ts.n_synthetic, "n_test": len(test_idx)})

    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    save_pipeline_model(out / MODEL_JSON, model, ts.stats, cfg)
    with open(out / METRICS_CSV, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow(["" if r[k] is None else (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k]) for k in keys])
    return TrainResult(model, ts, train_idx, test_idx, rows)


def cmd_sweep(cfg: PipelineConfig, a_values: Sequence[float] | None = None,
              features_path=None, selected_path=None) -> Path:
    table, selected, X = _load_training_inputs(cfg, features_path, selected_path)
    a_values = list(cfg.sweep_a if a_values is None else a_values)

    def prepare(Xtr, ctr, ytr):
        ts = prepare_training(cfg, Xtr, ctr, ytr, np.arange(len(Xtr)))
        _check_bandwidth(cfg, len(ts.X))
        return ts.X, ts.coords, ts.y, ts.stats.apply

    res = sweep_localization(X, table.coords, table.labels, cfg.hyper, a_values,
                             split_seed=cfg.split_seed, test_fraction=cfg.test_fraction,
                             prepare=prepare, seed=cfg.seed, threshold=cfg.threshold)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(res.rows, out / SWEEP_CSV, res.oob_r2_global)
    return out / SWEEP_CSV


# --------------------------------------------------------------------------
# persisted model
# --------------------------------------------------------------------------

@dataclass
class PipelineModel:
    grf: GrfModel
    stats: ColumnStats
    features: list[str]
    layers: list[LayerSpec]
    buffer_radius_m: float


def save_pipeline_model(path, model: GrfModel, stats: ColumnStats, cfg: PipelineConfig) -> None:
    layers = [asdict(s) for s in cfg.layers]
    doc = {
        "format": PIPELINE_MODEL_FORMAT,
        "schema_version": 1,
        "features": list(model.feature_names),
        "standardization": stats.to_dict(),
        "layers": layers,
        "buffer_radius_m": cfg.buffer_radius_m,
        "grf": model.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_pipeline_model(path) -> PipelineModel:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"model file not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("format") != PIPELINE_MODEL_FORMAT or doc.get("schema_version") != 1:
        raise PipelineError(f"{path}: not a version-1 pipeline model")
    try:
        grf = GrfModel.from_dict(doc["grf"])
        stats = ColumnStats.from_dict(doc["standardization"])
    except (KeyError, ValueError) as exc:
        raise PipelineError(f"{path}: invalid model ({exc})") from None
    if len(stats.mean) != grf.feature_count or doc["features"] != grf.feature_names:
        raise PipelineError(f"{path}: standardization does not match the model features")
    layers = [LayerSpec(**d) for d in doc["layers"]]
    return PipelineModel(grf, stats, list(doc["features"]), layers, float(doc["buffer_radius_m"]))


# --------------------------------------------------------------------------
# risk surface and importance
# --------------------------------------------------------------------------

@dataclass
class RiskMapResult:
    grid: RiskGrid
    raw_features: np.ndarray
    geojson: Path
    csv: Path
    idw_geojson: Path | None = None


def cmd_riskmap(cfg: PipelineConfig, model_path=None) -> RiskMapResult:
    pm = load_pipeline_model(model_path or cfg.out / MODEL_JSON)
    boundary = None
    if cfg.boundary is not None and cfg.path(cfg.boundary).exists():
        boundary = read_boundary(cfg.path(cfg.boundary))
        grid = make_grid(cfg.grid_spacing_m, boundary=boundary)
    else:
        warnings.warn("no boundary file; using the bounding box of the training locations", stacklevel=2)
        a = pm.grf.anchors
        grid = make_grid(cfg.grid_spacing_m, bbox=(*a.min(axis=0), *a.max(axis=0)))
    if len(grid) == 0:
        raise PipelineError("the prediction grid is empty")

    layer_specs = {s.name: s for s in cfg.layers}
    layers = []
    for spec in pm.layers:
        spec = layer_specs.get(spec.name, spec)
        p = cfg.path(spec.path)
        if not p.exists():
            raise PipelineError(f"layer file not found: {p}")
        layers.append((spec, read_layer(p, spec.name)))
    X_all, names, empty = buffer_features(layers, grid.coords, pm.buffer_radius_m)
    missing = [f for f in pm.features if f not in names]
    if missing:
        raise PipelineError(f"model features not produced by the configured layers: {missing}")
    cols = [names.index(f) for f in pm.features]
    X_raw, E = X_all[:, cols], empty[:, cols]
    Z = pm.stats.apply(X_raw)
    modes = {c: spec.mode for spec, _ in layers for c in spec.columns()}
    mean_cols = np.array([modes[f] == "weight_mean" for f in pm.features], dtype=bool)
    fill = E & mean_cols[None, :]
    if fill.any():
        log.info("%d empty weight_mean buffers set to the training mean", int(fill.sum()))
        Z[fill] = 0.0

    grid.features = X_raw
    grid.risk = np.clip(pm.grf.predict(Z, grid.coords, a=cfg.local_weight_a), 0.0, 1.0)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    grid_to_geojson(grid, out / RISK_GEOJSON)
    grid_to_csv(grid, out / RISK_CSV, pm.features)
    result = RiskMapResult(grid, X_raw, out / RISK_GEOJSON, out / RISK_CSV)

    if cfg.idw.spacing_m:
        fine = make_grid(cfg.idw.spacing_m, bbox=(*grid.coords.min(axis=0), *grid.coords.max(axis=0)),
                         boundary=boundary)
        fine.risk = idw_surface(grid.coords, grid.risk, fine.coords, cfg.idw.power, cfg.idw.k)
        grid_to_geojson(fine, out / RISK_IDW_GEOJSON)
        result.idw_geojson = out / RISK_IDW_GEOJSON
    return result


def read_risk_csv(path):
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"risk grid not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.asarray([[float(x) for x in rec] for rec in reader], dtype=np.float64)
    data = data.reshape(-1, len(header))
    return data[:, 2], data[:, 3:], header[3:]


def cmd_importance(cfg: PipelineConfig, model_path=None, grid_path=None) -> Path:
    pm = load_pipeline_model(model_path or cfg.out / MODEL_JSON)
    imp = feature_importance(pm.grf.global_forest)
    tests = {}
    if grid_path is not None:
        risk, F, names = read_risk_csv(grid_path)
        for t in zone_association_ttest(risk, F, names, cfg.risk_threshold):
            tests[t.feature] = t
    order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / IMPORTANCE_CSV, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "importance", "direction", "t", "p"])
        for j in order:
            name = pm.features[j]
            t = tests.get(name)
            w.writerow([name, f"{imp[j]:.10f}", t.direction if t else "",
                        "" if t is None or t.t is None else f"{t.t:.6f}",
                        "" if t is None or t.p is None else f"{t.p:.6g}"])
    return out / IMPORTANCE_CSV


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

SCENARIOS = ("heterogeneous", "homogeneous")


def cmd_synth(out_dir, scenario: str = "heterogeneous", seed: int = 0, n_events: int = 600,
              n_regions: int = 3, n_features: int = 10, imbalance: float = 0.83,
              config_overrides: dict | None = None) -> PipelineConfig:
    """Write events, layers, a boundary and a ready-to-run config into ``out_dir``."""
    if scenario not in SCENARIOS:
        raise PipelineError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    extra = {} if scenario == "heterogeneous" else {"local_strength": 0.0}
    sc = synth_scenario(seed=seed, n_events=n_events, n_regions=n_regions, n_features=n_features,
                        imbalance=imbalance, **extra)
    out = Path(out_dir)
    (out / "layers").mkdir(parents=True, exist_ok=True)
    write_events(out / "events.csv", sc.event_ids, sc.event_coords, sc.severity)
    specs = []
    for layer in sc.layers:
        p = out / "layers" / f"{layer.name}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "v", "weight"])
            for (u, v), wt in zip(layer.coords, layer.weights):
                w.writerow([repr(float(u)), repr(float(v)), repr(float(wt))])
        specs.append(LayerSpec(layer.name, f"layers/{layer.name}.csv", "count"))
    ring = sc.boundary[0]
    boundary = {"type": "Feature", "properties": {},
                "geometry": {"type": "Polygon", "coordinates": [ring.tolist()]}}
    (out / "boundary.geojson").write_text(json.dumps(boundary) + "\n")
    cfg = PipelineConfig(events="events.csv", layers=specs, boundary="boundary.geojson",
                         output_dir="out", seed=seed, split_seed=seed, bandwidth_n=20, base_dir=out)
    for k, v in (config_overrides or {}).items():
        if k not in cfg.__dataclass_fields__ or k == "base_dir":
            raise PipelineError(f"unknown config key {k!r}")
        setattr(cfg, k, v)
    cfg.save(out / "config.json")
    return cfg
