"""Model-ready feature assembly: lag windows, scaling, and the county graph.

A feature row for (county, t) holds n hourly outage lags, weather vectors
for lags 0..n (lag 0 optional), the county's static socio-economic and
infrastructure vector, and a month-of-year one-hot as the seasonal
indicator. Nothing in a row references any panel value after t.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .csvio import HOUR, format_float, format_timestamp, parse_timestamp, \
    read_rows, write_rows
from .hilp import DEFAULT_TZ_OFFSET_HOURS, local_month
from .ingest import MISSING, STATIC_FEATURE_NAMES, WEATHER_FIELDS, PanelDataset

EARTH_RADIUS_MILES = 3958.7613
DEFAULT_GRAPH_RADIUS_MILES = 50.0


@dataclass(frozen=True)
class LagConfig:
    n: int = 24
    include_current_weather: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("lag depth must be >= 1")


def feature_columns(lag_cfg: LagConfig) -> list:
    """The fixed, documented column order of the feature matrix."""
    cols = [f"y_lag_{j}" for j in range(1, lag_cfg.n + 1)]
    offsets = range(0 if lag_cfg.include_current_weather else 1, lag_cfg.n + 1)
    for off in offsets:
        cols.extend(f"{f}_lag_{off}" for f in WEATHER_FIELDS)
    cols.extend(STATIC_FEATURE_NAMES)
    cols.extend(f"month_{m}" for m in range(1, 13))
    return cols


class FeatureMatrix:
    """Named feature rows with targets, indexed by (county_id, hour)."""

    def __init__(self, columns, X, y, index, dropped: int = 0):
        self.columns = list(columns)
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.index = list(index)
        self.dropped = dropped
        if self.X.shape != (len(self.index), len(self.columns)):
            raise ValueError("feature matrix shape mismatch")
        if self.y.shape != (len(self.index),):
            raise ValueError("target vector shape mismatch")

    def __len__(self) -> int:
        return len(self.index)

    def column_index(self, name: str) -> int:
        return self.columns.index(name)

    def select(self, mask) -> "FeatureMatrix":
        mask = np.asarray(mask, dtype=bool)
        idx = [cell for cell, keep in zip(self.index, mask) if keep]
        return FeatureMatrix(self.columns, self.X[mask], self.y[mask], idx,
                             self.dropped)


def build_feature_matrix(panel: PanelDataset, cells, lag_cfg: LagConfig,
                         tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS
                         ) -> FeatureMatrix:
    """One row per admissible (county, hour) cell.

    cells is an ordered collection of (county_id, timestamp), normally the
    extreme-event union. Cells without n full hours of observed history, or
    with a missing target, are dropped and counted. Duplicates keep their
    first occurrence.
    """
    n = lag_cfg.n
    offsets = list(range(0 if lag_cfg.include_current_weather else 1, n + 1))
    columns = feature_columns(lag_cfg)
    static_vecs = {c: panel.statics[c].static_vector() for c in panel.counties}

    rows, targets, index = [], [], []
    dropped = 0
    seen = set()
    for county, ts in cells:
        if (county, ts) in seen:
            continue
        seen.add((county, ts))
        ci = panel.county_index(county)
        ti = panel.time_index(ts)
        if ti - n < 0:
            dropped += 1
            continue
        lag_slice = slice(ti - n, ti)
        if (panel.outage_status[ci, ti] == MISSING
                or np.any(panel.outage_status[ci, lag_slice] == MISSING)):
            dropped += 1
            continue
        if any(np.any(panel.weather_status[ci, ti - off] == MISSING)
               for off in offsets):
            dropped += 1
            continue

        row = [panel.outages[ci, ti - j] for j in range(1, n + 1)]
        for off in offsets:
            row.extend(panel.weather[ci, ti - off])
        row.extend(static_vecs[county])
        onehot = [0.0] * 12
        onehot[local_month(ts, tz_offset_hours) - 1] = 1.0
        row.extend(onehot)

        rows.append(row)
        targets.append(panel.outages[ci, ti])
        index.append((county, ts))

    if not rows:
        raise ValueError(
            f"no admissible rows (all {dropped} candidate cells dropped)")
    return FeatureMatrix(columns, np.array(rows), np.array(targets), index,
                         dropped)


def sequence_features(matrix: FeatureMatrix, lag_cfg: LagConfig) -> np.ndarray:
    """Reshape feature rows into per-hour step vectors for the recurrent model.

    Steps run oldest to newest over the lag window; each step is
    [outage, 8 weather fields, statics, month one-hot]. When current weather
    is included, the final step pairs lag-0 weather with the most recent
    observed outage (lag 1), since the hour's own outage is the target.
    """
    n = lag_cfg.n
    col = {name: i for i, name in enumerate(matrix.columns)}
    static_idx = [col[name] for name in STATIC_FEATURE_NAMES]
    month_idx = [col[f"month_{m}"] for m in range(1, 13)]
    tail = matrix.X[:, static_idx + month_idx]

    steps = []
    for off in range(n, 0, -1):
        y_col = matrix.X[:, [col[f"y_lag_{off}"]]]
        wx = matrix.X[:, [col[f"{f}_lag_{off}"] for f in WEATHER_FIELDS]]
        steps.append(np.hstack([y_col, wx, tail]))
    if lag_cfg.include_current_weather:
        y_col = matrix.X[:, [col["y_lag_1"]]]
        wx = matrix.X[:, [col[f"{f}_lag_0"] for f in WEATHER_FIELDS]]
        steps.append(np.hstack([y_col, wx, tail]))
    return np.stack(steps, axis=1)


# ---------------------------------------------------------------------------
# Min-max scaling
# ---------------------------------------------------------------------------

class MinMaxScaler:
    """Column-wise [0, 1] scaling fitted on training rows.

    Constant columns transform to 0. Out-of-range values at apply time are
    NOT clipped; extreme events legitimately extrapolate past the training
    range and clipping would hide that shift.
    """

    def __init__(self):
        self.data_min_ = None
        self.data_max_ = None

    @property
    def fitted(self) -> bool:
        return self.data_min_ is not None

    def fit(self, X) -> "MinMaxScaler":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        return self

    def _check(self):
        if not self.fitted:
            raise RuntimeError("scaler not fitted")

    def _span(self) -> np.ndarray:
        span = self.data_max_ - self.data_min_
        return np.where(span == 0.0, 1.0, span)

    def transform(self, X) -> np.ndarray:
        self._check()
        X = np.asarray(X, dtype=float)
        out = (X - self.data_min_) / self._span()
        constant = self.data_max_ == self.data_min_
        if np.any(constant):
            out = np.where(constant, 0.0, out)
        return out

    def inverse_transform(self, X) -> np.ndarray:
        self._check()
        X = np.asarray(X, dtype=float)
        return X * self._span() + self.data_min_

    def to_dict(self) -> dict:
        self._check()
        return {"min": self.data_min_.tolist(), "max": self.data_max_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        scaler = cls()
        scaler.data_min_ = np.asarray(d["min"], dtype=float)
        scaler.data_max_ = np.asarray(d["max"], dtype=float)
        return scaler


# ---------------------------------------------------------------------------
# Spatio-temporal graph
# ---------------------------------------------------------------------------

def haversine_miles(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in miles."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_MILES * math.asin(math.sqrt(a))


@dataclass
class SpatioTemporalGraph:
    """Nodes are (county, hour) cells; node ids are county-major indices."""

    nodes: list  # [(county_id, timestamp), ...]
    node_features: np.ndarray  # scaled, one row per node
    node_feature_names: list
    node_targets: np.ndarray  # scaled outage per node
    spatial_pairs: list  # [(county_a, county_b), ...] with a < b
    spatial_edges: list  # [(node_i, node_j), ...] undirected, same hour
    temporal_edges: list  # [(node_i, node_j), ...] directed t -> t+1

    def node_id(self, county_i: int, time_i: int, n_hours: int) -> int:
        return county_i * n_hours + time_i


def build_graph(panel: PanelDataset,
                radius_miles: float = DEFAULT_GRAPH_RADIUS_MILES
                ) -> SpatioTemporalGraph:
    """Spatial edges within a physical radius, temporal edges along hours.

    Unlike the imputation neighbor table (raw coordinate-space Euclidean),
    graph proximity is a physical distance, so haversine miles.
    """
    counties, times = panel.counties, panel.times
    n_c, n_t = len(counties), len(times)

    feature_names = ([f"wx_{f}" for f in WEATHER_FIELDS]
                     + list(STATIC_FEATURE_NAMES))
    raw = np.zeros((n_c * n_t, len(feature_names)))
    targets = np.zeros(n_c * n_t)
    nodes = []
    for ci, county in enumerate(counties):
        static_vec = panel.statics[county].static_vector()
        for ti, ts in enumerate(times):
            nid = ci * n_t + ti
            nodes.append((county, ts))
            raw[nid, :len(WEATHER_FIELDS)] = panel.weather[ci, ti]
            raw[nid, len(WEATHER_FIELDS):] = static_vec
            targets[nid] = panel.outages[ci, ti]

    feat_scaler = MinMaxScaler().fit(raw)
    target_scaler = MinMaxScaler().fit(targets.reshape(-1, 1))
    features = feat_scaler.transform(raw)
    scaled_targets = target_scaler.transform(targets.reshape(-1, 1))[:, 0]

    spatial_pairs = []
    for i in range(n_c):
        si = panel.statics[counties[i]]
        for j in range(i + 1, n_c):
            sj = panel.statics[counties[j]]
            dist = haversine_miles(si.latitude, si.longitude,
                                   sj.latitude, sj.longitude)
            if dist <= radius_miles:
                spatial_pairs.append((counties[i], counties[j]))

    spatial_edges = []
    pair_idx = [(panel.county_index(a), panel.county_index(b))
                for a, b in spatial_pairs]
    for ti in range(n_t):
        for ci, cj in pair_idx:
            spatial_edges.append((ci * n_t + ti, cj * n_t + ti))

    temporal_edges = []
    for ci in range(n_c):
        for ti in range(n_t - 1):
            temporal_edges.append((ci * n_t + ti, ci * n_t + ti + 1))

    return SpatioTemporalGraph(nodes, features, feature_names, scaled_targets,
                               spatial_pairs, spatial_edges, temporal_edges)


def write_graph_csv(graph: SpatioTemporalGraph, nodes_path, spatial_path,
                    temporal_path) -> None:
    """Export the graph so an external graph learner can consume it."""
    header = ["node_id", "county_id", "timestamp_utc",
              *graph.node_feature_names, "target_scaled"]
    rows = []
    for nid, (county, ts) in enumerate(graph.nodes):
        row = [str(nid), county, format_timestamp(ts)]
        row.extend(format_float(v) for v in graph.node_features[nid])
        row.append(format_float(graph.node_targets[nid]))
        rows.append(row)
    write_rows(nodes_path, header, rows)
    write_rows(spatial_path, ["node_a", "node_b"],
               [[str(a), str(b)] for a, b in graph.spatial_edges])
    write_rows(temporal_path, ["node_from", "node_to"],
               [[str(a), str(b)] for a, b in graph.temporal_edges])


# ---------------------------------------------------------------------------
# Feature matrix artifact + manifest
# ---------------------------------------------------------------------------

def write_feature_csv(matrix: FeatureMatrix, path, split=None) -> None:
    header = ["county_id", "timestamp_utc"]
    if split is not None:
        header.append("split")
    header.extend(matrix.columns)
    header.append("target")
    rows = []
    for i, (county, ts) in enumerate(matrix.index):
        row = [county, format_timestamp(ts)]
        if split is not None:
            row.append(split[i])
        row.extend(format_float(v) for v in matrix.X[i])
        row.append(format_float(matrix.y[i]))
        rows.append(row)
    write_rows(path, header, rows)


def read_feature_csv(path):
    """Returns (FeatureMatrix, split labels or None)."""
    rows = read_rows(path)
    _, header = next(rows)
    has_split = len(header) > 2 and header[2] == "split"
    first_col = 3 if has_split else 2
    columns = header[first_col:-1]
    X, y, index, split = [], [], [], []
    for _, row in rows:
        index.append((row[0], parse_timestamp(row[1])))
        if has_split:
            split.append(row[2])
        X.append([float(v) for v in row[first_col:-1]])
        y.append(float(row[-1]))
    matrix = FeatureMatrix(columns, np.array(X), np.array(y), index)
    return matrix, (split if has_split else None)


def write_feature_manifest(path, lag_cfg: LagConfig, columns,
                           feature_scaler: MinMaxScaler,
                           target_scaler: MinMaxScaler, dropped: int,
                           tz_offset_hours: float) -> None:
    """Column order, scaler parameters, and lag config; everything needed to
    reload a model and reproduce its predictions exactly."""
    manifest = {
        "format": "outagecast-features/1",
        "lag_hours": lag_cfg.n,
        "include_current_weather": lag_cfg.include_current_weather,
        "tz_offset_hours": tz_offset_hours,
        "columns": list(columns),
        "feature_scaler": feature_scaler.to_dict(),
        "target_scaler": target_scaler.to_dict(),
        "dropped_rows": dropped,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_feature_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "outagecast-features/1":
        raise ValueError(f"{path}: unknown feature manifest format")
    return manifest
