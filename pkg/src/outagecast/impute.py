"""KNN spatial imputation of missing weather cells.

For each county the k geographically nearest counties are found once, using
plain Euclidean distance on the raw (lat, lon) coordinates. A missing field
at (county, hour) is filled with the arithmetic mean of that field at the
same hour over the present values among those k neighbors. Averages are
taken in neighbor-table order, which makes the result reproducible bit for
bit.

When none of the k neighbors has data, a fallback chain guarantees a
complete panel: widen to every county with data at that hour, then linear
interpolation in time within the county, then the county mean, then the
global field mean.
"""

from __future__ import annotations

import math

import numpy as np

from .ingest import IMPUTED, MISSING, PRESENT, WEATHER_FIELDS, PanelDataset

DEFAULT_K = 5


def nearest_counties(statics) -> dict:
    """Per-county neighbor lists sorted by ascending distance.

    Returns {county_id: [(neighbor_id, distance), ...]} where each list
    excludes the county itself and ties are broken by county_id.
    """
    statics = list(statics)
    if len(statics) < 2:
        raise ValueError("need at least 2 counties to build a neighbor table")
    coords = {s.county_id: (s.latitude, s.longitude) for s in statics}
    table = {}
    for cid, (x1, y1) in coords.items():
        pairs = []
        for other, (x2, y2) in coords.items():
            if other == cid:
                continue
            dist = math.sqrt((x1 - x2) ** 2 + (y1 - y2) ** 2)
            pairs.append((other, dist))
        pairs.sort(key=lambda p: (p[1], p[0]))
        table[cid] = pairs
    return table


def _interp_in_time(present_t, present_v, ti):
    """Linear interpolation at hour index ti from bracketing present cells."""
    pos = np.searchsorted(present_t, ti)
    if pos == 0 or pos == len(present_t):
        return None  # no bracket on one side
    t0, t1 = present_t[pos - 1], present_t[pos]
    v0, v1 = present_v[pos - 1], present_v[pos]
    return v0 + (v1 - v0) * (ti - t0) / (t1 - t0)


def _impute_field(values, status, counties, table, k):
    """Fill one (county x hour) field in place. Reads only PRESENT cells."""
    n_c, n_t = values.shape
    c_idx = {cid: i for i, cid in enumerate(counties)}
    present = status == PRESENT

    # Per-county hour indices of present cells, for interpolation/means.
    present_t = [np.flatnonzero(present[ci]) for ci in range(n_c)]
    county_mean = [
        float(np.mean(values[ci][present_t[ci]])) if len(present_t[ci]) else None
        for ci in range(n_c)
    ]
    if present.any():
        global_mean = float(np.mean(values[present]))
    else:
        global_mean = None

    out_values = values.copy()
    out_status = status.copy()
    for ci, county in enumerate(counties):
        neighbor_order = [c_idx[nid] for nid, _ in table[county]]
        near_k = neighbor_order[:k]
        for ti in np.flatnonzero(status[ci] == MISSING):
            vals = [values[ni, ti] for ni in near_k if present[ni, ti]]
            if not vals:
                # widen to every county with data at this hour
                vals = [values[ni, ti] for ni in neighbor_order
                        if present[ni, ti]]
            if vals:
                fill = float(np.mean(np.asarray(vals)))
            else:
                fill = _interp_in_time(present_t[ci], values[ci][present_t[ci]],
                                       int(ti))
                if fill is None:
                    fill = county_mean[ci]
                if fill is None:
                    fill = global_mean
                if fill is None:
                    raise ValueError("field has no observed values anywhere")
            out_values[ci, ti] = fill
            out_status[ci, ti] = IMPUTED
    return out_values, out_status


def impute_missing(panel: PanelDataset, table: dict | None = None,
                   k: int = DEFAULT_K, impute_targets: bool = False
                   ) -> PanelDataset:
    """Return a copy of the panel with missing weather cells filled.

    Present cells are never modified. Filled cells are marked IMPUTED, so
    downstream consumers can tell observed from estimated data. Outage values
    stay untouched unless impute_targets is set (targets should normally
    remain observed).
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if table is None:
        table = nearest_counties(panel.statics.values())
    for county in panel.counties:
        if county not in table:
            raise ValueError(f"neighbor table missing county {county}")

    weather = panel.weather.copy()
    weather_status = panel.weather_status.copy()
    for f in range(len(WEATHER_FIELDS)):
        try:
            vals, stat = _impute_field(panel.weather[:, :, f],
                                       panel.weather_status[:, :, f],
                                       panel.counties, table, k)
        except ValueError:
            raise ValueError(
                f"cannot impute {WEATHER_FIELDS[f]}: no observed values")
        weather[:, :, f] = vals
        weather_status[:, :, f] = stat

    outages = panel.outages.copy()
    outage_status = panel.outage_status.copy()
    if impute_targets:
        outages, outage_status = _impute_field(
            panel.outages, panel.outage_status, panel.counties, table, k)

    return PanelDataset(panel.counties, panel.times, outages, outage_status,
                        weather, weather_status, list(panel.statics.values()))
