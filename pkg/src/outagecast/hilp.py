"""HILP event identification and seasonal weather-analog expansion.

Seed events are county-hours where a reported storm coincides with an outage
at or above the alpha-quantile of storm-hour outages. Each seed is expanded
with the K most meteorologically similar hours from the same county within
a +/-1 calendar-month window (wrapping across year boundaries), measured by
Euclidean distance in standardized weather-feature space. The union of seeds
and analogs is the extreme-event training set.

Calendar months are taken in local time via a fixed UTC offset, since the
panel stores UTC throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .csvio import format_timestamp, parse_timestamp, read_rows, write_rows
from .ingest import MISSING, WEATHER_FIELDS, PanelDataset, StormEvent

DEFAULT_ALPHA = 0.7
DEFAULT_ANALOGS_PER_SEED = 10
DEFAULT_SEASON_WINDOW = 1
DEFAULT_TZ_OFFSET_HOURS = -5.0  # Michigan local time for month extraction


@dataclass(frozen=True)
class HilpSeed:
    county_id: str
    t_ex: datetime
    y_value: float


@dataclass(frozen=True)
class StandardizationParams:
    """Feature-wise mean and population standard deviation of the weather."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class ExtremeEventSet:
    seeds: list
    analogs: dict  # (county_id, t_ex) -> ordered [(county_id, t), ...]
    union: list = field(default_factory=list)  # deduplicated, sorted

    def __post_init__(self):
        if not self.union:
            cells = {(s.county_id, s.t_ex) for s in self.seeds}
            for hours in self.analogs.values():
                cells.update(hours)
            self.union = sorted(cells)
        self.union_set = frozenset(self.union)


def local_month(ts: datetime, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS) -> int:
    return (ts + timedelta(hours=tz_offset_hours)).month


def weather_indicator(storms, county_id: str, ts: datetime) -> int:
    """1 iff a reported storm covers (county, ts); intervals are closed."""
    for s in storms:
        if s.county_id == county_id and s.start <= ts <= s.end:
            return 1
    return 0


def storm_hour_mask(panel: PanelDataset, storms) -> np.ndarray:
    """Boolean (county x hour) mask of storm coverage over the panel."""
    mask = np.zeros((panel.n_counties, panel.n_hours), dtype=bool)
    times = panel.times
    for s in storms:
        ci = panel._county_idx.get(s.county_id)
        if ci is None:
            continue
        for ti, ts in enumerate(times):
            if s.start <= ts <= s.end:
                mask[ci, ti] = True
    return mask


def nearest_rank_quantile(values: np.ndarray, alpha: float) -> float:
    """ceil(alpha*N)-th order statistic; alpha=0 gives the minimum.

    The result is always an observed value, keeping threshold comparisons
    exact on integer outage counts.
    """
    values = np.sort(np.asarray(values, dtype=float))
    n = len(values)
    if n == 0:
        raise ValueError("empty population")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    rank = max(1, math.ceil(alpha * n))
    return float(values[rank - 1])


def outage_quantile(panel: PanelDataset, storms,
                    alpha: float = DEFAULT_ALPHA) -> float:
    """Alpha-quantile of observed outages over storm-covered hours."""
    mask = storm_hour_mask(panel, storms) & (panel.outage_status != MISSING)
    values = panel.outages[mask]
    if values.size == 0:
        raise ValueError("no storm hours with observed outages")
    return nearest_rank_quantile(values, alpha)


def identify_seeds(panel: PanelDataset, storms,
                   alpha: float = DEFAULT_ALPHA) -> list:
    """Seed events: storm coverage AND outage at or above the quantile."""
    q = outage_quantile(panel, storms, alpha)
    mask = storm_hour_mask(panel, storms) & (panel.outage_status != MISSING)
    seeds = []
    for ci, ti in zip(*np.nonzero(mask & (panel.outages >= q))):
        seeds.append(HilpSeed(panel.counties[ci], panel.times[ti],
                              float(panel.outages[ci, ti])))
    seeds.sort(key=lambda s: (s.county_id, s.t_ex))
    return seeds


def seasonal_candidates(panel: PanelDataset, county_id: str, t_ex: datetime,
                        window: int = DEFAULT_SEASON_WINDOW,
                        tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS) -> list:
    """Panel hours in the same county within +/-window months of t_ex.

    Months wrap across the year boundary (December borders January) and the
    seed hour itself is excluded.
    """
    m = local_month(t_ex, tz_offset_hours)
    allowed = {(m - 1 + d) % 12 + 1 for d in range(-window, window + 1)}
    return [ts for ts in panel.times
            if ts != t_ex and local_month(ts, tz_offset_hours) in allowed]


def fit_standardization(panel: PanelDataset) -> StandardizationParams:
    """Per-feature mean and population std over the full (complete) panel."""
    if np.any(panel.weather_status == MISSING):
        raise ValueError("panel has missing weather cells; impute first")
    flat = panel.weather.reshape(-1, len(WEATHER_FIELDS))
    mu = flat.mean(axis=0)
    sigma = flat.std(axis=0)  # population std (ddof=0)
    for f, s in enumerate(sigma):
        if s == 0.0:
            raise ValueError(f"zero variance: {WEATHER_FIELDS[f]}")
    return StandardizationParams(mu=mu, sigma=sigma)


def standardize(x: np.ndarray, params: StandardizationParams) -> np.ndarray:
    return (np.asarray(x, dtype=float) - params.mu) / params.sigma


def weather_distance(x1, x2, params: StandardizationParams) -> float:
    """Euclidean distance between two raw 8-vectors in standardized space."""
    return float(np.linalg.norm(standardize(x1, params) - standardize(x2, params)))


def select_analogs(seed: HilpSeed, panel: PanelDataset,
                   params: StandardizationParams,
                   k_analogs: int = DEFAULT_ANALOGS_PER_SEED,
                   window: int = DEFAULT_SEASON_WINDOW,
                   tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS) -> list:
    """The k candidate hours most similar to the seed's weather.

    Ties in distance are broken by earlier timestamp; when fewer than k
    candidates exist they are all returned.
    """
    if k_analogs < 0:
        raise ValueError("analog count must be non-negative")
    ci = panel.county_index(seed.county_id)
    cand_times = seasonal_candidates(panel, seed.county_id, seed.t_ex,
                                     window, tz_offset_hours)
    if k_analogs == 0 or not cand_times:
        return []
    cand_idx = np.array([panel.time_index(ts) for ts in cand_times])
    z = standardize(panel.weather[ci], params)
    z_seed = standardize(panel.weather[ci, panel.time_index(seed.t_ex)], params)
    deltas = np.linalg.norm(z[cand_idx] - z_seed, axis=1)
    order = np.lexsort((cand_idx, deltas))[:k_analogs]
    return [(seed.county_id, panel.times[cand_idx[i]]) for i in order]


def build_extreme_set(panel: PanelDataset, storms,
                      alpha: float = DEFAULT_ALPHA,
                      k_analogs: int = DEFAULT_ANALOGS_PER_SEED,
                      window: int = DEFAULT_SEASON_WINDOW,
                      tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS
                      ) -> ExtremeEventSet:
    """Seeds plus their analogs, deduplicated into the training event set."""
    seeds = identify_seeds(panel, storms, alpha)
    params = fit_standardization(panel)
    analogs = {}
    for seed in seeds:
        analogs[(seed.county_id, seed.t_ex)] = select_analogs(
            seed, panel, params, k_analogs, window, tz_offset_hours)
    return ExtremeEventSet(seeds=seeds, analogs=analogs)


# ---------------------------------------------------------------------------
# Extreme-set artifact: one row per union member. Seeds point at themselves;
# analog rows reference the earliest seed (in seed order) that selected them.
# ---------------------------------------------------------------------------

EXTREME_SET_HEADER = ["county_id", "timestamp_utc", "origin", "seed_ref"]


def write_extreme_set_csv(extreme: ExtremeEventSet, path) -> None:
    seed_cells = {(s.county_id, s.t_ex) for s in extreme.seeds}
    ref = {}
    for s in extreme.seeds:
        key = (s.county_id, s.t_ex)
        for cell in extreme.analogs.get(key, []):
            ref.setdefault(cell, key)
    rows = []
    for county, ts in extreme.union:
        if (county, ts) in seed_cells:
            origin, seed_ref = "seed", f"{county}:{format_timestamp(ts)}"
        else:
            rc, rt = ref[(county, ts)]
            origin, seed_ref = "analog", f"{rc}:{format_timestamp(rt)}"
        rows.append([county, format_timestamp(ts), origin, seed_ref])
    write_rows(path, EXTREME_SET_HEADER, rows)


def read_extreme_set_cells(path) -> list:
    """Load the (county, hour) union back from the artifact."""
    cells = []
    rows = read_rows(path)
    _, header = next(rows)
    if header != EXTREME_SET_HEADER:
        raise ValueError(f"{path}: unexpected header {header!r}")
    for _, row in rows:
        cells.append((row[0], parse_timestamp(row[1])))
    return cells
