"""Ingestion: parse the five input CSVs and assemble the county-hour panel.

Input schemas (UTF-8, comma-separated, ISO-8601 timestamps):

    outages.csv         county_id,timestamp_utc,customers_out
    weather.csv         county_id,timestamp_utc,temp_f,precip_in,wind_kmh,
                        gust_kmh,swr_wm2,rh_pct,cloud_pct,pressure_hpa
                        (empty cell = missing)
    census.csv          county_id,lat,lon,income_usd,unemployment_pct,
                        built_pre1960,built_1960_1999,built_2000_plus
    infrastructure.csv  county_id,poles,towers,substations,transformers,lines
    storms.csv          county_id,start_utc,end_utc,event_type

Real EAGLE-I / Open-Meteo / Census exports map onto these schemas by column
rename; live API clients are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .csvio import (
    HOUR,
    QUARTER_HOUR,
    IngestError,
    check_header,
    format_float,
    format_timestamp,
    parse_timestamp,
    read_rows,
    write_rows,
)

# Cell status codes. Missing is an explicit marker, never a magic value.
PRESENT = 0
MISSING = 1
IMPUTED = 2

_STATUS_NAMES = {PRESENT: "present", MISSING: "missing", IMPUTED: "imputed"}
_STATUS_CODES = {v: k for k, v in _STATUS_NAMES.items()}

WEATHER_FIELDS = (
    "temp_f",
    "precip_in",
    "wind_kmh",
    "gust_kmh",
    "swr_wm2",
    "rh_pct",
    "cloud_pct",
    "pressure_hpa",
)

INFRA_CATEGORIES = ("poles", "towers", "substations", "transformers", "lines")

AGE_BUCKETS = ("built_pre1960", "built_1960_1999", "built_2000_plus")

OUTAGE_HEADER = ["county_id", "timestamp_utc", "customers_out"]
WEATHER_HEADER = ["county_id", "timestamp_utc", *WEATHER_FIELDS]
CENSUS_HEADER = [
    "county_id", "lat", "lon", "income_usd", "unemployment_pct", *AGE_BUCKETS,
]
INFRA_HEADER = ["county_id", *INFRA_CATEGORIES]
STORM_HEADER = ["county_id", "start_utc", "end_utc", "event_type"]


@dataclass(frozen=True)
class OutageRecord:
    county_id: str
    timestamp: datetime  # UTC, 15-minute boundary
    customers_out: int


@dataclass(frozen=True)
class WeatherRecord:
    county_id: str
    timestamp: datetime  # UTC, top of the hour
    values: tuple  # len 8, ordered as WEATHER_FIELDS, None = missing


@dataclass(frozen=True)
class CensusRecord:
    county_id: str
    latitude: float
    longitude: float
    avg_household_income: float
    unemployment_rate: float
    building_age_distribution: tuple  # fractions per AGE_BUCKETS


@dataclass(frozen=True)
class CountyStatic:
    """Static per-county vector: socio-economic plus infrastructure."""

    county_id: str
    latitude: float
    longitude: float
    avg_household_income: float
    unemployment_rate: float
    building_age_distribution: tuple
    infra_counts: dict  # category -> int
    infra_shares: dict  # category -> fraction of state total

    def static_vector(self) -> np.ndarray:
        """Socio-economic and infrastructure features as one flat vector."""
        vals = [self.avg_household_income, self.unemployment_rate]
        vals.extend(self.building_age_distribution)
        vals.extend(self.infra_shares[c] for c in INFRA_CATEGORIES)
        return np.array(vals, dtype=float)


STATIC_FEATURE_NAMES = (
    "income_usd",
    "unemployment_pct",
    *AGE_BUCKETS,
    *(f"{c}_share" for c in INFRA_CATEGORIES),
)


@dataclass(frozen=True)
class StormEvent:
    county_id: str
    start: datetime
    end: datetime
    event_type: str


class PanelDataset:
    """Rectangular county x hour grid of outages and weather.

    Values at non-present cells are stored as 0.0; the status arrays are the
    only authority on presence. Instances are treated as immutable once built
    and are safe to share read-only across threads.
    """

    def __init__(self, counties, times, outages, outage_status,
                 weather, weather_status, statics):
        self.counties = tuple(counties)
        self.times = tuple(times)
        self.outages = np.asarray(outages, dtype=float)
        self.outage_status = np.asarray(outage_status, dtype=np.int8)
        self.weather = np.asarray(weather, dtype=float)
        self.weather_status = np.asarray(weather_status, dtype=np.int8)
        self.statics = {s.county_id: s for s in statics}
        c, t = len(self.counties), len(self.times)
        if self.outages.shape != (c, t) or self.outage_status.shape != (c, t):
            raise ValueError("outage arrays do not match panel dimensions")
        if (self.weather.shape != (c, t, len(WEATHER_FIELDS))
                or self.weather_status.shape != (c, t, len(WEATHER_FIELDS))):
            raise ValueError("weather arrays do not match panel dimensions")
        for county in self.counties:
            if county not in self.statics:
                raise ValueError(f"no static record for county {county}")
        for i in range(1, t):
            if self.times[i] - self.times[i - 1] != HOUR:
                raise ValueError("time axis must advance in 1-hour steps")
        self._county_idx = {cid: i for i, cid in enumerate(self.counties)}
        self._time_idx = {ts: i for i, ts in enumerate(self.times)}

    @property
    def n_counties(self) -> int:
        return len(self.counties)

    @property
    def n_hours(self) -> int:
        return len(self.times)

    def county_index(self, county_id: str) -> int:
        return self._county_idx[county_id]

    def time_index(self, ts: datetime) -> int:
        return self._time_idx[ts]

    def copy(self) -> "PanelDataset":
        return PanelDataset(
            self.counties, self.times,
            self.outages.copy(), self.outage_status.copy(),
            self.weather.copy(), self.weather_status.copy(),
            list(self.statics.values()),
        )

    def equals(self, other: "PanelDataset") -> bool:
        """Exact (bitwise on floats) equality, used by round-trip checks."""
        return (
            self.counties == other.counties
            and self.times == other.times
            and np.array_equal(self.outages, other.outages)
            and np.array_equal(self.outage_status, other.outage_status)
            and np.array_equal(self.weather, other.weather)
            and np.array_equal(self.weather_status, other.weather_status)
            and self.statics == other.statics
        )


# ---------------------------------------------------------------------------
# Parsers. Each one validates the header, parses every row or fails with the
# 1-based row number (header is row 1), and rejects duplicate keys.
# ---------------------------------------------------------------------------

def _row_error(path, row, msg):
    raise IngestError(path, row, msg)


def _parse_county(path, row, text):
    county = text.strip()
    if not county:
        _row_error(path, row, "empty county_id")
    return county


def parse_outage_csv(path) -> list[OutageRecord]:
    """Parse 15-minute outage counts, sorted by (county_id, timestamp)."""
    records = []
    seen = set()
    rows = read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(path, None, "empty file, expected header")
    check_header(path, header, OUTAGE_HEADER)
    for rownum, cells in rows:
        if len(cells) != len(OUTAGE_HEADER):
            _row_error(path, rownum, f"expected {len(OUTAGE_HEADER)} columns")
        county = _parse_county(path, rownum, cells[0])
        try:
            ts = parse_timestamp(cells[1])
        except ValueError as exc:
            _row_error(path, rownum, str(exc))
        if (ts.minute % 15, ts.second, ts.microsecond) != (0, 0, 0):
            _row_error(path, rownum,
                       f"timestamp {cells[1]} not on a 15-minute boundary")
        try:
            count = int(cells[2])
        except ValueError:
            _row_error(path, rownum, f"customers_out {cells[2]!r} not an integer")
        if count < 0:
            _row_error(path, rownum, f"customers_out is negative ({count})")
        key = (county, ts)
        if key in seen:
            _row_error(path, rownum, f"duplicate (county, timestamp) {key}")
        seen.add(key)
        records.append(OutageRecord(county, ts, count))
    records.sort(key=lambda r: (r.county_id, r.timestamp))
    return records


def _parse_optional_float(path, row, name, text):
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        _row_error(path, row, f"{name} {text!r} not a number")


def parse_weather_csv(path) -> list[WeatherRecord]:
    """Parse hourly weather rows; empty cells become missing fields."""
    records = []
    seen = set()
    rows = read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(path, None, "empty file, expected header")
    check_header(path, header, WEATHER_HEADER)
    bounded = {"rh_pct": (0.0, 100.0), "cloud_pct": (0.0, 100.0)}
    for rownum, cells in rows:
        if len(cells) != len(WEATHER_HEADER):
            _row_error(path, rownum, f"expected {len(WEATHER_HEADER)} columns")
        county = _parse_county(path, rownum, cells[0])
        try:
            ts = parse_timestamp(cells[1])
        except ValueError as exc:
            _row_error(path, rownum, str(exc))
        if (ts.minute, ts.second, ts.microsecond) != (0, 0, 0):
            _row_error(path, rownum, f"timestamp {cells[1]} not on the hour")
        values = []
        for name, cell in zip(WEATHER_FIELDS, cells[2:]):
            val = _parse_optional_float(path, rownum, name, cell)
            if val is not None:
                lo, hi = bounded.get(name, (None, None))
                if lo is not None and not (lo <= val <= hi):
                    _row_error(path, rownum, f"{name} {val} outside [{lo}, {hi}]")
                if name == "precip_in" and val < 0:
                    _row_error(path, rownum, f"precip_in is negative ({val})")
            values.append(val)
        key = (county, ts)
        if key in seen:
            _row_error(path, rownum, f"duplicate (county, timestamp) {key}")
        seen.add(key)
        records.append(WeatherRecord(county, ts, tuple(values)))
    records.sort(key=lambda r: (r.county_id, r.timestamp))
    return records


def parse_census_csv(path) -> list[CensusRecord]:
    records = []
    seen = set()
    rows = read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(path, None, "empty file, expected header")
    check_header(path, header, CENSUS_HEADER)
    for rownum, cells in rows:
        if len(cells) != len(CENSUS_HEADER):
            _row_error(path, rownum, f"expected {len(CENSUS_HEADER)} columns")
        county = _parse_county(path, rownum, cells[0])
        if county in seen:
            _row_error(path, rownum, f"duplicate county {county}")
        seen.add(county)
        try:
            numbers = [float(c) for c in cells[1:]]
        except ValueError:
            _row_error(path, rownum, "non-numeric value")
        ages = tuple(numbers[4:])
        if any(a < 0 for a in ages):
            _row_error(path, rownum, "building age fraction is negative")
        records.append(CensusRecord(county, numbers[0], numbers[1],
                                    numbers[2], numbers[3], ages))
    records.sort(key=lambda r: r.county_id)
    return records


def parse_infrastructure_csv(path) -> dict:
    """Parse per-county infrastructure counts: county_id -> {category: int}."""
    counts = {}
    rows = read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(path, None, "empty file, expected header")
    check_header(path, header, INFRA_HEADER)
    for rownum, cells in rows:
        if len(cells) != len(INFRA_HEADER):
            _row_error(path, rownum, f"expected {len(INFRA_HEADER)} columns")
        county = _parse_county(path, rownum, cells[0])
        if county in counts:
            _row_error(path, rownum, f"duplicate county {county}")
        row = {}
        for name, cell in zip(INFRA_CATEGORIES, cells[1:]):
            try:
                val = int(cell)
            except ValueError:
                _row_error(path, rownum, f"{name} {cell!r} not an integer")
            if val < 0:
                _row_error(path, rownum, f"{name} is negative ({val})")
            row[name] = val
        counts[county] = row
    return counts


def parse_storm_events_csv(path) -> list[StormEvent]:
    records = []
    rows = read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(path, None, "empty file, expected header")
    check_header(path, header, STORM_HEADER)
    for rownum, cells in rows:
        if len(cells) != len(STORM_HEADER):
            _row_error(path, rownum, f"expected {len(STORM_HEADER)} columns")
        county = _parse_county(path, rownum, cells[0])
        try:
            start = parse_timestamp(cells[1])
            end = parse_timestamp(cells[2])
        except ValueError as exc:
            _row_error(path, rownum, str(exc))
        if start > end:
            _row_error(path, rownum, "storm start after end")
        records.append(StormEvent(county, start, end, cells[3].strip()))
    records.sort(key=lambda r: (r.county_id, r.start, r.end))
    return records


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------

def resample_outages_hourly(records) -> dict:
    """Collapse 15-minute outage readings to hourly worst-case values.

    Each hour takes the MAX of its up-to-4 quarter-hour readings (severity is
    the prediction target, so the worst quarter-hour represents the hour).
    Hours with no readings are simply absent from the result.

    Returns {county_id: {hour_start_utc: customers_out}}.
    """
    hourly: dict = {}
    for rec in records:
        hour = rec.timestamp.replace(minute=0, second=0, microsecond=0)
        per_county = hourly.setdefault(rec.county_id, {})
        prev = per_county.get(hour)
        if prev is None or rec.customers_out > prev:
            per_county[hour] = rec.customers_out
    return hourly


def normalize_infrastructure(counts: dict) -> dict:
    """Column-wise normalization: each county's count over the state total.

    counts: {county_id: {category: int}}. Returns the same shape with shares.
    Raises ValueError when a category has zero total across all counties.
    """
    if not counts:
        raise ValueError("no infrastructure counts given")
    totals = {cat: 0 for cat in INFRA_CATEGORIES}
    for row in counts.values():
        for cat in INFRA_CATEGORIES:
            totals[cat] += row[cat]
    for cat in INFRA_CATEGORIES:
        if totals[cat] == 0:
            raise ValueError(f"zero column: {cat}")
    return {
        county: {cat: row[cat] / totals[cat] for cat in INFRA_CATEGORIES}
        for county, row in counts.items()
    }


def build_statics(census, infra_counts: dict) -> list[CountyStatic]:
    """Join census records with infrastructure counts into CountyStatic rows."""
    census_ids = {r.county_id for r in census}
    infra_ids = set(infra_counts)
    if census_ids != infra_ids:
        missing = sorted(census_ids ^ infra_ids)
        raise ValueError(
            f"census and infrastructure county sets differ: {missing}")
    shares = normalize_infrastructure(infra_counts)
    statics = []
    for rec in sorted(census, key=lambda r: r.county_id):
        statics.append(CountyStatic(
            county_id=rec.county_id,
            latitude=rec.latitude,
            longitude=rec.longitude,
            avg_household_income=rec.avg_household_income,
            unemployment_rate=rec.unemployment_rate,
            building_age_distribution=rec.building_age_distribution,
            infra_counts=dict(infra_counts[rec.county_id]),
            infra_shares=shares[rec.county_id],
        ))
    return statics


def build_panel(outage_records, weather_records, statics,
                start: datetime, end: datetime) -> PanelDataset:
    """Assemble the rectangular panel over [start, end) hours.

    Outage records are resampled 15-min -> hourly max on the way in. Records
    outside the time range are ignored. Every dynamic county_id must have a
    static record.
    """
    if start.minute or start.second or start.microsecond:
        raise ValueError("panel start must be on the hour")
    if end <= start:
        raise ValueError("panel end must be after start")
    statics = sorted(statics, key=lambda s: s.county_id)
    known = {s.county_id for s in statics}
    unknown = sorted(
        {r.county_id for r in outage_records if r.county_id not in known}
        | {r.county_id for r in weather_records if r.county_id not in known})
    if unknown:
        raise ValueError(f"dynamic data references unknown counties: {unknown}")

    counties = [s.county_id for s in statics]
    n_hours = int((end - start) / HOUR)
    times = [start + i * HOUR for i in range(n_hours)]
    c_idx = {cid: i for i, cid in enumerate(counties)}
    t_idx = {ts: i for i, ts in enumerate(times)}

    outages = np.zeros((len(counties), n_hours))
    outage_status = np.full((len(counties), n_hours), MISSING, dtype=np.int8)
    weather = np.zeros((len(counties), n_hours, len(WEATHER_FIELDS)))
    weather_status = np.full(weather.shape, MISSING, dtype=np.int8)

    for county, per_hour in resample_outages_hourly(outage_records).items():
        ci = c_idx[county]
        for hour, value in per_hour.items():
            ti = t_idx.get(hour)
            if ti is not None:
                outages[ci, ti] = value
                outage_status[ci, ti] = PRESENT

    for rec in weather_records:
        ti = t_idx.get(rec.timestamp)
        if ti is None:
            continue
        ci = c_idx[rec.county_id]
        for f, val in enumerate(rec.values):
            if val is not None:
                weather[ci, ti, f] = val
                weather_status[ci, ti, f] = PRESENT

    return PanelDataset(counties, times, outages, outage_status,
                        weather, weather_status, statics)


# ---------------------------------------------------------------------------
# Panel artifact layout (cells file + statics file). Floats use repr so the
# round trip is bitwise exact.
# ---------------------------------------------------------------------------

PANEL_CELL_HEADER = ["county_id", "timestamp_utc", "customers_out",
                     "customers_out_status"]
for _f in WEATHER_FIELDS:
    PANEL_CELL_HEADER.extend([_f, f"{_f}_status"])

PANEL_STATIC_HEADER = CENSUS_HEADER + list(INFRA_CATEGORIES) + [
    f"{c}_share" for c in INFRA_CATEGORIES
]


def _cell_pair(value: float, status: int) -> tuple[str, str]:
    text = "" if status == MISSING else format_float(value)
    return text, _STATUS_NAMES[status]


def write_panel_csv(panel: PanelDataset, cells_path, statics_path) -> None:
    rows = []
    for ci, county in enumerate(panel.counties):
        for ti, ts in enumerate(panel.times):
            row = [county, format_timestamp(ts)]
            row.extend(_cell_pair(panel.outages[ci, ti],
                                  panel.outage_status[ci, ti]))
            for f in range(len(WEATHER_FIELDS)):
                row.extend(_cell_pair(panel.weather[ci, ti, f],
                                      panel.weather_status[ci, ti, f]))
            rows.append(row)
    write_rows(cells_path, PANEL_CELL_HEADER, rows)

    srows = []
    for county in panel.counties:
        s = panel.statics[county]
        srow = [county, format_float(s.latitude), format_float(s.longitude),
                format_float(s.avg_household_income),
                format_float(s.unemployment_rate)]
        srow.extend(format_float(a) for a in s.building_age_distribution)
        srow.extend(str(s.infra_counts[c]) for c in INFRA_CATEGORIES)
        srow.extend(format_float(s.infra_shares[c]) for c in INFRA_CATEGORIES)
        srows.append(srow)
    write_rows(statics_path, PANEL_STATIC_HEADER, srows)


def _parse_cell_pair(path, rownum, name, text, status_text):
    status = _STATUS_CODES.get(status_text)
    if status is None:
        _row_error(path, rownum, f"unknown status {status_text!r} for {name}")
    if status == MISSING:
        if text != "":
            _row_error(path, rownum, f"missing {name} cell carries a value")
        return 0.0, status
    try:
        return float(text), status
    except ValueError:
        _row_error(path, rownum, f"{name} {text!r} not a number")


def read_panel_csv(cells_path, statics_path) -> PanelDataset:
    statics = []
    rows = read_rows(statics_path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(statics_path, None, "empty file, expected header")
    check_header(statics_path, header, PANEL_STATIC_HEADER)
    for rownum, cells in rows:
        if len(cells) != len(PANEL_STATIC_HEADER):
            _row_error(statics_path, rownum, "wrong column count")
        county = _parse_county(statics_path, rownum, cells[0])
        try:
            nums = [float(c) for c in cells[1:8]]
            counts = [int(c) for c in cells[8:13]]
            shares = [float(c) for c in cells[13:18]]
        except ValueError:
            _row_error(statics_path, rownum, "non-numeric value")
        statics.append(CountyStatic(
            county_id=county, latitude=nums[0], longitude=nums[1],
            avg_household_income=nums[2], unemployment_rate=nums[3],
            building_age_distribution=tuple(nums[4:7]),
            infra_counts=dict(zip(INFRA_CATEGORIES, counts)),
            infra_shares=dict(zip(INFRA_CATEGORIES, shares)),
        ))

    by_county: dict = {}
    rows = read_rows(cells_path)
    try:
        _, header = next(rows)
    except StopIteration:
        _row_error(cells_path, None, "empty file, expected header")
    check_header(cells_path, header, PANEL_CELL_HEADER)
    for rownum, cells in rows:
        if len(cells) != len(PANEL_CELL_HEADER):
            _row_error(cells_path, rownum, "wrong column count")
        county = _parse_county(cells_path, rownum, cells[0])
        try:
            ts = parse_timestamp(cells[1])
        except ValueError as exc:
            _row_error(cells_path, rownum, str(exc))
        outage = _parse_cell_pair(cells_path, rownum, "customers_out",
                                  cells[2], cells[3])
        wx = []
        for f, name in enumerate(WEATHER_FIELDS):
            wx.append(_parse_cell_pair(cells_path, rownum, name,
                                       cells[4 + 2 * f], cells[5 + 2 * f]))
        by_county.setdefault(county, {})[ts] = (outage, wx)

    counties = sorted(by_county)
    if not counties:
        _row_error(cells_path, None, "no panel cells")
    times = sorted(by_county[counties[0]])
    for county in counties:
        if sorted(by_county[county]) != times:
            _row_error(cells_path, None,
                       f"panel not rectangular at county {county}")

    shape = (len(counties), len(times))
    outages = np.zeros(shape)
    outage_status = np.zeros(shape, dtype=np.int8)
    weather = np.zeros(shape + (len(WEATHER_FIELDS),))
    weather_status = np.zeros(weather.shape, dtype=np.int8)
    for ci, county in enumerate(counties):
        for ti, ts in enumerate(times):
            (oval, ostat), wx = by_county[county][ts]
            outages[ci, ti] = oval
            outage_status[ci, ti] = ostat
            for f, (wval, wstat) in enumerate(wx):
                weather[ci, ti, f] = wval
                weather_status[ci, ti, f] = wstat

    return PanelDataset(counties, times, outages, outage_status,
                        weather, weather_status, statics)
