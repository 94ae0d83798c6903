"""Shared CSV and timestamp helpers for the pipeline file formats.

All artifacts are UTF-8 comma-separated files with ISO-8601 UTC timestamps.
Floats are written with ``repr`` so that re-parsing recovers the exact same
IEEE-754 value (bitwise round trips are part of the artifact contract).
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator

HOUR = timedelta(hours=1)
QUARTER_HOUR = timedelta(minutes=15)


class IngestError(ValueError):
    """Raised for malformed input files; carries the offending row number."""

    def __init__(self, path, row: int | None, message: str):
        self.path = str(path)
        self.row = row
        where = f"{self.path}" if row is None else f"{self.path}, row {row}"
        super().__init__(f"{where}: {message}")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    Accepts a trailing ``Z``, an explicit offset, or a naive value (taken
    as UTC).
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"malformed timestamp {text!r}") from None
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def format_float(value: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(value))


def read_rows(path) -> Iterator[tuple[int, list[str]]]:
    """Yield (1-based row number, cells) for every row of a CSV file.

    Row 1 is the header; callers consume it first and treat the rest as data.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        for i, cells in enumerate(csv.reader(fh), start=1):
            yield i, cells


def check_header(path, header: list[str], expected: list[str]) -> None:
    if [h.strip() for h in header] != list(expected):
        raise IngestError(
            path, 1, f"header {header!r} does not match schema {expected!r}"
        )


def write_rows(path, header: list[str], rows: Iterable[Iterable[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
