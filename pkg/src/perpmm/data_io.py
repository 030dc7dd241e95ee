"""CSV/JSON interfaces: market-data loading with line-numbered
validation, and deterministic report writers.

Timestamps in files are ISO-8601 UTC; internally everything runs on
fractional hours since the Unix epoch.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone

import numpy as np

from .funding import FundingSeries
from .simulator import MarketPanel

__all__ = [
    "DataValidationError",
    "iso_to_hours",
    "hours_to_iso",
    "load_funding_csv",
    "load_mid_csv",
    "load_tape_csv",
    "load_panel",
    "write_funding_csv",
    "write_mid_csv",
    "write_tape_csv",
    "write_json",
    "write_per_seed_csv",
]

PER_SEED_HEADER = [
    "seed", "policy", "final_equity", "inventory_rms", "max_drawdown",
    "n_fills", "funding_paid",
]


class DataValidationError(ValueError):
    """Input-file violation with a file/line pointer for diagnostics."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def iso_to_hours(text):
    """ISO-8601 UTC timestamp to fractional hours since epoch."""
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp() / 3600.0


def hours_to_iso(hours):
    """Fractional hours since epoch to an ISO-8601 UTC timestamp."""
    dt = datetime.fromtimestamp(round(hours * 3600.0, 6), tz=timezone.utc)
    return dt.isoformat().replace("+00:00", "Z")


def _read_rows(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(path, 1, "file is empty") from None
        header = [h.strip() for h in header]
        for col in expected_header:
            if col not in header:
                raise DataValidationError(path, 1, f"missing column {col!r}")
        if header != expected_header:
            raise DataValidationError(
                path, 1, f"header must be {','.join(expected_header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise DataValidationError(
                    path, lineno, f"expected {len(expected_header)} fields, got {len(row)}"
                )
            rows.append((lineno, row))
        return rows


def _parse_ts(path, lineno, text):
    try:
        return iso_to_hours(text)
    except ValueError:
        raise DataValidationError(path, lineno, f"bad timestamp {text!r}") from None


def _parse_float(path, lineno, text, column):
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(path, lineno, f"bad {column} value {text!r}") from None
    if not np.isfinite(value):
        raise DataValidationError(path, lineno, f"{column} must be finite")
    return value


def load_funding_csv(path):
    """Load `timestamp,funding_rate` into a FundingSeries."""
    rows = _read_rows(path, ["timestamp", "funding_rate"])
    if len(rows) < 2:
        raise DataValidationError(path, 1, "need at least 2 funding observations")
    ts, values = [], []
    prev = -np.inf
    for lineno, (t_raw, f_raw) in rows:
        t = _parse_ts(path, lineno, t_raw)
        if t <= prev:
            raise DataValidationError(path, lineno, "timestamps must be strictly increasing")
        prev = t
        ts.append(t)
        values.append(_parse_float(path, lineno, f_raw, "funding_rate"))
    return FundingSeries(np.asarray(ts), np.asarray(values))


def load_mid_csv(path):
    """Load `timestamp,mid` into (hours, price) arrays."""
    rows = _read_rows(path, ["timestamp", "mid"])
    if len(rows) < 2:
        raise DataValidationError(path, 1, "need at least 2 minutes")
    ts, mid = [], []
    prev = -np.inf
    for lineno, (t_raw, m_raw) in rows:
        t = _parse_ts(path, lineno, t_raw)
        if t <= prev:
            raise DataValidationError(path, lineno, "timestamps must be strictly increasing")
        prev = t
        m = _parse_float(path, lineno, m_raw, "mid")
        if m <= 0:
            raise DataValidationError(path, lineno, "mid must be positive")
        ts.append(t)
        mid.append(m)
    return np.asarray(ts), np.asarray(mid)


def load_tape_csv(path):
    """Load `minute_ts,distance,crossed_volume` into three arrays."""
    rows = _read_rows(path, ["minute_ts", "distance", "crossed_volume"])
    ts, dist, vol = [], [], []
    for lineno, (t_raw, d_raw, v_raw) in rows:
        ts.append(_parse_ts(path, lineno, t_raw))
        d = _parse_float(path, lineno, d_raw, "distance")
        if d <= 0:
            raise DataValidationError(path, lineno, "distance must be positive")
        v = _parse_float(path, lineno, v_raw, "crossed_volume")
        if v <= 0:
            raise DataValidationError(path, lineno, "crossed_volume must be positive")
        dist.append(d)
        vol.append(v)
    return np.asarray(ts), np.asarray(dist), np.asarray(vol)


def load_panel(mid_path, funding_path, **panel_kwargs):
    """Assemble a MarketPanel from the two CSV legs."""
    minute_ts, mid = load_mid_csv(mid_path)
    series = load_funding_csv(funding_path)
    try:
        return MarketPanel(minute_ts, mid, series.timestamps, series.values, **panel_kwargs)
    except ValueError as exc:
        raise DataValidationError(mid_path, 1, str(exc)) from exc


def write_funding_csv(path, ts, values):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "funding_rate"])
        for t, v in zip(ts, values):
            writer.writerow([hours_to_iso(t), repr(float(v))])


def write_mid_csv(path, ts, mid):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "mid"])
        for t, m in zip(ts, mid):
            writer.writerow([hours_to_iso(t), repr(float(m))])


def write_tape_csv(path, ts, dist, vol):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["minute_ts", "distance", "crossed_volume"])
        for t, d, v in zip(ts, dist, vol):
            writer.writerow([hours_to_iso(t), repr(float(d)), repr(float(v))])


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def write_per_seed_csv(path, rows):
    """rows: iterables matching PER_SEED_HEADER order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PER_SEED_HEADER)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
