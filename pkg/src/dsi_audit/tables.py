"""Columnar views of parsed datasets.

Record dataclasses are convenient but too heavy for the multimillion-row
joins this toolkit runs, so analyses operate on ``DetectionTable``: plain
numpy columns, immutable by convention after construction. The polars-backed
``load_detections_table`` is the bulk path for large files; it accepts the
same wire format as :func:`dsi_audit.records.parse_detections` and agrees
with it record for record on valid input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, UsageError
from .records import (
    DetectionRecord,
    EventRecord,
    GeoPoint,
    ParseResult,
    RecordError,
    Timestamp,
)

MICROS_PER_MINUTE = 60_000_000
MICROS_PER_DAY = 86_400_000_000


@dataclass(slots=True)
class DetectionTable:
    """Column-oriented detection dataset, canonically ordered by (ts, image_id)."""

    image_id: np.ndarray  # object array of str
    label: np.ndarray  # object array of str
    lat: np.ndarray  # float64
    lon: np.ndarray  # float64
    conf: np.ndarray  # float64
    ts_micros: np.ndarray  # int64, UTC microseconds since the Unix epoch
    offset_minutes: np.ndarray  # int32, capture-local UTC offset
    attrs: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.image_id)
        for name in ("label", "lat", "lon", "conf", "ts_micros", "offset_minutes"):
            if len(getattr(self, name)) != n:
                raise UsageError(f"column {name} length mismatch")
        for key, col in self.attrs.items():
            if len(col) != n:
                raise UsageError(f"attrs[{key!r}] length mismatch")

    def __len__(self) -> int:
        return len(self.image_id)

    @property
    def wall_micros(self) -> np.ndarray:
        """Capture-local wall-clock labels as naive microseconds."""
        return self.ts_micros + self.offset_minutes.astype(np.int64) * MICROS_PER_MINUTE

    def wall_time_of_day_micros(self) -> np.ndarray:
        return self.wall_micros % MICROS_PER_DAY

    def select(self, index) -> "DetectionTable":
        return DetectionTable(
            self.image_id[index],
            self.label[index],
            self.lat[index],
            self.lon[index],
            self.conf[index],
            self.ts_micros[index],
            self.offset_minutes[index],
            {k: v[index] for k, v in self.attrs.items()},
        )

    def canonical_order(self) -> np.ndarray:
        """Sort order by (ts, image_id); stable regardless of input order."""
        return np.lexsort((self.image_id, self.ts_micros))

    def sorted_canonical(self) -> "DetectionTable":
        return self.select(self.canonical_order())

    def record(self, i: int) -> DetectionRecord:
        attrs = None
        if self.attrs:
            attrs = {
                k: float(v[i]) for k, v in self.attrs.items() if not np.isnan(v[i])
            } or None
        return DetectionRecord(
            str(self.image_id[i]),
            GeoPoint(float(self.lat[i]), float(self.lon[i])),
            Timestamp.from_micros(int(self.ts_micros[i]), int(self.offset_minutes[i])),
            str(self.label[i]),
            float(self.conf[i]),
            attrs,
        )

    def to_records(self) -> list[DetectionRecord]:
        return [self.record(i) for i in range(len(self))]

    @classmethod
    def from_records(cls, records: Sequence[DetectionRecord]) -> "DetectionTable":
        n = len(records)
        image_id = np.empty(n, dtype=object)
        label = np.empty(n, dtype=object)
        lat = np.empty(n, dtype=np.float64)
        lon = np.empty(n, dtype=np.float64)
        conf = np.empty(n, dtype=np.float64)
        ts_micros = np.empty(n, dtype=np.int64)
        offset = np.empty(n, dtype=np.int32)
        attr_keys: set[str] = set()
        for r in records:
            if r.attrs:
                attr_keys.update(r.attrs)
        attrs = {k: np.full(n, np.nan) for k in sorted(attr_keys)}
        for i, r in enumerate(records):
            image_id[i] = r.image_id
            label[i] = r.label
            lat[i] = r.point.lat
            lon[i] = r.point.lon
            conf[i] = r.conf
            ts_micros[i] = r.ts.micros
            offset[i] = r.ts.utc_offset_minutes
            if r.attrs:
                for k, v in r.attrs.items():
                    attrs[k][i] = v
        return cls(image_id, label, lat, lon, conf, ts_micros, offset, attrs)


@dataclass(slots=True)
class EventTable:
    """Column-oriented event dataset."""

    event_id: np.ndarray
    category: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    ts_micros: np.ndarray
    offset_minutes: np.ndarray

    def __len__(self) -> int:
        return len(self.event_id)

    def record(self, i: int) -> EventRecord:
        return EventRecord(
            str(self.event_id[i]),
            GeoPoint(float(self.lat[i]), float(self.lon[i])),
            Timestamp.from_micros(int(self.ts_micros[i]), int(self.offset_minutes[i])),
            str(self.category[i]),
        )

    @classmethod
    def from_records(cls, records: Sequence[EventRecord]) -> "EventTable":
        return cls(
            np.array([r.event_id for r in records], dtype=object),
            np.array([r.category for r in records], dtype=object),
            np.array([r.point.lat for r in records], dtype=np.float64),
            np.array([r.point.lon for r in records], dtype=np.float64),
            np.array([r.ts.micros for r in records], dtype=np.int64),
            np.array([r.ts.utc_offset_minutes for r in records], dtype=np.int32),
        )


def as_detection_table(detections) -> DetectionTable:
    """Validation helper: accept a DetectionTable or any DetectionRecord iterable."""
    if isinstance(detections, DetectionTable):
        return detections
    if isinstance(detections, Iterable):
        records = list(detections)
        if all(isinstance(r, DetectionRecord) for r in records):
            return DetectionTable.from_records(records)
    raise UsageError(
        "expected a DetectionTable or an iterable of DetectionRecord, "
        f"got {type(detections).__name__}"
    )


def as_event_table(events) -> EventTable:
    if isinstance(events, EventTable):
        return events
    if isinstance(events, EventRecord):
        return EventTable.from_records([events])
    if isinstance(events, Iterable):
        records = list(events)
        if all(isinstance(r, EventRecord) for r in records):
            return EventTable.from_records(records)
    raise UsageError(
        f"expected an EventTable or EventRecord iterable, got {type(events).__name__}"
    )


def parse_local_time(text: str) -> time:
    """Parse HH:MM into a time of day."""
    try:
        hours, minutes = text.strip().split(":")
        return time(int(hours), int(minutes))
    except (ValueError, AttributeError):
        raise UsageError(f"bad time of day {text!r}, expected HH:MM") from None


_TS_FORMATS = (
    # RFC3339 with offset; polars "%.f" tolerates missing fractions
    "%Y-%m-%dT%H:%M:%S%.f%:z",
    "%Y-%m-%dT%H:%M:%S%.f%z",
)


def load_detections_table(path: str | Path) -> tuple[DetectionTable, list[RecordError]]:
    """Bulk NDJSON loader for large detection files (lenient semantics).

    Vectorized via polars; invalid rows are dropped and reported by line
    number. The strict-format timestamp layouts accepted here are the ones
    the canonical serializer emits (ISO-8601 with numeric offset or 'Z');
    for odd legacy layouts fall back to the record-level parser.
    """
    import polars as pl

    schema = {
        "image_id": pl.Utf8,
        "ts": pl.Utf8,
        "lat": pl.Float64,
        "lon": pl.Float64,
        "label": pl.Utf8,
        "conf": pl.Float64,
    }
    try:
        frame = pl.read_ndjson(path, schema=schema, ignore_errors=True)
    except (OSError, pl.exceptions.PolarsError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    # re-scan for the optional attrs column; a second pass is cheaper than
    # inferring a union schema on the hot path
    attrs_frame = None
    try:
        probe = pl.read_ndjson(path, n_rows=8)
        if "attrs" in probe.columns:
            attrs_frame = pl.read_ndjson(path, ignore_errors=True).select("attrs")
    except pl.exceptions.PolarsError:
        attrs_frame = None

    ts_norm = (
        pl.col("ts")
        .str.strip_chars()
        .str.replace(r"[zZ]$", "+00:00")
    )
    parsed = frame.with_columns(
        ts_norm.str.to_datetime(
            "%Y-%m-%dT%H:%M:%S%.f%z", strict=False, time_unit="us", time_zone="UTC"
        ).alias("_instant"),
        ts_norm.str.extract(r"([+-]\d{2}):?(\d{2})$", 1)
        .cast(pl.Int32, strict=False)
        .alias("_oh"),
        ts_norm.str.extract(r"([+-]\d{2}):?(\d{2})$", 2)
        .cast(pl.Int32, strict=False)
        .alias("_om"),
    )
    ts_null = parsed["_instant"].is_null() | parsed["_oh"].is_null() | parsed["_om"].is_null()
    ts_null = ts_null.to_numpy(allow_copy=True)
    instant = parsed["_instant"].dt.epoch("us").fill_null(0).to_numpy(allow_copy=True)
    oh = parsed["_oh"].fill_null(0).to_numpy(allow_copy=True).astype(np.int64)
    om = parsed["_om"].fill_null(0).to_numpy(allow_copy=True).astype(np.int64)
    lat = parsed["lat"].fill_null(float("nan")).to_numpy(allow_copy=True)
    lon = parsed["lon"].fill_null(float("nan")).to_numpy(allow_copy=True)
    conf = parsed["conf"].fill_null(float("nan")).to_numpy(allow_copy=True)
    ids_null = parsed["image_id"].is_null().to_numpy(allow_copy=True)
    labels_null = parsed["label"].is_null().to_numpy(allow_copy=True)

    offset = np.where(oh >= 0, oh * 60 + om, oh * 60 - om).astype(np.int32)
    with np.errstate(invalid="ignore"):
        valid = (
            ~ids_null
            & ~labels_null
            & ~ts_null
            & np.isfinite(lat)
            & (lat >= -90.0)
            & (lat <= 90.0)
            & np.isfinite(lon)
            & (lon >= -180.0)
            & (lon <= 180.0)
            & np.isfinite(conf)
            & (conf >= 0.0)
            & (conf <= 1.0)
            & (np.abs(offset) <= 14 * 60)
        )

    errors = [
        RecordError(int(i) + 1, None, "invalid row (bulk loader)")
        for i in np.flatnonzero(~valid)
    ]
    table = DetectionTable(
        parsed["image_id"].to_numpy(allow_copy=True)[valid],
        parsed["label"].to_numpy(allow_copy=True)[valid],
        lat[valid],
        lon[valid],
        conf[valid],
        instant[valid].astype(np.int64),
        offset[valid],
        _attrs_columns(attrs_frame, valid),
    )
    return table, errors


def _attrs_columns(attrs_frame, valid: np.ndarray) -> dict[str, np.ndarray]:
    if attrs_frame is None:
        return {}
    import polars as pl

    col = attrs_frame["attrs"]
    if col.dtype != pl.Struct:
        return {}
    out = {}
    unnested = attrs_frame.unnest("attrs")
    for name in sorted(unnested.columns):
        out[name] = (
            unnested[name].cast(pl.Float64, strict=False).to_numpy(allow_copy=True)[valid]
        )
    return out


def write_detections_table(table: DetectionTable, path: str | Path) -> None:
    """Write a table back to canonical NDJSON, preserving row order."""
    import polars as pl

    offsets = table.offset_minutes.astype(np.int64)
    frame = pl.DataFrame(
        {
            "image_id": table.image_id.astype(str),
            "_wall": table.ts_micros + offsets * MICROS_PER_MINUTE,
            "_oh": offsets,
            "lat": table.lat,
            "lon": table.lon,
            "label": table.label.astype(str),
            "conf": table.conf,
        }
    )
    sign = pl.when(pl.col("_oh") < 0).then(pl.lit("-")).otherwise(pl.lit("+"))
    mag = pl.col("_oh").abs()
    frame = frame.with_columns(
        (
            pl.from_epoch("_wall", time_unit="us")
            .dt.to_string("%Y-%m-%dT%H:%M:%S%.6f")
            .str.replace(r"\.000000$", "")
            + sign
            + (mag // 60).cast(pl.Utf8).str.zfill(2)
            + pl.lit(":")
            + (mag % 60).cast(pl.Utf8).str.zfill(2)
        ).alias("ts")
    ).select("image_id", "ts", "lat", "lon", "label", "conf")
    if table.attrs:
        attrs = (
            pl.DataFrame({k: v for k, v in sorted(table.attrs.items())})
            .with_columns(pl.all().fill_nan(None))
            .to_struct("attrs")
        )
        frame = frame.with_columns(attrs)
    frame.write_ndjson(path)


def table_from_parse(result: ParseResult) -> DetectionTable:
    return DetectionTable.from_records(result.records)
