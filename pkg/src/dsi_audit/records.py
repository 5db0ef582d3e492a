"""Domain records and their wire formats.

This module is the single source of truth for the three file formats the
toolkit speaks:

* detections: line-delimited JSON, one object per line, fields exactly
  ``image_id, ts, lat, lon, label, conf`` plus an optional ``attrs`` object
  of string -> number;
* events: CSV with header ``event_id,ts,lat,lon,category`` (any column
  order, RFC-4180 quoting);
* annotations: line-delimited JSON ``image_id, predicted, actual`` plus an
  optional ``decoy_note``.

Timestamps are ISO-8601 with a UTC offset. Instants are stored in UTC and
the capture-local offset is preserved verbatim, because wall-clock binning
needs both.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Iterator

from .errors import DataError, UsageError

MAX_UTC_OFFSET_MINUTES = 14 * 60
_UTC = timezone.utc
_EPOCH_DT = datetime(1970, 1, 1, tzinfo=_UTC)
_MICRO = timedelta(microseconds=1)
_FRACTION_RE = re.compile(r"\.(\d+)")

DETECTION_FIELDS = ("image_id", "ts", "lat", "lon", "label", "conf")
EVENT_COLUMNS = ("event_id", "ts", "lat", "lon", "category")
ANNOTATION_FIELDS = ("image_id", "predicted", "actual")


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """WGS84 coordinate in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise DataError("coordinates must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"lon {self.lon} outside [-180, 180]")


@dataclass(frozen=True, slots=True)
class Timestamp:
    """A UTC instant plus the capture-local UTC offset recorded with it."""

    instant: datetime
    utc_offset_minutes: int

    def __post_init__(self):
        if self.instant.tzinfo is None:
            raise DataError("instant must be timezone-aware")
        if self.instant.utcoffset() != timedelta(0):
            object.__setattr__(self, "instant", self.instant.astimezone(_UTC))
        if abs(self.utc_offset_minutes) > MAX_UTC_OFFSET_MINUTES:
            raise DataError(
                f"utc offset {self.utc_offset_minutes} min outside [-14h, +14h]"
            )

    @property
    def micros(self) -> int:
        """Microseconds since the Unix epoch, exact integer arithmetic."""
        return (self.instant - _EPOCH_DT) // _MICRO

    @property
    def wall_label(self) -> datetime:
        """Naive capture-local wall-clock label (instant shifted by the offset)."""
        return (self.instant + timedelta(minutes=self.utc_offset_minutes)).replace(
            tzinfo=None
        )

    def isoformat(self) -> str:
        tz = timezone(timedelta(minutes=self.utc_offset_minutes))
        return self.instant.astimezone(tz).isoformat()

    @classmethod
    def from_micros(cls, micros: int, utc_offset_minutes: int) -> "Timestamp":
        return cls(_EPOCH_DT + micros * _MICRO, utc_offset_minutes)

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        dt = parse_iso_instant(text)
        offset = dt.utcoffset()
        seconds = offset.total_seconds()
        if seconds != int(seconds) or int(seconds) % 60 != 0:
            raise DataError(f"offset in {text!r} is not a whole number of minutes")
        return cls(dt, int(seconds) // 60)


def parse_iso_instant(text: str) -> datetime:
    """Parse an ISO-8601 timestamp that carries an explicit UTC offset."""
    if not isinstance(text, str) or not text:
        raise DataError("timestamp must be a non-empty string")
    normalized = text.strip()
    if normalized.endswith(("Z", "z")):
        normalized = normalized[:-1] + "+00:00"
    # fromisoformat on 3.10 only takes 3- or 6-digit fractions; pad to 6
    match = _FRACTION_RE.search(normalized)
    if match and len(match.group(1)) not in (3, 6):
        digits = match.group(1)[:6].ljust(6, "0")
        normalized = normalized[: match.start(1)] + digits + normalized[match.end(1):]
    try:
        dt = datetime.fromisoformat(normalized)
    except ValueError as exc:
        raise DataError(f"unparsable timestamp {text!r}: {exc}") from None
    if dt.tzinfo is None:
        raise DataError(f"timestamp {text!r} has no UTC offset")
    return dt


@dataclass(frozen=True, slots=True)
class Epoch:
    """Half-open dataset time range [start, end)."""

    start: Timestamp
    end: Timestamp

    def __post_init__(self):
        if self.end.micros <= self.start.micros:
            raise UsageError("epoch end must be after epoch start")

    @property
    def span_micros(self) -> int:
        return self.end.micros - self.start.micros

    def contains(self, ts: Timestamp) -> bool:
        return self.start.micros <= ts.micros < self.end.micros


class GroupKind(enum.Enum):
    SELF_ORGANIZED = "SelfOrganized"
    ROLE_BASED = "RoleBased"
    CLUSTER = "Cluster"
    ATTRIBUTE_BASED = "AttributeBased"


@dataclass(frozen=True, slots=True)
class GroupClass:
    """One row of the four-kind identifiable-group typology."""

    kind: GroupKind
    name: str

    def __post_init__(self):
        if not isinstance(self.kind, GroupKind):
            raise DataError(f"unknown group kind {self.kind!r}")
        if not self.name:
            raise DataError("group name must be non-empty")


@dataclass(frozen=True, slots=True)
class DetectionRecord:
    """One geotagged, timestamped, confidence-scored label inference."""

    image_id: str
    point: GeoPoint
    ts: Timestamp
    label: str
    conf: float
    attrs: dict[str, float] | None = None

    def to_json_obj(self) -> dict:
        obj = {
            "image_id": self.image_id,
            "ts": self.ts.isoformat(),
            "lat": self.point.lat,
            "lon": self.point.lon,
            "label": self.label,
            "conf": self.conf,
        }
        if self.attrs is not None:
            obj["attrs"] = {k: self.attrs[k] for k in sorted(self.attrs)}
        return obj


@dataclass(frozen=True, slots=True)
class AnnotationRecord:
    image_id: str
    predicted: bool
    actual: bool
    decoy_note: str | None = None

    def to_json_obj(self) -> dict:
        obj = {
            "image_id": self.image_id,
            "predicted": self.predicted,
            "actual": self.actual,
        }
        if self.decoy_note is not None:
            obj["decoy_note"] = self.decoy_note
        return obj


@dataclass(frozen=True, slots=True)
class EventRecord:
    """A known real-world event with a place and a time."""

    event_id: str
    point: GeoPoint
    ts: Timestamp
    category: str


@dataclass(frozen=True, slots=True)
class RecordError:
    """One rejected input line and why it was rejected."""

    line: int
    field: str | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}"
        if self.field:
            where += f", field {self.field!r}"
        return f"{where}: {self.message}"


@dataclass(slots=True)
class ParseResult:
    records: list
    errors: list[RecordError] = field(default_factory=list)

    def raise_on_error(self):
        if self.errors:
            raise DataError(str(self.errors[0]))
        return self


def _iter_lines(stream: Iterable[str] | IO[str]) -> Iterator[str]:
    for line in stream:
        yield line.rstrip("\n").rstrip("\r")


def _require_number(obj: dict, key: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _FieldError(key, f"{key} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise _FieldError(key, f"{key} must be finite")
    return value


class _FieldError(Exception):
    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field_name = field_name


def _parse_detection_line(text: str, epoch: Epoch | None) -> DetectionRecord:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _FieldError("", f"malformed JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise _FieldError("", "line is not a JSON object")
    missing = [k for k in DETECTION_FIELDS if k not in obj]
    if missing:
        raise _FieldError(missing[0], f"missing field {missing[0]!r}")
    unknown = set(obj) - set(DETECTION_FIELDS) - {"attrs"}
    if unknown:
        key = sorted(unknown)[0]
        raise _FieldError(key, f"unknown field {key!r}")
    image_id = obj["image_id"]
    if not isinstance(image_id, str) or not image_id:
        raise _FieldError("image_id", "image_id must be a non-empty string")
    label = obj["label"]
    if not isinstance(label, str) or not label:
        raise _FieldError("label", "label must be a non-empty string")
    lat = _require_number(obj, "lat")
    lon = _require_number(obj, "lon")
    conf = _require_number(obj, "conf")
    if not 0.0 <= conf <= 1.0:
        raise _FieldError("conf", f"conf {conf} outside [0, 1]")
    try:
        point = GeoPoint(lat, lon)
    except DataError as exc:
        bad = "lat" if "lat" in str(exc) else "lon"
        raise _FieldError(bad, str(exc)) from None
    try:
        ts = Timestamp.parse(obj["ts"]) if isinstance(obj["ts"], str) else None
    except DataError as exc:
        raise _FieldError("ts", str(exc)) from None
    if ts is None:
        raise _FieldError("ts", "ts must be a string")
    if epoch is not None and not epoch.contains(ts):
        raise _FieldError("ts", "timestamp outside the configured epoch")
    attrs = None
    if "attrs" in obj:
        raw = obj["attrs"]
        if not isinstance(raw, dict):
            raise _FieldError("attrs", "attrs must be an object")
        attrs = {}
        for key, value in raw.items():
            if value is None:  # null marks an absent attribute (columnar writers)
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise _FieldError("attrs", f"attrs[{key!r}] must be a number")
            value = float(value)
            if not math.isfinite(value):
                raise _FieldError("attrs", f"attrs[{key!r}] must be finite")
            attrs[key] = value
        attrs = attrs or None
    return DetectionRecord(image_id, point, ts, label, conf, attrs)


def parse_detections(
    stream: Iterable[str] | IO[str],
    mode: str = "strict",
    epoch: Epoch | None = None,
) -> ParseResult:
    """Parse line-delimited detection documents.

    Strict mode stops at the first invalid line (including a duplicate
    image_id+label pair). Lenient mode never aborts: every line becomes
    either a record or a reported error, in input order.
    """
    if mode not in ("strict", "lenient"):
        raise UsageError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    records: list[DetectionRecord] = []
    errors: list[RecordError] = []
    seen: set[tuple[str, str]] = set()
    for line_no, text in enumerate(_iter_lines(stream), start=1):
        if not text.strip():
            err = RecordError(line_no, None, "empty line")
            errors.append(err)
            if mode == "strict":
                break
            continue
        try:
            record = _parse_detection_line(text, epoch)
        except _FieldError as exc:
            errors.append(RecordError(line_no, exc.field_name or None, str(exc)))
            if mode == "strict":
                break
            continue
        key = (record.image_id, record.label)
        if mode == "strict" and key in seen:
            errors.append(
                RecordError(line_no, "image_id", f"duplicate image_id+label {key!r}")
            )
            break
        seen.add(key)
        records.append(record)
    return ParseResult(records, errors)


def serialize_detections(records: Iterable[DetectionRecord]) -> Iterator[str]:
    """Canonical detection lines: fixed field order, shortest float repr."""
    for record in records:
        yield json.dumps(record.to_json_obj(), ensure_ascii=False)


def parse_events(
    stream: Iterable[str] | IO[str],
    mode: str = "strict",
    epoch: Epoch | None = None,
) -> ParseResult:
    """Parse the events CSV. Columns are matched by header name."""
    if mode not in ("strict", "lenient"):
        raise UsageError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        return ParseResult([], [RecordError(1, None, "missing header row")])
    missing = [c for c in EVENT_COLUMNS if c not in reader.fieldnames]
    if missing:
        return ParseResult(
            [], [RecordError(1, missing[0], f"missing column {missing[0]!r}")]
        )
    records: list[EventRecord] = []
    errors: list[RecordError] = []
    seen_ids: set[str] = set()
    for row_no, row in enumerate(reader, start=2):
        try:
            event_id = (row["event_id"] or "").strip()
            if not event_id:
                raise _FieldError("event_id", "event_id must be non-empty")
            if event_id in seen_ids:
                raise _FieldError("event_id", f"duplicate event_id {event_id!r}")
            coords = {}
            for col in ("lat", "lon"):
                try:
                    coords[col] = float(row[col])
                except (TypeError, ValueError):
                    raise _FieldError(col, f"bad coordinate {row[col]!r}") from None
            try:
                point = GeoPoint(coords["lat"], coords["lon"])
            except DataError as exc:
                bad = "lat" if "lat" in str(exc) else "lon"
                raise _FieldError(bad, str(exc)) from None
            try:
                ts = Timestamp.parse(row["ts"] or "")
            except DataError as exc:
                raise _FieldError("ts", str(exc)) from None
            if epoch is not None and not epoch.contains(ts):
                raise _FieldError("ts", "timestamp outside the configured epoch")
            category = (row["category"] or "").strip()
            if not category:
                raise _FieldError("category", "category must be non-empty")
        except _FieldError as exc:
            errors.append(RecordError(row_no, exc.field_name, str(exc)))
            if mode == "strict":
                break
            continue
        seen_ids.add(event_id)
        records.append(EventRecord(event_id, point, ts, category))
    return ParseResult(records, errors)


def serialize_events(records: Iterable[EventRecord]) -> Iterator[str]:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="")
    writer.writerow(EVENT_COLUMNS)
    yield buf.getvalue()
    for record in records:
        buf.seek(0)
        buf.truncate()
        writer.writerow(
            [
                record.event_id,
                record.ts.isoformat(),
                repr(record.point.lat),
                repr(record.point.lon),
                record.category,
            ]
        )
        yield buf.getvalue()


def parse_annotations(
    stream: Iterable[str] | IO[str],
    mode: str = "strict",
    known_image_ids: set[str] | None = None,
) -> ParseResult:
    """Parse annotation lines. In strict mode an image_id that does not refer
    to an ingested detection is flagged as an orphan."""
    if mode not in ("strict", "lenient"):
        raise UsageError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    records: list[AnnotationRecord] = []
    errors: list[RecordError] = []
    for line_no, text in enumerate(_iter_lines(stream), start=1):
        if not text.strip():
            errors.append(RecordError(line_no, None, "empty line"))
            if mode == "strict":
                break
            continue
        try:
            obj = json.loads(text)
            if not isinstance(obj, dict):
                raise _FieldError("", "line is not a JSON object")
            missing = [k for k in ANNOTATION_FIELDS if k not in obj]
            if missing:
                raise _FieldError(missing[0], f"missing field {missing[0]!r}")
            image_id = obj["image_id"]
            if not isinstance(image_id, str) or not image_id:
                raise _FieldError("image_id", "image_id must be a non-empty string")
            predicted = obj["predicted"]
            actual = obj["actual"]
            if not isinstance(predicted, bool):
                raise _FieldError("predicted", "predicted must be a boolean")
            if not isinstance(actual, bool):
                raise _FieldError("actual", "actual must be a boolean")
            note = obj.get("decoy_note")
            if note is not None and not isinstance(note, str):
                raise _FieldError("decoy_note", "decoy_note must be a string")
            if (
                mode == "strict"
                and known_image_ids is not None
                and image_id not in known_image_ids
            ):
                raise _FieldError("image_id", f"orphan image_id {image_id!r}")
        except json.JSONDecodeError as exc:
            errors.append(RecordError(line_no, None, f"malformed JSON: {exc.msg}"))
            if mode == "strict":
                break
            continue
        except _FieldError as exc:
            errors.append(RecordError(line_no, exc.field_name or None, str(exc)))
            if mode == "strict":
                break
            continue
        records.append(AnnotationRecord(image_id, predicted, actual, note))
    return ParseResult(records, errors)


def serialize_annotations(records: Iterable[AnnotationRecord]) -> Iterator[str]:
    for record in records:
        yield json.dumps(record.to_json_obj(), ensure_ascii=False)
