"""Coverage statistics: temporal binning, hull extent, per-polygon counts.

Capture-local binning convention
--------------------------------
The grid always has one slot per real ``width`` minutes of the epoch, so a
64-day epoch at 15 minutes yields 6,144 slots regardless of clock changes.
In ``CAPTURE_LOCAL`` mode each record's wall-clock label is resolved to the
label's *first* real occurrence: after a fall-back transition the repeated
hour's records fold onto the slots that carried those labels the first time
around, and the slots spanning the absorbed hour receive nothing. A stream
that is uniform in real time therefore shows exactly four empty 15-minute
slots at a one-hour fall-back, matching observed dashcam coverage gaps at
the end of daylight saving time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction

import numpy as np

from . import geometry
from .errors import DataError, UsageError
from .records import Epoch, GeoPoint, Timestamp
from .tables import MICROS_PER_MINUTE, DetectionTable, as_detection_table


class ClockMode(enum.Enum):
    UTC = "utc"
    CAPTURE_LOCAL = "capture-local"


@dataclass(slots=True)
class TemporalBins:
    epoch_start: Timestamp
    width_minutes: int
    clock_mode: ClockMode
    counts: np.ndarray  # int64 per bin

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def bin_start_iso(self, k: int) -> str:
        start = Timestamp.from_micros(
            self.epoch_start.micros + k * self.width_minutes * MICROS_PER_MINUTE,
            self.epoch_start.utc_offset_minutes,
        )
        if self.clock_mode is ClockMode.CAPTURE_LOCAL:
            return start.wall_label.isoformat()
        return start.instant.isoformat()

    def to_rows(self):
        for k in range(self.n_bins):
            yield self.bin_start_iso(k), int(self.counts[k])


@dataclass(frozen=True, slots=True)
class IntervalStats:
    n_bins: int
    n_empty: int
    max_count: int
    total: int

    @property
    def mean_count(self) -> float:
        return self.total / self.n_bins

    def mean_count_str(self, decimals: int = 4) -> str:
        """Exact-rational mean rendered at fixed precision."""
        mean = Fraction(self.total, self.n_bins)
        quantum = Decimal(1).scaleb(-decimals)
        return str(
            (Decimal(mean.numerator) / Decimal(mean.denominator)).quantize(
                quantum, rounding=ROUND_HALF_EVEN
            )
        )


def _offset_segments(ts_micros: np.ndarray, offsets: np.ndarray):
    """Offset timeline observed in the stream: [(start_us, end_us, offset_min)].

    The offset is assumed to change only at observed change points, which is
    what a single-city capture fleet produces.
    """
    order = np.argsort(ts_micros, kind="stable")
    ts_sorted = ts_micros[order]
    off_sorted = offsets[order].astype(np.int64)
    if len(ts_sorted) == 0:
        return []
    change = np.flatnonzero(off_sorted[1:] != off_sorted[:-1]) + 1
    bounds = [None] + [int(ts_sorted[i]) for i in change] + [None]
    segment_offsets = [int(off_sorted[0])] + [int(off_sorted[i]) for i in change]
    segments = []
    for i, off in enumerate(segment_offsets):
        segments.append((bounds[i], bounds[i + 1], off))
    return segments


def _resolve_first_occurrence(
    wall_micros: np.ndarray, segments
) -> np.ndarray:
    """Map each wall-clock label to the instant of its first occurrence."""
    resolved = np.full(len(wall_micros), np.iinfo(np.int64).min, dtype=np.int64)
    done = np.zeros(len(wall_micros), dtype=bool)
    for start, end, offset in segments:
        candidate = wall_micros - offset * MICROS_PER_MINUTE
        ok = ~done
        if start is not None:
            ok &= candidate >= start
        if end is not None:
            ok &= candidate < end
        resolved[ok] = candidate[ok]
        done |= ok
    return resolved


def bin_by_interval(
    detections,
    width_minutes: int = 15,
    clock_mode: ClockMode = ClockMode.UTC,
    epoch: Epoch | None = None,
    out_of_epoch: str = "error",
) -> TemporalBins:
    """Count records into a dense grid of fixed-width intervals over the epoch.

    ``out_of_epoch`` is ``"error"`` (strict) or ``"drop"``.
    """
    if width_minutes <= 0 or 60 % width_minutes != 0:
        raise UsageError(f"width {width_minutes} must divide 60")
    if out_of_epoch not in ("error", "drop"):
        raise UsageError("out_of_epoch must be 'error' or 'drop'")
    if epoch is None:
        raise UsageError("an explicit epoch is required")
    table = as_detection_table(detections)

    width_us = width_minutes * MICROS_PER_MINUTE
    n_bins = -((-epoch.span_micros) // width_us)  # ceil
    if clock_mode is ClockMode.UTC:
        position = table.ts_micros - epoch.start.micros
    else:
        segments = _offset_segments(table.ts_micros, table.offset_minutes)
        resolved = _resolve_first_occurrence(table.wall_micros, segments)
        position = resolved - epoch.start.micros

    idx = np.floor_divide(position, width_us)
    in_range = (idx >= 0) & (idx < n_bins)
    if not np.all(in_range):
        if out_of_epoch == "error":
            bad = int(np.flatnonzero(~in_range)[0])
            raise DataError(
                f"record {table.image_id[bad]!r} falls outside the epoch"
            )
        idx = idx[in_range]
    counts = np.bincount(idx.astype(np.int64), minlength=n_bins).astype(np.int64)
    return TemporalBins(epoch.start, width_minutes, clock_mode, counts)


def interval_stats(bins: TemporalBins) -> IntervalStats:
    if bins.n_bins == 0:
        raise UsageError("bins are degenerate (no intervals)")
    counts = bins.counts
    return IntervalStats(
        n_bins=int(bins.n_bins),
        n_empty=int(np.count_nonzero(counts == 0)),
        max_count=int(counts.max()) if len(counts) else 0,
        total=int(counts.sum()),
    )


@dataclass(slots=True)
class HullCoverage:
    """Convex hull of a point set and its area in square miles."""

    hull: list[GeoPoint]  # counter-clockwise in the projected plane
    area_sq_miles: float
    projection: geometry.LocalProjection

    def contains(self, point: GeoPoint, tol_m: float = 1e-6) -> bool:
        """Point-in-convex-hull test in the projected plane."""
        if len(self.hull) == 1:
            only = self.projection.transform([[self.hull[0].lat, self.hull[0].lon]])[0]
            q = self.projection.transform([[point.lat, point.lon]])[0]
            return bool(np.hypot(*(q - only)) <= tol_m)
        ring = self.projection.transform([[p.lat, p.lon] for p in self.hull])
        q = self.projection.transform([[point.lat, point.lon]])[0]
        if len(ring) == 2:
            a, b = ring
            ab = b - a
            t = np.dot(q - a, ab) / np.dot(ab, ab)
            t = min(max(t, 0.0), 1.0)
            return bool(np.hypot(*(q - (a + t * ab))) <= tol_m)
        for i in range(len(ring)):
            a = ring[i]
            b = ring[(i + 1) % len(ring)]
            cross = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
            if cross < -tol_m:
                return False
        return True

    def to_feature(self) -> dict:
        coords = [[p.lon, p.lat] for p in self.hull]
        if coords:
            coords.append(coords[0])
        return {
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [coords]},
            "properties": {"area_sq_miles": self.area_sq_miles},
        }


def convex_hull_area(points, projection: geometry.LocalProjection | None = None) -> HullCoverage:
    """Hull and shoelace area over locally projected coordinates.

    Accepts GeoPoint iterables, (n, 2) [lat, lon] arrays, or a DetectionTable.
    Degenerate inputs (fewer than 3 distinct points, collinear points) yield
    area 0.0. By default the projection anchors at the data's mean
    coordinate; pass an explicit projection to compare hulls of different
    subsets in one plane.
    """
    if isinstance(points, DetectionTable):
        latlon = np.column_stack((points.lat, points.lon))
    else:
        latlon = geometry.iter_latlon(points)
    if len(latlon) == 0:
        raise UsageError("convex_hull_area needs at least one point")
    if projection is None:
        projection = geometry.LocalProjection().fit(latlon)
    xy = projection.transform(latlon)
    hull_idx = geometry.convex_hull(xy)
    ring = xy[hull_idx]
    area = geometry.shoelace_area(ring) / geometry.SQ_M_PER_SQ_MILE
    hull_points = [GeoPoint(float(latlon[i, 0]), float(latlon[i, 1])) for i in hull_idx]
    return HullCoverage(hull_points, float(area), projection)


@dataclass(frozen=True, slots=True)
class PolygonRegion:
    polygon_id: str
    ring: np.ndarray  # (n, 2) of [lat, lon], validated simple, not closed


@dataclass(slots=True)
class PolygonCounts:
    counts: dict[str, int]
    unassigned: int

    @property
    def total(self) -> int:
        return sum(self.counts.values()) + self.unassigned


def load_polygons(doc: dict) -> list[PolygonRegion]:
    """Load polygon regions from a geographic feature collection.

    Rings are [lon, lat] pairs per the GeoJSON convention; each feature needs
    an ``id`` property (or top-level id). Self-intersecting rings are
    rejected here, at load time.
    """
    if doc.get("type") != "FeatureCollection":
        raise DataError("expected a FeatureCollection document")
    regions: list[PolygonRegion] = []
    seen: set[str] = set()
    for i, feature in enumerate(doc.get("features", [])):
        props = feature.get("properties") or {}
        polygon_id = feature.get("id", props.get("id"))
        if polygon_id is None:
            raise DataError(f"feature {i} has no id")
        polygon_id = str(polygon_id)
        if polygon_id in seen:
            raise DataError(f"duplicate polygon id {polygon_id!r}")
        seen.add(polygon_id)
        geom = feature.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise DataError(f"feature {polygon_id!r}: only Polygon geometry supported")
        rings = geom.get("coordinates") or []
        if not rings:
            raise DataError(f"feature {polygon_id!r}: empty coordinates")
        lonlat = np.asarray(rings[0], dtype=np.float64)
        latlon = lonlat[:, ::-1]
        ring = geometry.check_simple_ring(latlon, name=f"polygon {polygon_id!r}")
        regions.append(PolygonRegion(polygon_id, ring))
    return regions


def polygon_counts(detections, polygons: list[PolygonRegion]) -> PolygonCounts:
    """Assign each record to the first listed polygon containing it.

    Boundary points count as inside. Records in no polygon are tallied as
    unassigned, so counted + unassigned always equals the input size.
    """
    table = as_detection_table(detections)
    remaining = np.ones(len(table), dtype=bool)
    counts: dict[str, int] = {}
    for region in polygons:
        counts[region.polygon_id] = 0
    for region in polygons:
        if not remaining.any():
            break
        lat_min, lat_max, lon_min, lon_max = geometry.ring_bbox(region.ring)
        candidates = (
            remaining
            & (table.lat >= lat_min)
            & (table.lat <= lat_max)
            & (table.lon >= lon_min)
            & (table.lon <= lon_max)
        )
        cand_idx = np.flatnonzero(candidates)
        if len(cand_idx) == 0:
            continue
        hit = geometry.points_in_ring(
            table.lat[cand_idx], table.lon[cand_idx], region.ring
        )
        inside = cand_idx[hit]
        counts[region.polygon_id] += int(len(inside))
        remaining[inside] = False
    return PolygonCounts(counts, int(np.count_nonzero(remaining)))
