"""Coverage statistics: binning (incl. the fall-back convention), hull, polygons."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import day_epoch, make_table
from dsi_audit import coverage
from dsi_audit.coverage import (
    ClockMode,
    bin_by_interval,
    convex_hull_area,
    interval_stats,
    load_polygons,
    polygon_counts,
)
from dsi_audit.errors import DataError, UsageError
from dsi_audit.geometry import M_PER_MILE, LocalProjection
from dsi_audit.records import Epoch, Timestamp
from dsi_audit.synth import dst_fallback_stream
from dsi_audit.tables import MICROS_PER_MINUTE, DetectionTable


def uniform_stream(n: int, epoch: Epoch) -> DetectionTable:
    """n records evenly spaced over the epoch (exact spacing)."""
    step = epoch.span_micros // n
    instants = epoch.start.micros + np.arange(n, dtype=np.int64) * step
    return DetectionTable(
        np.array([f"u{i:06d}" for i in range(n)], dtype=object),
        np.full(n, "x", dtype=object),
        np.full(n, 40.75),
        np.full(n, -73.95),
        np.full(n, 0.9),
        instants,
        np.full(n, epoch.start.utc_offset_minutes, dtype=np.int32),
        {},
    )


class TestBinByInterval:
    def test_64_day_epoch_has_6144_bins(self):
        epoch = day_epoch(days=64)
        bins = bin_by_interval(make_table(50, span_hours=64 * 24), 15, ClockMode.UTC, epoch)
        assert bins.n_bins == 6144

    def test_empty_day_has_96_zero_bins(self):
        epoch = day_epoch()
        bins = bin_by_interval(make_table(0), 15, ClockMode.UTC, epoch)
        assert bins.n_bins == 96
        assert int(bins.counts.sum()) == 0

    def test_uniform_300_over_one_day_mean(self):
        epoch = day_epoch()
        bins = bin_by_interval(uniform_stream(300, epoch), 15, ClockMode.UTC, epoch)
        stats = interval_stats(bins)
        assert stats.mean_count == pytest.approx(3.125)
        assert stats.mean_count_str() == "3.1250"

    def test_width_must_divide_hour(self):
        with pytest.raises(UsageError):
            bin_by_interval(make_table(1), 14, ClockMode.UTC, day_epoch())

    def test_out_of_epoch_strict_vs_drop(self):
        epoch = day_epoch()
        table = make_table(10, span_hours=30)  # some records past the epoch end
        with pytest.raises(DataError):
            bin_by_interval(table, 15, ClockMode.UTC, epoch)
        bins = bin_by_interval(table, 15, ClockMode.UTC, epoch, out_of_epoch="drop")
        assert int(bins.counts.sum()) < 10

    def test_conservation_random(self, rng):
        epoch = day_epoch()
        table = make_table(777, seed=3)
        bins = bin_by_interval(table, 15, ClockMode.UTC, epoch)
        assert int(bins.counts.sum()) == 777

    def test_translation_consistency(self):
        epoch = day_epoch()
        table = make_table(200, seed=5, span_hours=12)
        shifted = DetectionTable(
            table.image_id, table.label, table.lat, table.lon, table.conf,
            table.ts_micros + 4 * 15 * MICROS_PER_MINUTE, table.offset_minutes, {},
        )
        base = bin_by_interval(table, 15, ClockMode.UTC, epoch).counts
        moved = bin_by_interval(shifted, 15, ClockMode.UTC, epoch).counts
        np.testing.assert_array_equal(moved[4:52], base[0:48])

    def test_utc_vs_capture_local_same_without_transition(self):
        epoch = day_epoch()
        table = make_table(300, seed=6)
        utc = bin_by_interval(table, 15, ClockMode.UTC, epoch).counts
        local = bin_by_interval(table, 15, ClockMode.CAPTURE_LOCAL, epoch).counts
        np.testing.assert_array_equal(utc, local)

    @given(st.integers(1, 400))
    @settings(max_examples=30, deadline=None)
    def test_conservation_property(self, n):
        epoch = day_epoch()
        table = make_table(n, seed=n)
        bins = bin_by_interval(table, 15, ClockMode.UTC, epoch)
        assert int(bins.counts.sum()) == n


class TestFallBackConvention:
    """Hand enumeration of the documented capture-local convention.

    Four real hours of one-per-minute records crossing the 2023-11-05
    fall-back: slots 0-3 normal, slots 4-7 double-filled by the folded
    repeated hour, slots 8-11 (the absorbed hour) empty, slots 12-15 normal.
    """

    def test_exactly_four_empty_bins_at_transition(self):
        table, epoch = dst_fallback_stream()
        bins = bin_by_interval(table, 15, ClockMode.CAPTURE_LOCAL, epoch)
        assert bins.n_bins == 16
        assert bins.counts.tolist() == [15] * 4 + [30] * 4 + [0] * 4 + [15] * 4
        assert interval_stats(bins).n_empty == 4

    def test_utc_mode_sees_no_gap(self):
        table, epoch = dst_fallback_stream()
        bins = bin_by_interval(table, 15, ClockMode.UTC, epoch)
        assert bins.counts.tolist() == [15] * 16


class TestIntervalStats:
    def test_simple(self):
        bins = coverage.TemporalBins(
            Timestamp.parse("2023-08-11T00:00:00-04:00"), 15, ClockMode.UTC,
            np.asarray([0, 0, 4, 4], dtype=np.int64),
        )
        stats = interval_stats(bins)
        assert stats.n_empty == 2
        assert stats.mean_count == 2.0
        assert stats.max_count == 4

    def test_all_zero(self):
        bins = coverage.TemporalBins(
            Timestamp.parse("2023-08-11T00:00:00-04:00"), 15, ClockMode.UTC,
            np.zeros(8, dtype=np.int64),
        )
        stats = interval_stats(bins)
        assert stats.mean_count == 0.0
        assert stats.n_empty == stats.n_bins == 8

    def test_exact_rational_rendering(self):
        bins = coverage.TemporalBins(
            Timestamp.parse("2023-08-11T00:00:00-04:00"), 15, ClockMode.UTC,
            np.asarray([1, 1, 1], dtype=np.int64),
        )
        assert interval_stats(bins).mean_count_str(4) == "1.0000"
        bins.counts = np.asarray([2, 0, 0], dtype=np.int64)
        assert interval_stats(bins).mean_count_str(4) == "0.6667"


class TestHullArea:
    def test_collinear_zero(self):
        assert convex_hull_area(np.asarray([[40.0, -73.0], [40.1, -73.0], [40.2, -73.0]])).area_sq_miles == 0.0

    def test_one_square_mile(self, nyc_point):
        proj = LocalProjection(nyc_point.lat, nyc_point.lon).fit(
            np.asarray([[nyc_point.lat, nyc_point.lon]])
        )
        half = M_PER_MILE / 2
        corners = proj.inverse_transform(
            np.asarray([[-half, -half], [half, -half], [half, half], [-half, half]])
        )
        hc = convex_hull_area(corners)
        assert hc.area_sq_miles == pytest.approx(1.0, abs=1e-6)

    def test_interior_points_monotone(self, rng, nyc_point):
        proj = LocalProjection(nyc_point.lat, nyc_point.lon).fit(
            np.asarray([[nyc_point.lat, nyc_point.lon]])
        )
        half = M_PER_MILE / 2
        corners_xy = np.asarray([[-half, -half], [half, -half], [half, half], [-half, half]])
        corners = proj.inverse_transform(corners_xy)
        inner_xy = rng.uniform(-half, half, (1000, 2))
        inner = proj.inverse_transform(inner_xy)
        area_corners = convex_hull_area(corners, proj).area_sq_miles
        area_inner = convex_hull_area(inner, proj).area_sq_miles
        area_all = convex_hull_area(np.vstack([corners, inner]), proj).area_sq_miles
        assert area_inner <= area_all <= 1.0 + 1e-9
        assert area_all == pytest.approx(area_corners, rel=1e-12)

    def test_hull_contains_inputs(self, rng):
        latlon = np.column_stack(
            (rng.uniform(40.6, 40.9, 300), rng.uniform(-74.0, -73.7, 300))
        )
        hc = convex_hull_area(latlon)
        from dsi_audit.records import GeoPoint

        for lat, lon in latlon[:50]:
            assert hc.contains(GeoPoint(lat, lon), tol_m=1e-6)


def feature_collection(*polygons):
    features = []
    for pid, ring_latlon in polygons:
        features.append(
            {
                "type": "Feature",
                "properties": {"id": pid},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[lon, lat] for lat, lon in ring_latlon]],
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def square(lat0, lon0, d):
    return [(lat0, lon0), (lat0 + d, lon0), (lat0 + d, lon0 + d), (lat0, lon0 + d)]


def point_table(points):
    n = len(points)
    return DetectionTable(
        np.array([f"p{i}" for i in range(n)], dtype=object),
        np.full(n, "x", dtype=object),
        np.asarray([p[0] for p in points], dtype=float),
        np.asarray([p[1] for p in points], dtype=float),
        np.full(n, 0.9),
        np.full(n, Timestamp.parse("2023-08-11T12:00:00-04:00").micros, dtype=np.int64),
        np.full(n, -240, dtype=np.int32),
        {},
    )


class TestPolygonCounts:
    def test_point_inside(self):
        polys = load_polygons(feature_collection(("a", square(40.0, -74.0, 1.0))))
        result = polygon_counts(point_table([(40.5, -73.5)]), polys)
        assert result.counts == {"a": 1} and result.unassigned == 0

    def test_point_outside(self):
        polys = load_polygons(feature_collection(("a", square(40.0, -74.0, 1.0))))
        result = polygon_counts(point_table([(42.0, -73.5)]), polys)
        assert result.counts == {"a": 0} and result.unassigned == 1

    def test_overlap_first_listed_wins(self):
        a = ("a", square(40.0, -74.0, 1.0))
        b = ("b", square(40.5, -73.75, 1.0))  # overlaps the NE corner of a
        point = point_table([(40.75, -73.6)])  # inside both
        first = polygon_counts(point, load_polygons(feature_collection(a, b)))
        swapped = polygon_counts(point, load_polygons(feature_collection(b, a)))
        assert first.counts == {"a": 1, "b": 0}
        assert swapped.counts == {"a": 0, "b": 1}

    def test_boundary_counts_inside(self):
        polys = load_polygons(feature_collection(("a", square(40.0, -74.0, 1.0))))
        result = polygon_counts(point_table([(40.0, -73.5)]), polys)
        assert result.counts == {"a": 1}

    def test_self_intersecting_rejected_at_load(self):
        bowtie = [(40.0, -74.0), (41.0, -73.0), (41.0, -74.0), (40.0, -73.0)]
        with pytest.raises(DataError):
            load_polygons(feature_collection(("bad", bowtie)))

    def test_conservation(self, rng):
        polys = load_polygons(
            feature_collection(
                ("a", square(40.0, -74.0, 0.5)), ("b", square(40.2, -73.8, 0.5))
            )
        )
        table = make_table(500, seed=11, lat_range=(39.9, 41.0), lon_range=(-74.1, -73.0))
        result = polygon_counts(table, polys)
        assert result.total == 500
