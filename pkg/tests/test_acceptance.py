"""Acceptance suite: every exit criterion at its stated tolerance.

Each criterion prints one [PASS]/[FAIL] line (run with ``pytest -s -v`` to
see them live). Headline numbers from the source dataset that depend on
proprietary data are exercised as exact-arithmetic checks plus oracle and
property suites over seeded synthetic data, never as reproductions.
"""

from __future__ import annotations

import json
import resource
import time as time_mod
from contextlib import contextmanager
from datetime import time, timedelta

import numpy as np
import pytest

from dsi_audit import evalmetrics as em
from dsi_audit.ci import (
    InformationFlow,
    Outcome,
    evaluate,
    load_shipped_domains,
    load_shipped_flows,
    load_shipped_norms,
    perturbations,
)
from dsi_audit.cli import main
from dsi_audit.coverage import ClockMode, bin_by_interval, interval_stats
from dsi_audit.clustering import FeatureSpec, cluster, featurize, purity
from dsi_audit.geometry import FT_PER_M, LocalProjection, haversine_ft, points_in_ring
from dsi_audit.records import Epoch, GeoPoint, GroupClass, GroupKind, Timestamp
from dsi_audit.spatial import build_index
from dsi_audit.synth import (
    EventSpec,
    GroupSpec,
    NoiseSpec,
    Region,
    Scenario,
    annotations_for,
    dst_fallback_stream,
    generate,
)
from dsi_audit.tables import DetectionTable, EventTable, load_detections_table, write_detections_table


@contextmanager
def criterion(name: str):
    t0 = time_mod.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}", flush=True)
        raise
    print(f"[PASS] {name} ({time_mod.perf_counter() - t0:.2f}s)", flush=True)


def test_c01_sample_precision_arithmetic():
    with criterion("C01 positive_sample_precision(1496, 645) = 0.6987, renders 0.70"):
        t0 = time_mod.perf_counter()
        value = em.positive_sample_precision(1496, 645)
        assert value == pytest.approx(0.6987, abs=1e-4)
        assert f"{value:.2f}" == "0.70"
        assert time_mod.perf_counter() - t0 < 1.0


def test_c02_negative_sample_fnr_arithmetic():
    with criterion("C02 negative_sample_fnr(3, 200) = 0.015 exactly"):
        t0 = time_mod.perf_counter()
        assert em.negative_sample_fnr(3, 200) == 0.015
        assert time_mod.perf_counter() - t0 < 1.0


def test_c03_missed_extrapolation():
    with criterion("C03 extrapolate_missed(0.015, 25,142,400) = 377,136, base flagged"):
        t0 = time_mod.perf_counter()
        assert em.extrapolate_missed(0.015, 25_142_400) == 377_136
        report = em.missed_extrapolation_report(0.015, 25_142_400)
        assert report["missed_estimate"] == 377_136
        assert report["negatives_base"] == 25_142_400
        assert "back-solved" in report["negatives_base_note"]
        assert time_mod.perf_counter() - t0 < 1.0


def test_c04_binning_counts():
    with criterion("C04 64-day epoch -> 6,144 bins; fall-back stream -> 4 empty bins"):
        t0 = time_mod.perf_counter()
        start = Timestamp.parse("2023-08-11T00:00:00-04:00")
        epoch64 = Epoch(start, Timestamp.from_micros(start.micros + 64 * 86_400_000_000, -240))
        empty = DetectionTable(
            np.empty(0, dtype=object), np.empty(0, dtype=object), np.empty(0),
            np.empty(0), np.empty(0), np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int32), {},
        )
        bins = bin_by_interval(empty, 15, ClockMode.UTC, epoch64)
        assert bins.n_bins == 6144

        table, dst_epoch = dst_fallback_stream()
        dst_bins = bin_by_interval(table, 15, ClockMode.CAPTURE_LOCAL, dst_epoch)
        assert interval_stats(dst_bins).n_empty == 4
        empties = np.flatnonzero(dst_bins.counts == 0)
        assert empties.tolist() == [8, 9, 10, 11]  # the absorbed hour
        assert time_mod.perf_counter() - t0 < 5.0


def _oracle_sweep(scores: np.ndarray, actual: np.ndarray) -> tuple[float, float]:
    """Exhaustive per-threshold recount, vectorized but structurally independent
    of the implementation's cumulative sweep."""
    thresholds = np.unique(scores)[::-1]
    predicted = scores[None, :] >= thresholds[:, None]
    tp = (predicted & actual[None, :]).sum(axis=1).astype(np.float64)
    fp = (predicted & ~actual[None, :]).sum(axis=1).astype(np.float64)
    n_pos = actual.sum()
    n_neg = len(actual) - n_pos
    precision = tp / (tp + fp)
    recall = tp / n_pos
    fpr = fp / n_neg
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    ap = float(np.sum((recall - prev_recall) * precision))
    prev_fpr = np.concatenate(([0.0], fpr[:-1]))
    prev_tpr = np.concatenate(([0.0], recall[:-1]))
    auc = float(np.sum((fpr - prev_fpr) * (recall + prev_tpr) * 0.5))
    return ap, auc


def test_c05_score_sweep_oracle_equivalence():
    with criterion("C05 evaluate_scores == brute-force oracle, 1,000 x 10,000 samples, 1e-12"):
        t0 = time_mod.perf_counter()
        rng = np.random.default_rng(20230811)
        n = 10_000
        for trial in range(1000):
            scores = rng.integers(0, 1000, n) / 999.0
            actual = rng.random(n) < rng.uniform(0.05, 0.95)
            if not actual.any() or actual.all():
                actual[0] = True
                actual[1] = False
            result = em.evaluate_scores((scores, actual))
            ap, auc = _oracle_sweep(scores, actual)
            assert abs(result.average_precision - ap) < 1e-12, trial
            assert abs(result.roc_auc - auc) < 1e-12, trial
        assert time_mod.perf_counter() - t0 < 120.0


def test_c06_precision_floor_threshold():
    with criterion("C06 PrecisionFloor(0.9) on curve with (0.7, P=0.90, R=0.50) -> 0.7"):
        t0 = time_mod.perf_counter()
        curve = [
            em.CurvePoint(0.9, 0.97, 0.20, 0.001),
            em.CurvePoint(0.7, 0.90, 0.50, 0.02),
            em.CurvePoint(0.5, 0.80, 0.70, 0.10),
            em.CurvePoint(0.3, 0.60, 0.90, 0.30),
        ]
        assert em.select_threshold(curve, em.PrecisionFloor(0.9)) == 0.7
        assert time_mod.perf_counter() - t0 < 1.0


def _random_instance(seed: int, n_det: int = 10_000, n_ev: int = 100):
    rng = np.random.default_rng(seed)
    start = Timestamp.parse("2023-08-11T00:00:00-04:00")
    table = DetectionTable(
        np.array([f"i{seed}-{k:06d}" for k in range(n_det)], dtype=object),
        np.full(n_det, "food_truck", dtype=object),
        rng.uniform(40.55, 40.92, n_det),
        rng.uniform(-74.05, -73.70, n_det),
        rng.random(n_det),
        (start.micros + rng.integers(0, 86_400_000_000, n_det)).astype(np.int64),
        np.full(n_det, -240, dtype=np.int32),
        {},
    )
    events = EventTable(
        np.array([f"e{seed}-{k:04d}" for k in range(n_ev)], dtype=object),
        np.full(n_ev, "violation", dtype=object),
        rng.uniform(40.55, 40.92, n_ev),
        rng.uniform(-74.05, -73.70, n_ev),
        (start.micros + rng.integers(0, 86_400_000_000, n_ev)).astype(np.int64),
        np.full(n_ev, -240, dtype=np.int32),
    )
    return table, events, rng


def test_c07_spatial_queries_match_linear_scan():
    with criterion("C07 spatial queries == linear scan, 200 x (1e4 det, 1e2 events)"):
        t0 = time_mod.perf_counter()
        for trial in range(200):
            table, events, rng = _random_instance(5000 + trial)
            index = build_index(table, min_conf=0.0)

            # proximity join (covers nearest_detection on every event)
            summary = index.proximity_summary(events)
            dmat = haversine_ft(
                events.lat[:, None], events.lon[:, None],
                table.lat[None, :], table.lon[None, :],
            )
            best = dmat.min(axis=1)
            for i, (_, image_id, dist) in enumerate(summary.pairs):
                assert dist == best[i], (trial, i)
                tied = np.flatnonzero(dmat[i] == best[i])
                want_id = min(str(table.image_id[j]) for j in tied)
                assert image_id == want_id, (trial, i)
            ordered = np.sort(best)
            assert summary.min_ft == ordered[0]
            assert summary.max_ft == ordered[-1]
            assert summary.median_ft == ordered[(len(ordered) - 1) // 2]

            # geofence membership and ordering
            lat0 = rng.uniform(40.60, 40.85)
            lon0 = rng.uniform(-74.00, -73.80)
            d = rng.uniform(0.01, 0.08)
            ring = np.asarray(
                [[lat0, lon0], [lat0 + d, lon0], [lat0 + d, lon0 + d], [lat0, lon0 + d]]
            )
            rows = index.geofence(ring)
            want = np.flatnonzero(points_in_ring(table.lat, table.lon, ring))
            order = np.lexsort((table.image_id[want], table.ts_micros[want]))
            assert rows.tolist() == want[order].tolist(), trial

            # radius + time window match
            event = events.record(0)
            radius = rng.uniform(500.0, 20_000.0)
            half = timedelta(hours=rng.uniform(0.5, 6.0))
            rows, dists = index.match_known_event(event, radius, half)
            scan = haversine_ft(event.point.lat, event.point.lon, table.lat, table.lon)
            keep = (scan <= radius) & (
                np.abs(table.ts_micros - event.ts.micros)
                <= half // timedelta(microseconds=1)
            )
            want = np.flatnonzero(keep)
            assert sorted(rows.tolist()) == sorted(want.tolist()), trial
            assert all(dists[j] <= dists[j + 1] for j in range(len(dists) - 1))
        assert time_mod.perf_counter() - t0 < 120.0


def test_c08_five_million_record_join_performance(tmp_path):
    with criterion("C08 ingest+index+join 5M detections x 10k events <= 60s, <= 4GB"):
        rng = np.random.default_rng(7)
        n = 5_000_000
        start = Timestamp.parse("2023-08-11T00:00:00-04:00")
        table = DetectionTable(
            np.char.add("img", np.arange(n).astype("U9")).astype(object),
            np.full(n, "food_truck", dtype=object),
            rng.uniform(40.55, 40.92, n),
            rng.uniform(-74.05, -73.70, n),
            rng.beta(8, 2, n).round(6),
            (start.micros + rng.integers(0, 64 * 86_400_000_000, n)).astype(np.int64),
            np.full(n, -240, dtype=np.int32),
            {},
        )
        det_path = tmp_path / "big.jsonl"
        write_detections_table(table, det_path)
        del table

        n_ev = 10_000
        from dsi_audit.records import serialize_events, EventRecord

        ev_lat = rng.uniform(40.55, 40.92, n_ev)
        ev_lon = rng.uniform(-74.05, -73.70, n_ev)
        ev_ts = start.micros + rng.integers(0, 64 * 86_400_000_000, n_ev)
        events = [
            EventRecord(
                f"ev{k:05d}", GeoPoint(float(ev_lat[k]), float(ev_lon[k])),
                Timestamp.from_micros(int(ev_ts[k]), -240), "violation",
            )
            for k in range(n_ev)
        ]
        ev_path = tmp_path / "events.csv"
        ev_path.write_text("".join(line + "\n" for line in serialize_events(events)))

        import gc

        gc.collect()
        t0 = time_mod.perf_counter()
        loaded, errors = load_detections_table(det_path)
        assert len(loaded) == n and not errors
        with open(ev_path, newline="") as handle:
            from dsi_audit.records import parse_events

            parsed = parse_events(handle, "strict").raise_on_error().records
        event_table = EventTable.from_records(parsed)
        index = build_index(loaded, min_conf=0.5)
        summary = index.proximity_summary(event_table)
        elapsed = time_mod.perf_counter() - t0

        peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024**2
        print(
            f"  5M join: {elapsed:.1f}s, peak RSS {peak_gb:.2f} GB, "
            f"median {summary.median_ft:.1f} ft",
            flush=True,
        )
        assert elapsed <= 60.0
        assert peak_gb <= 4.0
        assert summary.min_ft <= summary.median_ft <= summary.max_ft


def test_c09_end_to_end_synthetic_pentest():
    with criterion("C09 synthetic pentest: top-3 cells at planted centers, median <= 2x jitter"):
        t0 = time_mod.perf_counter()
        region = Region(40.70, 40.80, -74.00, -73.90)
        origin = GeoPoint(region.lat_min, region.lon_min)
        proj = LocalProjection(origin.lat, origin.lon).fit(
            np.asarray([[origin.lat, origin.lon]])
        )
        cell = 250.0
        center_cells = [(6, 8), (18, 14), (30, 26)]
        centers = tuple(
            GeoPoint(float(lat), float(lon))
            for lat, lon in proj.inverse_transform(
                np.asarray([[(cx + 0.5) * cell, (cy + 0.5) * cell] for cx, cy in center_cells])
            )
        )
        jitter_m = 50.0
        scenario = Scenario(
            seed=20230811,
            epoch=Epoch(
                Timestamp.parse("2023-08-11T00:00:00-04:00"),
                Timestamp.parse("2023-08-13T00:00:00-04:00"),
            ),
            region=region,
            groups=(
                GroupSpec(
                    group=GroupClass(GroupKind.ROLE_BASED, "food_truck"),
                    centers=centers,
                    spatial_std_m=60.0,
                    base_rate_per_bin=5.0,
                ),
            ),
            noise=NoiseSpec(tpr=0.70, fnr=0.015),
            events=EventSpec(count=100, target_group="food_truck", jitter_m=jitter_m),
            n_negative_images=10_000,
        )
        output = generate(scenario)

        from dsi_audit.hotspot import grid_density, top_zones

        index = build_index(output.detections, min_conf=0.5)
        heatmap = grid_density(index.table_, origin=origin, cell_size_m=cell)
        zones = top_zones(heatmap, 3)
        for (zx, zy), _count in zones:
            chebyshev = min(
                max(abs(zx - cx), abs(zy - cy)) for cx, cy in center_cells
            )
            assert chebyshev <= 1, zones

        summary = index.proximity_summary(EventTable.from_records(output.events))
        assert summary.median_ft <= 2 * jitter_m * FT_PER_M
        assert time_mod.perf_counter() - t0 < 60.0


def test_c10_contextual_integrity_suite(tmp_path):
    with criterion("C10 CI corpus: center/variations/harms/ambiguous + gate exit 3"):
        t0 = time_mod.perf_counter()
        norms = load_shipped_norms()
        flows = load_shipped_flows()
        center = flows["center"]
        assert evaluate(center, norms).outcome is Outcome.APPROPRIATE

        variants = perturbations(center, load_shipped_domains(), norms)
        assert len(variants) == 5
        for param, variant, verdict in variants:
            assert verdict.outcome is not Outcome.APPROPRIATE, (param, variant)

        for name in ("harm-protesters", "harm-nurses", "harm-commuters",
                     "harm-religious-groups"):
            assert evaluate(flows[name], norms).outcome is Outcome.INAPPROPRIATE, name

        unmatched = InformationFlow("dog owners", "hobbyist", "blog", "park photos", "posted freely")
        assert evaluate(unmatched, norms).outcome is Outcome.AMBIGUOUS

        detections = tmp_path / "d.jsonl"
        detections.write_text(
            '{"image_id":"a","ts":"2023-08-11T12:00:00-04:00","lat":40.75,'
            '"lon":-73.95,"label":"food_truck","conf":0.9}\n'
        )
        rc = main(["hotspot", "--detections", str(detections), "--out", str(tmp_path / "h")])
        assert rc == 3
        assert time_mod.perf_counter() - t0 < 1.0


def test_c11_group_inference_suite():
    with criterion("C11 separable two-group scenario: purity >= 0.95, reruns identical"):
        region = Region(40.70, 40.80, -74.00, -73.90)
        scenario = Scenario(
            seed=77,
            epoch=Epoch(
                Timestamp.parse("2023-08-11T00:00:00-04:00"),
                Timestamp.parse("2023-08-12T00:00:00-04:00"),
            ),
            region=region,
            groups=(
                GroupSpec(
                    group=GroupClass(GroupKind.ROLE_BASED, "construction_workers"),
                    centers=(GeoPoint(40.75, -73.97),),
                    spatial_std_m=80.0,
                    base_rate_per_bin=3.0,
                    # high-visibility vests: bright green channel
                    attr_means={"r": 0.2, "g": 0.9, "b": 0.1},
                    attr_noise=0.04,
                ),
                GroupSpec(
                    group=GroupClass(GroupKind.ROLE_BASED, "nurses"),
                    centers=(GeoPoint(40.72, -73.92),),
                    spatial_std_m=80.0,
                    base_rate_per_bin=3.0,
                    attr_means={"r": 0.9, "g": 0.9, "b": 0.95},
                    attr_noise=0.04,
                ),
            ),
        )
        output = generate(scenario)
        vectors = featurize(output.detections, FeatureSpec(("r", "g", "b")))
        labels = [output.truth[i] for i in output.detections.image_id]
        assignments = cluster(vectors, 2, seed=5)
        assert purity(assignments, labels) >= 0.95

        rerun = generate(scenario)
        np.testing.assert_array_equal(rerun.detections.image_id, output.detections.image_id)
        np.testing.assert_array_equal(rerun.detections.lat, output.detections.lat)
        np.testing.assert_array_equal(
            rerun.detections.attrs["g"], output.detections.attrs["g"]
        )
        np.testing.assert_array_equal(cluster(vectors, 2, seed=5), assignments)
