"""Command-line entry point wiring the modules into one pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 blocked by the
contextual-integrity gate. Analysis commands (everything except ingest,
synth, and ci) must declare an information flow; runs without one are
blocked, not silently allowed. Machine-readable results go to files under
--out, a human summary goes to stdout, and every analysis run leaves a
run_manifest.json in its output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import ci as ci_mod
from . import clustering, coverage, evalmetrics, hotspot, synth
from .errors import DataError, DsiAuditError, FlowError, GateBlocked, UsageError
from .manifest import RunManifest, StageTimer
from .records import (
    Epoch,
    GeoPoint,
    Timestamp,
    parse_annotations,
    parse_detections,
    parse_events,
    serialize_annotations,
    serialize_detections,
    serialize_events,
)
from .spatial import DetectionIndex
from .tables import (
    DetectionTable,
    EventTable,
    as_detection_table,
    load_detections_table,
    parse_local_time,
    write_detections_table,
)

NORMS_ENV_VAR = "DSI_AUDIT_NORMS"
ANALYSIS_COMMANDS = {
    "coverage", "eval", "threshold", "match-events", "geofence", "hotspot", "cluster",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def _read_detections(path: str, mode: str = "lenient", fast: bool = False) -> DetectionTable:
    if fast:
        try:
            table, errors = load_detections_table(path)
            if errors and mode == "strict":
                raise DataError(f"{path}: {errors[0]}")
            return table
        except DataError:
            if mode == "strict":
                raise
    try:
        with open(path, "r", encoding="utf-8") as handle:
            result = parse_detections(handle, mode)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if mode == "strict" and result.errors:
        raise DataError(f"{path}: {result.errors[0]}")
    return as_detection_table(result.records)


def _read_events(path: str, mode: str = "lenient") -> EventTable:
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            result = parse_events(handle, mode)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if mode == "strict" and result.errors:
        raise DataError(f"{path}: {result.errors[0]}")
    return EventTable.from_records(result.records)


def _norms_from(args) -> ci_mod.RuleSet:
    path = getattr(args, "norms", None) or os.environ.get(NORMS_ENV_VAR)
    if path:
        return ci_mod.load_norms(path)
    return ci_mod.load_shipped_norms()


def _gate(args, manifest: RunManifest, command: str, out: Path) -> None:
    """Evaluate the declared flow and record the decision before any output.

    A blocked or undeclared run still leaves a manifest in the output
    directory documenting the refusal.
    """
    flow_path = getattr(args, "flow", None)
    if flow_path is None:
        manifest.write(out)
        raise FlowError(
            f"analysis {command!r} requires a declared information flow (--flow)"
        )
    flow = ci_mod.load_flow(flow_path)
    manifest.add_input(flow_path)
    decision = ci_mod.gate_analysis(
        command, flow, _norms_from(args),
        acknowledge_ambiguous=getattr(args, "acknowledge_ambiguous", False),
    )
    manifest.record_gate(flow, decision)
    if not decision.allowed:
        manifest.write(out)
        raise GateBlocked(decision.reason, decision.verdict)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(manifest: RunManifest, out: Path, summary: str) -> int:
    manifest.write(out)
    print(summary)
    return 0


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("ingest", sys.argv[1:], vars(args))
    mode = "strict" if args.strict else "lenient"
    reports = {}
    known_ids: set[str] | None = None
    with StageTimer(manifest, "ingest"):
        if args.detections:
            manifest.add_input(args.detections)
            with open(args.detections, "r", encoding="utf-8") as handle:
                result = parse_detections(handle, mode)
            if mode == "strict" and result.errors:
                raise DataError(f"{args.detections}: {result.errors[0]}")
            path = out / "detections.jsonl"
            path.write_text(
                "".join(line + "\n" for line in serialize_detections(result.records))
            )
            manifest.add_output(path)
            known_ids = {r.image_id for r in result.records}
            reports["detections"] = {
                "records": len(result.records),
                "errors": [str(e) for e in result.errors],
            }
        if args.events:
            manifest.add_input(args.events)
            with open(args.events, "r", encoding="utf-8", newline="") as handle:
                result = parse_events(handle, mode)
            if mode == "strict" and result.errors:
                raise DataError(f"{args.events}: {result.errors[0]}")
            path = out / "events.csv"
            path.write_text(
                "".join(line + "\n" for line in serialize_events(result.records))
            )
            manifest.add_output(path)
            reports["events"] = {
                "records": len(result.records),
                "errors": [str(e) for e in result.errors],
            }
        if args.annotations:
            manifest.add_input(args.annotations)
            with open(args.annotations, "r", encoding="utf-8") as handle:
                result = parse_annotations(handle, mode, known_image_ids=known_ids)
            if mode == "strict" and result.errors:
                raise DataError(f"{args.annotations}: {result.errors[0]}")
            path = out / "annotations.jsonl"
            path.write_text(
                "".join(line + "\n" for line in serialize_annotations(result.records))
            )
            manifest.add_output(path)
            reports["annotations"] = {
                "records": len(result.records),
                "errors": [str(e) for e in result.errors],
            }
    if not reports:
        raise UsageError("nothing to ingest; pass --detections, --events, or --annotations")
    report_path = out / "ingest_report.json"
    _json_dump(reports, report_path)
    manifest.add_output(report_path)
    lines = ", ".join(
        f"{k}: {v['records']} records, {len(v['errors'])} errors"
        for k, v in reports.items()
    )
    return _finish(manifest, out, f"ingest ok ({lines})")


def cmd_coverage(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("coverage", sys.argv[1:], vars(args))
    _gate(args, manifest, "coverage", out)
    manifest.add_input(args.detections)
    with StageTimer(manifest, "load"):
        table = _read_detections(args.detections, fast=args.fast)
    epoch = Epoch(Timestamp.parse(args.epoch_start), Timestamp.parse(args.epoch_end))
    clock = coverage.ClockMode(args.clock)
    with StageTimer(manifest, "bin"):
        bins = coverage.bin_by_interval(
            table, args.width_minutes, clock, epoch, out_of_epoch="drop"
        )
        stats = coverage.interval_stats(bins)
    bins_path = out / "bins.csv"
    with open(bins_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_start_iso", "count"])
        writer.writerows(bins.to_rows())
    manifest.add_output(bins_path)
    stats_doc = {
        "n_bins": stats.n_bins,
        "n_empty": stats.n_empty,
        "max_count": stats.max_count,
        "total": stats.total,
        "mean_count": stats.mean_count,
        "mean_count_exact": stats.mean_count_str(),
    }
    hull_doc = None
    if len(table):
        with StageTimer(manifest, "hull"):
            hull = coverage.convex_hull_area(table)
        hull_path = out / "hull.geojson"
        _json_dump(hull.to_feature(), hull_path)
        manifest.add_output(hull_path)
        hull_doc = hull.area_sq_miles
        stats_doc["hull_area_sq_miles"] = hull_doc
    if args.polygons:
        manifest.add_input(args.polygons)
        regions = coverage.load_polygons(_load_json(args.polygons))
        with StageTimer(manifest, "polygons"):
            counts = coverage.polygon_counts(table, regions)
        poly_path = out / "polygon_counts.json"
        _json_dump(
            {"counts": counts.counts, "unassigned": counts.unassigned}, poly_path
        )
        manifest.add_output(poly_path)
    stats_path = out / "coverage_stats.json"
    _json_dump(stats_doc, stats_path)
    manifest.add_output(stats_path)
    return _finish(
        manifest, out,
        f"coverage: {stats.n_bins} bins, {stats.n_empty} empty, "
        f"mean {stats.mean_count_str()} records/bin",
    )


def cmd_eval(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("eval", sys.argv[1:], vars(args))
    _gate(args, manifest, "eval", out)
    manifest.add_input(args.annotations)
    with open(args.annotations, "r", encoding="utf-8") as handle:
        annotations = parse_annotations(handle, "lenient").records
    if not annotations:
        raise DataError(f"{args.annotations}: no valid annotation records")
    confusion = evalmetrics.ConfusionCounts.from_annotations(annotations)
    metrics: dict = {
        "confusion": {
            "tp": confusion.tp, "fp": confusion.fp,
            "fn": confusion.fn, "tn": confusion.tn,
        },
    }
    if confusion.tp + confusion.fp > 0:
        metrics["positive_sample_precision"] = evalmetrics.positive_sample_precision(
            confusion.tp, confusion.fp
        )
    n_negative_classified = confusion.fn + confusion.tn
    if n_negative_classified > 0:
        metrics["negative_sample_fnr"] = evalmetrics.negative_sample_fnr(
            confusion.fn, n_negative_classified
        )
    if args.negatives_base is not None and "negative_sample_fnr" in metrics:
        metrics["missed_extrapolation"] = evalmetrics.missed_extrapolation_report(
            metrics["negative_sample_fnr"], args.negatives_base
        )
    if args.detections:
        manifest.add_input(args.detections)
        table = _read_detections(args.detections, fast=args.fast)
        scores, actuals = evalmetrics.scored_samples_from(
            annotations, table, label=args.label
        )
        with StageTimer(manifest, "curves"):
            evaluation = evalmetrics.evaluate_scores((scores, actuals))
        metrics["average_precision"] = evaluation.average_precision
        metrics["roc_auc"] = evaluation.roc_auc
        curves_path = out / "curves.csv"
        with open(curves_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["threshold", "precision", "recall", "fpr"])
            for p in evaluation.pr_curve:
                writer.writerow([repr(p.threshold), repr(p.precision),
                                 repr(p.recall), repr(p.fpr)])
        manifest.add_output(curves_path)
    metrics_path = out / "metrics.json"
    _json_dump(metrics, metrics_path)
    manifest.add_output(metrics_path)
    summary = [f"eval: tp={confusion.tp} fp={confusion.fp} fn={confusion.fn} tn={confusion.tn}"]
    if "positive_sample_precision" in metrics:
        summary.append(f"sample precision {metrics['positive_sample_precision']:.4f}")
    if "average_precision" in metrics:
        summary.append(f"AP {metrics['average_precision']:.4f}")
        summary.append(f"AUC {metrics['roc_auc']:.4f}")
    return _finish(manifest, out, "; ".join(summary))


def _parse_policy(text: str):
    if text == "max-f1":
        return evalmetrics.MaxF1()
    if text.startswith("precision-floor="):
        try:
            return evalmetrics.PrecisionFloor(float(text.split("=", 1)[1]))
        except ValueError:
            raise UsageError(f"bad precision floor in {text!r}") from None
    raise UsageError(
        f"unknown policy {text!r}; use max-f1 or precision-floor=P"
    )


def cmd_threshold(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("threshold", sys.argv[1:], vars(args))
    _gate(args, manifest, "threshold", out)
    manifest.add_input(args.curves)
    curve = []
    with open(args.curves, "r", newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            try:
                curve.append(
                    evalmetrics.CurvePoint(
                        float(row["threshold"]), float(row["precision"]),
                        float(row["recall"]), float(row["fpr"]),
                    )
                )
            except (KeyError, TypeError, ValueError):
                raise DataError(f"{args.curves}: bad curve row {row!r}") from None
    policy = _parse_policy(args.threshold_policy)
    threshold = evalmetrics.select_threshold(curve, policy)
    result_path = out / "threshold.json"
    _json_dump({"policy": args.threshold_policy, "threshold": threshold}, result_path)
    manifest.add_output(result_path)
    return _finish(
        manifest, out, f"selected threshold {threshold!r} under {args.threshold_policy}"
    )


def cmd_match_events(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("match-events", sys.argv[1:], vars(args))
    _gate(args, manifest, "match-events", out)
    manifest.add_input(args.detections)
    manifest.add_input(args.events)
    with StageTimer(manifest, "load"):
        table = _read_detections(args.detections, fast=args.fast)
        events = _read_events(args.events)
    with StageTimer(manifest, "index"):
        index = DetectionIndex(min_conf=args.min_conf).fit(table)
    pairs_path = out / "matches.csv"
    with StageTimer(manifest, "query"), open(pairs_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["event_id", "image_id", "distance_ft", "ts"])
        if args.radius_ft is not None:
            half = timedelta(minutes=args.half_window_minutes)
            n_matches = 0
            for i in range(len(events)):
                event = events.record(i)
                rows, dists = index.match_known_event(event, args.radius_ft, half)
                n_matches += len(rows)
                for row, dist in zip(rows, dists):
                    writer.writerow(
                        [event.event_id, index.table_.image_id[row], repr(float(dist)),
                         index.table_.record(int(row)).ts.isoformat()]
                    )
            summary_doc = {
                "mode": "radius",
                "radius_ft": args.radius_ft,
                "half_window_minutes": args.half_window_minutes,
                "n_matches": n_matches,
            }
            summary = f"match-events: {n_matches} matches within {args.radius_ft} ft"
        else:
            prox = index.proximity_summary(events)
            for event_id, image_id, dist in prox.pairs:
                row_ts = ""
                if image_id is not None:
                    row = int(np.flatnonzero(index.table_.image_id == image_id)[0])
                    row_ts = index.table_.record(row).ts.isoformat()
                writer.writerow([event_id, image_id, repr(dist), row_ts])
            summary_doc = {
                "mode": "nearest",
                "median_ft": prox.median_ft,
                "min_ft": prox.min_ft,
                "max_ft": prox.max_ft,
                "n_events": len(events),
            }
            summary = (
                f"match-events: median nearest distance {prox.median_ft:.1f} ft "
                f"(min {prox.min_ft:.1f}, max {prox.max_ft:.1f})"
            )
    manifest.add_output(pairs_path)
    summary_path = out / "summary.json"
    _json_dump(summary_doc, summary_path)
    manifest.add_output(summary_path)
    return _finish(manifest, out, summary)


def cmd_geofence(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("geofence", sys.argv[1:], vars(args))
    _gate(args, manifest, "geofence", out)
    manifest.add_input(args.detections)
    manifest.add_input(args.region)
    table = _read_detections(args.detections, fast=args.fast)
    region_doc = _load_json(args.region)
    regions = coverage.load_polygons(region_doc)
    if len(regions) != 1:
        raise DataError("geofence region file must contain exactly one polygon")
    window = None
    if args.t0 or args.t1:
        if not (args.t0 and args.t1):
            raise UsageError("--t0 and --t1 must be given together")
        window = (Timestamp.parse(args.t0), Timestamp.parse(args.t1))
    index = DetectionIndex(min_conf=args.min_conf).fit(table)
    with StageTimer(manifest, "query"):
        rows = index.geofence(regions[0].ring, window)
    hits_path = out / "geofence.jsonl"
    hits_path.write_text(
        "".join(
            line + "\n"
            for line in serialize_detections(
                index.table_.record(int(r)) for r in rows
            )
        )
    )
    manifest.add_output(hits_path)
    table_path = out / "geofence.csv"
    with open(table_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["image_id", "ts", "lat", "lon", "label", "conf"])
        for r in rows:
            record = index.table_.record(int(r))
            writer.writerow(
                [record.image_id, record.ts.isoformat(), repr(record.point.lat),
                 repr(record.point.lon), record.label, repr(record.conf)]
            )
    manifest.add_output(table_path)
    summary_path = out / "summary.json"
    _json_dump({"n_detections": int(len(rows)), "region_id": regions[0].polygon_id},
               summary_path)
    manifest.add_output(summary_path)
    return _finish(manifest, out, f"geofence: {len(rows)} detections inside region")


def cmd_hotspot(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("hotspot", sys.argv[1:], vars(args))
    _gate(args, manifest, "hotspot", out)
    manifest.add_input(args.detections)
    table = _read_detections(args.detections, fast=args.fast)
    window = None
    if args.window:
        try:
            start_text, end_text = args.window.split("-")
        except ValueError:
            raise UsageError(f"bad --window {args.window!r}, expected HH:MM-HH:MM") from None
        window = (parse_local_time(start_text), parse_local_time(end_text))
    origin = None
    if args.origin:
        try:
            lat_text, lon_text = args.origin.split(",")
            origin = GeoPoint(float(lat_text), float(lon_text))
        except (ValueError, DataError) as exc:
            raise UsageError(f"bad --origin {args.origin!r}: {exc}") from None
    shape = None
    if args.shape:
        try:
            nx_text, ny_text = args.shape.split(",")
            shape = (int(nx_text), int(ny_text))
        except ValueError:
            raise UsageError(f"bad --shape {args.shape!r}, expected NX,NY") from None
    with StageTimer(manifest, "density"):
        heatmap = hotspot.grid_density(
            table, origin=origin, cell_size_m=args.cell_size_m,
            shape=shape, window=window,
        )
        zones = hotspot.top_zones(heatmap, args.k)
    cells_path = out / "cells.csv"
    with open(cells_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cell_x", "cell_y", "count"])
        writer.writerows(heatmap.to_rows())
    manifest.add_output(cells_path)
    geo_path = out / "heatmap.geojson"
    _json_dump(heatmap.to_feature_collection(), geo_path)
    manifest.add_output(geo_path)
    zones_path = out / "top_zones.json"
    _json_dump(
        {"zones": [{"cell_x": c[0], "cell_y": c[1], "count": n} for c, n in zones],
         "overflow": heatmap.overflow},
        zones_path,
    )
    manifest.add_output(zones_path)
    return _finish(
        manifest, out,
        f"hotspot: {int(heatmap.counts.sum())} records in grid, "
        f"top zone {zones[0][0] if zones else None}",
    )


def cmd_cluster(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("cluster", sys.argv[1:], vars(args))
    _gate(args, manifest, "cluster", out)
    manifest.add_input(args.detections)
    table = _read_detections(args.detections, fast=args.fast)
    keys = tuple(k for k in (args.attrs or "").split(",") if k)
    spec = clustering.FeatureSpec(keys, include_space=args.space, include_time=args.time)
    with StageTimer(manifest, "cluster"):
        vectors = clustering.featurize(table, spec)
        assignments = clustering.cluster(vectors, args.k, args.seed)
    assignments_path = out / "assignments.csv"
    with open(assignments_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["image_id", "cluster"])
        for i in range(len(table)):
            writer.writerow([table.image_id[i], int(assignments[i])])
    manifest.add_output(assignments_path)
    report_doc: dict = {"k": args.k, "seed": args.seed, "n": len(table)}
    if args.truth:
        manifest.add_input(args.truth)
        truth_map = _load_json(args.truth)
        labels = [truth_map.get(str(table.image_id[i]), "?") for i in range(len(table))]
        report = clustering.build_report(assignments, labels)
        report_doc.update(report.to_json_obj())
    report_path = out / "cluster_report.json"
    _json_dump(report_doc, report_path)
    manifest.add_output(report_path)
    purity_note = f", purity {report_doc['purity']:.4f}" if "purity" in report_doc else ""
    return _finish(manifest, out, f"cluster: k={args.k} over {len(table)} records{purity_note}")


def cmd_ci(args) -> int:
    norms = _norms_from(args)
    flow = ci_mod.load_flow(args.flow)
    if args.ci_command == "eval":
        verdict = ci_mod.evaluate(flow, norms)
        print(f"{verdict.outcome.value}"
              + (f" (rule {verdict.matched_rule_id})" if verdict.matched_rule_id else ""))
        if args.out:
            out = _out_dir(args)
            _json_dump(verdict.to_json_obj(), out / "verdict.json")
        return 0
    # perturb
    domains = (
        {k: list(v) for k, v in _load_json(args.domains).items()}
        if args.domains
        else ci_mod.load_shipped_domains()
    )
    results = ci_mod.perturbations(flow, domains, norms)
    rows = [
        {"parameter": param, "value": getattr(variant, param),
         "outcome": verdict.outcome.value, "matched_rule_id": verdict.matched_rule_id}
        for param, variant, verdict in results
    ]
    for row in rows:
        print(f"{row['parameter']} -> {row['value']!r}: {row['outcome']}")
    if args.out:
        out = _out_dir(args)
        _json_dump({"base_flow": flow.to_json_obj(), "perturbations": rows},
                   out / "perturbations.json")
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args)
    manifest = RunManifest.start("synth", sys.argv[1:], vars(args))
    manifest.add_input(args.scenario)
    scenario = synth.scenario_from_doc(_load_json(args.scenario))
    with StageTimer(manifest, "generate"):
        output = synth.generate(scenario)
    det_path = out / "detections.jsonl"
    write_detections_table(output.detections, det_path)
    manifest.add_output(det_path)
    events_path = out / "events.csv"
    events_path.write_text(
        "".join(line + "\n" for line in serialize_events(output.events))
    )
    manifest.add_output(events_path)
    truth_path = out / "truth.json"
    _json_dump(output.truth, truth_path)
    manifest.add_output(truth_path)
    if args.emit_annotations:
        ann_path = out / "annotations.jsonl"
        ann_path.write_text(
            "".join(
                line + "\n"
                for line in serialize_annotations(
                    synth.annotations_for(output, args.emit_annotations)
                )
            )
        )
        manifest.add_output(ann_path)
    return _finish(
        manifest, out,
        f"synth: {len(output.detections)} detections, {len(output.events)} events, "
        f"{len(output.missed_image_ids)} missed positives",
    )


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsi-audit", description=__doc__)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap internal parallelism (results never change)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_gated(p):
        p.add_argument("--flow", help="declared information flow (JSON)")
        p.add_argument("--norms", help="norm rule set (JSON); default: shipped corpus "
                                       f"or ${NORMS_ENV_VAR}")
        p.add_argument("--acknowledge-ambiguous", action="store_true",
                       help="run even when the flow verdict is Ambiguous")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--fast", action="store_true",
                       help="bulk columnar loader for large detection files")

    p = sub.add_parser("ingest", help="validate and canonicalize input files")
    p.add_argument("--detections")
    p.add_argument("--events")
    p.add_argument("--annotations")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", action="store_true", default=True)
    mode.add_argument("--lenient", dest="strict", action="store_false")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("coverage", help="temporal bins, hull extent, polygon counts")
    p.add_argument("--detections", required=True)
    p.add_argument("--epoch-start", required=True)
    p.add_argument("--epoch-end", required=True)
    p.add_argument("--width-minutes", type=int, default=15)
    p.add_argument("--clock", choices=["utc", "capture-local"], default="utc")
    p.add_argument("--polygons")
    add_gated(p)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("eval", help="validation metrics from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--detections")
    p.add_argument("--label")
    p.add_argument("--negatives-base", type=int,
                   help="negative-classified population for missed-positive extrapolation")
    add_gated(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("threshold", help="select an operating threshold from curves")
    p.add_argument("--curves", required=True)
    p.add_argument("--threshold-policy", required=True,
                   help="max-f1 or precision-floor=P")
    add_gated(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("match-events", help="nearest or radius matches around events")
    p.add_argument("--detections", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--min-conf", type=float, default=0.0)
    p.add_argument("--radius-ft", type=float)
    p.add_argument("--half-window-minutes", type=float, default=30.0)
    add_gated(p)
    p.set_defaults(func=cmd_match_events)

    p = sub.add_parser("geofence", help="detections inside a region and window")
    p.add_argument("--detections", required=True)
    p.add_argument("--region", required=True, help="FeatureCollection with one polygon")
    p.add_argument("--min-conf", type=float, default=0.0)
    p.add_argument("--t0")
    p.add_argument("--t1")
    add_gated(p)
    p.set_defaults(func=cmd_geofence)

    p = sub.add_parser("hotspot", help="windowed density grid and top zones")
    p.add_argument("--detections", required=True)
    p.add_argument("--window", help="daily capture-local window HH:MM-HH:MM")
    p.add_argument("--cell-size-m", type=float, default=hotspot.DEFAULT_CELL_SIZE_M)
    p.add_argument("--origin", help="grid origin 'lat,lon' (default: data SW corner)")
    p.add_argument("--shape", help="grid shape 'NX,NY' (default: cover all records)")
    p.add_argument("--k", type=int, default=10)
    add_gated(p)
    p.set_defaults(func=cmd_hotspot)

    p = sub.add_parser("cluster", help="attribute clustering and purity report")
    p.add_argument("--detections", required=True)
    p.add_argument("--attrs", help="comma-separated attribute keys")
    p.add_argument("--space", action="store_true")
    p.add_argument("--time", action="store_true")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", help="image_id -> label JSON for the purity report")
    add_gated(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("ci", help="evaluate or perturb information flows")
    ci_sub = p.add_subparsers(dest="ci_command", required=True)
    pe = ci_sub.add_parser("eval")
    pe.add_argument("--flow", required=True)
    pe.add_argument("--norms")
    pe.add_argument("--out")
    pe.set_defaults(func=cmd_ci)
    pp = ci_sub.add_parser("perturb")
    pp.add_argument("--flow", required=True)
    pp.add_argument("--norms")
    pp.add_argument("--domains")
    pp.add_argument("--out")
    pp.set_defaults(func=cmd_ci)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-annotations", metavar="LABEL",
                   help="also derive annotations for this group label")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        if argv and argv[0] == "--threads":  # must land before polars import
            os.environ.setdefault("POLARS_MAX_THREADS", argv[1])
        args = build_parser().parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be at least 1")
            os.environ["DSI_AUDIT_THREADS"] = str(args.threads)
        return args.func(args)
    except GateBlocked as exc:
        print(f"blocked: {exc}", file=sys.stderr)
        return 3
    except FlowError as exc:
        print(f"blocked: {exc}", file=sys.stderr)
        return 3
    except (DataError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DsiAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
