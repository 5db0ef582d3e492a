"""Group-privacy auditing toolkit for dense street imagery metadata."""

__version__ = "0.1.0"

from .ci import InformationFlow, NormRule, Outcome, RuleSet, Verdict, evaluate, gate_analysis
from .clustering import FeatureSpec, SeededKMeans, cluster, featurize, purity
from .coverage import ClockMode, bin_by_interval, convex_hull_area, interval_stats, polygon_counts
from .evalmetrics import (
    ConfusionCounts,
    CurvePoint,
    MaxF1,
    PrecisionFloor,
    ScoredSample,
    evaluate_scores,
    extrapolate_missed,
    negative_sample_fnr,
    positive_sample_precision,
    select_threshold,
)
from .geometry import LocalProjection, haversine_ft
from .hotspot import Heatmap, filter_daily_window, grid_density, top_zones
from .records import (
    AnnotationRecord,
    DetectionRecord,
    Epoch,
    EventRecord,
    GeoPoint,
    GroupClass,
    GroupKind,
    Timestamp,
    parse_annotations,
    parse_detections,
    parse_events,
)
from .spatial import DetectionIndex, ProximitySummary, build_index
from .synth import EventSpec, GroupSpec, NoiseSpec, Region, Scenario, generate
from .tables import DetectionTable, EventTable, as_detection_table, load_detections_table

__all__ = [
    "AnnotationRecord",
    "ClockMode",
    "ConfusionCounts",
    "CurvePoint",
    "DetectionIndex",
    "DetectionRecord",
    "DetectionTable",
    "Epoch",
    "EventRecord",
    "EventSpec",
    "EventTable",
    "FeatureSpec",
    "GeoPoint",
    "GroupClass",
    "GroupKind",
    "GroupSpec",
    "Heatmap",
    "InformationFlow",
    "LocalProjection",
    "MaxF1",
    "NoiseSpec",
    "NormRule",
    "Outcome",
    "PrecisionFloor",
    "ProximitySummary",
    "Region",
    "RuleSet",
    "Scenario",
    "ScoredSample",
    "SeededKMeans",
    "Timestamp",
    "Verdict",
    "__version__",
    "as_detection_table",
    "bin_by_interval",
    "build_index",
    "cluster",
    "convex_hull_area",
    "evaluate",
    "evaluate_scores",
    "extrapolate_missed",
    "featurize",
    "filter_daily_window",
    "gate_analysis",
    "generate",
    "grid_density",
    "haversine_ft",
    "interval_stats",
    "load_detections_table",
    "negative_sample_fnr",
    "parse_annotations",
    "parse_detections",
    "parse_events",
    "polygon_counts",
    "positive_sample_precision",
    "purity",
    "select_threshold",
    "top_zones",
]
