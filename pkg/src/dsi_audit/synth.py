"""Deterministic synthetic scenario generator with planted ground truth.

Every oracle and end-to-end test runs on generated data, so generation is
fully reproducible: one seed fixes everything, and each group draws from its
own child stream (spawned by position), so adding a group never perturbs
the draws of the groups before it. Child stream 0 belongs to events and
stream 1 to the negative-classified universe; groups own streams 2, 3, ...

Observation noise follows the operational metrics of detector validation:
``tpr`` is the probability that an emitted positive record is truly a group
member (the rest are decoys at low confidence), and ``fnr`` is the fraction
of the negative-classified universe that actually depicts a member (those
records exist in the ground truth but never appear in the detections).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import time

import numpy as np

from . import geometry
from .errors import UsageError
from .records import Epoch, EventRecord, GeoPoint, GroupClass, GroupKind, Timestamp
from .tables import MICROS_PER_DAY, MICROS_PER_MINUTE, DetectionTable


@dataclass(frozen=True, slots=True)
class Region:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        GeoPoint(self.lat_min, self.lon_min)
        GeoPoint(self.lat_max, self.lon_max)
        if self.lat_min >= self.lat_max or self.lon_min >= self.lon_max:
            raise UsageError("region is empty")

    @property
    def center(self) -> GeoPoint:
        return GeoPoint(
            (self.lat_min + self.lat_max) / 2, (self.lon_min + self.lon_max) / 2
        )


@dataclass(frozen=True, slots=True)
class GroupSpec:
    group: GroupClass
    centers: tuple[GeoPoint, ...]
    spatial_std_m: float
    base_rate_per_bin: float
    daily_window: tuple[time, time] | None = None
    attr_means: dict[str, float] = field(default_factory=dict)
    attr_noise: float = 0.0

    def __post_init__(self):
        if not self.centers:
            raise UsageError(f"group {self.group.name!r} has no hotspot centers")
        if self.base_rate_per_bin < 0 or self.spatial_std_m < 0:
            raise UsageError("rates and standard deviations must be non-negative")


@dataclass(frozen=True, slots=True)
class NoiseSpec:
    tpr: float = 1.0
    fnr: float = 0.0
    pos_conf_beta: tuple[float, float] = (8.0, 2.0)
    neg_conf_beta: tuple[float, float] = (2.0, 8.0)

    def __post_init__(self):
        if not 0.0 < self.tpr <= 1.0:
            raise UsageError("tpr must be in (0, 1]")
        if not 0.0 <= self.fnr < 1.0:
            raise UsageError("fnr must be in [0, 1)")


@dataclass(frozen=True, slots=True)
class EventSpec:
    count: int
    target_group: str
    jitter_m: float
    category: str = "vending_violation"

    def __post_init__(self):
        if self.count < 0 or self.jitter_m < 0:
            raise UsageError("event count and jitter must be non-negative")


@dataclass(frozen=True, slots=True)
class Scenario:
    seed: int
    epoch: Epoch
    region: Region
    groups: tuple[GroupSpec, ...]
    noise: NoiseSpec = NoiseSpec()
    events: EventSpec | None = None
    n_negative_images: int = 0
    bin_width_minutes: int = 15
    # (instant_us, offset_minutes) change points; the epoch start offset
    # applies before the first change
    offset_changes: tuple[tuple[int, int], ...] = ()


@dataclass(slots=True)
class SynthOutput:
    detections: DetectionTable  # canonical (ts, image_id) order
    truth: dict[str, str]  # image_id -> planted label ("background" for none)
    events: list[EventRecord]
    missed_image_ids: list[str]
    negative_image_ids: list[str]


BACKGROUND = "background"


def _offsets_at(scenario: Scenario, instants: np.ndarray) -> np.ndarray:
    base = scenario.epoch.start.utc_offset_minutes
    out = np.full(len(instants), base, dtype=np.int32)
    for change_us, offset in scenario.offset_changes:
        out[instants >= change_us] = offset
    return out


def _active_bins(scenario: Scenario, spec: GroupSpec) -> tuple[np.ndarray, int]:
    width_us = scenario.bin_width_minutes * MICROS_PER_MINUTE
    n_bins = -((-scenario.epoch.span_micros) // width_us)
    starts = scenario.epoch.start.micros + np.arange(n_bins, dtype=np.int64) * width_us
    if spec.daily_window is None:
        return starts, n_bins
    offsets = _offsets_at(scenario, starts).astype(np.int64)
    tod = (starts + offsets * MICROS_PER_MINUTE) % MICROS_PER_DAY
    lo = (spec.daily_window[0].hour * 60 + spec.daily_window[0].minute) * MICROS_PER_MINUTE
    hi = (spec.daily_window[1].hour * 60 + spec.daily_window[1].minute) * MICROS_PER_MINUTE
    return starts[(tod >= lo) & (tod < hi)], n_bins


def _jitter_positions(
    proj: geometry.LocalProjection,
    region: Region,
    center_xy: np.ndarray,
    std_m: float,
    rng: np.random.Generator,
) -> np.ndarray:
    n = len(center_xy)
    xy = center_xy + rng.normal(0.0, std_m, (n, 2)) if std_m > 0 else center_xy
    latlon = proj.inverse_transform(xy)
    latlon[:, 0] = np.clip(latlon[:, 0], region.lat_min, region.lat_max)
    latlon[:, 1] = np.clip(latlon[:, 1], region.lon_min, region.lon_max)
    return latlon


def generate(scenario: Scenario) -> SynthOutput:
    """Generate detections, planted ground truth, and events for a scenario."""
    streams = np.random.SeedSequence(scenario.seed).spawn(2 + len(scenario.groups))
    rng_events = np.random.default_rng(streams[0])
    rng_negatives = np.random.default_rng(streams[1])
    proj = geometry.LocalProjection(
        scenario.region.center.lat, scenario.region.center.lon
    ).fit(np.asarray([[scenario.region.center.lat, scenario.region.center.lon]]))

    ids: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    lats: list[np.ndarray] = []
    lons: list[np.ndarray] = []
    confs: list[np.ndarray] = []
    instants: list[np.ndarray] = []
    attr_cols: dict[str, list[np.ndarray]] = {}
    attr_keys = sorted({k for g in scenario.groups for k in g.attr_means})
    truth: dict[str, str] = {}
    true_counts: list[int] = []

    def push(batch_ids, batch_labels, lat, lon, conf, instant, attrs):
        ids.append(batch_ids)
        labels.append(batch_labels)
        lats.append(lat)
        lons.append(lon)
        confs.append(conf)
        instants.append(instant)
        for key in attr_keys:
            attr_cols.setdefault(key, []).append(
                attrs.get(key, np.full(len(batch_ids), np.nan))
            )

    for gi, spec in enumerate(scenario.groups):
        rng = np.random.default_rng(streams[2 + gi])
        starts, _ = _active_bins(scenario, spec)
        width_us = scenario.bin_width_minutes * MICROS_PER_MINUTE
        per_bin = rng.poisson(spec.base_rate_per_bin, len(starts))
        n_true = int(per_bin.sum())
        instant = np.repeat(starts, per_bin) + rng.integers(0, width_us, n_true)
        centers_xy = proj.transform(
            np.asarray([[c.lat, c.lon] for c in spec.centers])
        )
        chosen = rng.integers(0, len(spec.centers), n_true)
        latlon = _jitter_positions(
            proj, scenario.region, centers_xy[chosen], spec.spatial_std_m, rng
        )
        conf = rng.beta(*scenario.noise.pos_conf_beta, n_true)
        batch_ids = np.array(
            [f"det-{gi}-{k:08d}" for k in range(n_true)], dtype=object
        )
        attrs = {
            key: mean + rng.normal(0.0, spec.attr_noise, n_true)
            for key, mean in spec.attr_means.items()
        }
        group_label = np.full(n_true, spec.group.name, dtype=object)
        push(batch_ids, group_label, latlon[:, 0], latlon[:, 1], conf, instant, attrs)
        for image_id in batch_ids:
            truth[image_id] = spec.group.name
        true_counts.append(n_true)

        # decoys: false positives the classifier asserted for this label
        if scenario.noise.tpr < 1.0 and n_true:
            ratio = (1.0 - scenario.noise.tpr) / scenario.noise.tpr
            n_decoy = int(rng.binomial(n_true, min(ratio, 1.0))) if ratio <= 1.0 else int(
                rng.poisson(n_true * ratio)
            )
            decoy_lat = rng.uniform(scenario.region.lat_min, scenario.region.lat_max, n_decoy)
            decoy_lon = rng.uniform(scenario.region.lon_min, scenario.region.lon_max, n_decoy)
            decoy_instant = scenario.epoch.start.micros + rng.integers(
                0, scenario.epoch.span_micros, n_decoy
            )
            decoy_conf = rng.beta(*scenario.noise.neg_conf_beta, n_decoy)
            decoy_ids = np.array(
                [f"dec-{gi}-{k:08d}" for k in range(n_decoy)], dtype=object
            )
            decoy_attrs = {
                key: rng.uniform(0.0, 1.0, n_decoy) for key in spec.attr_means
            }
            push(
                decoy_ids,
                np.full(n_decoy, spec.group.name, dtype=object),
                decoy_lat,
                decoy_lon,
                decoy_conf,
                decoy_instant,
                decoy_attrs,
            )
            for image_id in decoy_ids:
                truth[image_id] = BACKGROUND

    # the negative-classified universe: plain negatives plus missed positives
    missed_ids: list[str] = []
    negative_ids: list[str] = []
    if scenario.n_negative_images:
        n_missed = int(rng_negatives.binomial(scenario.n_negative_images, scenario.noise.fnr))
        weights = np.asarray(true_counts, dtype=np.float64)
        if weights.sum() == 0:
            weights = np.ones(len(scenario.groups))
        weights = weights / weights.sum()
        for k in range(n_missed):
            gi = int(rng_negatives.choice(len(scenario.groups), p=weights))
            image_id = f"miss-{k:08d}"
            truth[image_id] = scenario.groups[gi].group.name
            missed_ids.append(image_id)
        for k in range(scenario.n_negative_images - n_missed):
            image_id = f"neg-{k:08d}"
            truth[image_id] = BACKGROUND
            negative_ids.append(image_id)

    events: list[EventRecord] = []
    if scenario.events is not None and scenario.events.count:
        spec = scenario.events
        matches = [g for g in scenario.groups if g.group.name == spec.target_group]
        if not matches:
            raise UsageError(f"event target group {spec.target_group!r} not in scenario")
        target = matches[0]
        centers_xy = proj.transform(np.asarray([[c.lat, c.lon] for c in target.centers]))
        chosen = np.arange(spec.count) % len(target.centers)  # cover every center
        theta = rng_events.uniform(0.0, 2 * np.pi, spec.count)
        radius = spec.jitter_m * np.sqrt(rng_events.uniform(0.0, 1.0, spec.count))
        xy = centers_xy[chosen] + np.column_stack(
            (radius * np.cos(theta), radius * np.sin(theta))
        )
        latlon = proj.inverse_transform(xy)
        instant = scenario.epoch.start.micros + rng_events.integers(
            0, scenario.epoch.span_micros, spec.count
        )
        offsets = _offsets_at(scenario, instant)
        for i in range(spec.count):
            events.append(
                EventRecord(
                    f"ev-{i:05d}",
                    GeoPoint(float(latlon[i, 0]), float(latlon[i, 1])),
                    Timestamp.from_micros(int(instant[i]), int(offsets[i])),
                    spec.category,
                )
            )

    if ids:
        all_ids = np.concatenate(ids)
        all_instants = np.concatenate(instants)
        table = DetectionTable(
            all_ids,
            np.concatenate(labels),
            np.concatenate(lats),
            np.concatenate(lons),
            np.concatenate(confs),
            all_instants.astype(np.int64),
            _offsets_at(scenario, all_instants),
            {k: np.concatenate(v) for k, v in attr_cols.items()} if attr_keys else {},
        ).sorted_canonical()
    else:
        empty = np.empty(0, dtype=object)
        table = DetectionTable(
            empty, empty.copy(), np.empty(0), np.empty(0), np.empty(0),
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int32), {},
        )
    return SynthOutput(table, truth, events, missed_ids, negative_ids)


def annotations_for(output: SynthOutput, label: str):
    """Derive predicted/actual annotation records for one group label."""
    from .records import AnnotationRecord

    predicted_ids = {
        output.detections.image_id[i]
        for i in range(len(output.detections))
        if output.detections.label[i] == label
    }
    annotations = []
    for image_id, actual_label in sorted(output.truth.items()):
        annotations.append(
            AnnotationRecord(
                image_id,
                predicted=image_id in predicted_ids,
                actual=actual_label == label,
            )
        )
    return annotations


def dst_fallback_stream(
    records_per_minute: int = 1,
) -> tuple[DetectionTable, Epoch]:
    """A stream uniform in real time crossing the 2023-11-05 US fall-back.

    Epoch: four real hours starting 2023-11-05 00:00 EDT (04:00 UTC). The
    clock falls back at 06:00 UTC (02:00 EDT -> 01:00 EST). Under the
    capture-local first-occurrence convention this yields exactly four empty
    15-minute slots spanning the absorbed hour.
    """
    start = Timestamp.parse("2023-11-05T00:00:00-04:00")
    end = Timestamp.from_micros(start.micros + 4 * 60 * MICROS_PER_MINUTE, -300)
    transition = start.micros + 120 * MICROS_PER_MINUTE  # 06:00 UTC
    minutes = np.arange(240, dtype=np.int64)
    instants = np.repeat(start.micros + minutes * MICROS_PER_MINUTE, records_per_minute)
    offsets = np.where(instants >= transition, -300, -240).astype(np.int32)
    n = len(instants)
    table = DetectionTable(
        np.array([f"dst-{k:06d}" for k in range(n)], dtype=object),
        np.full(n, "food_truck", dtype=object),
        np.full(n, 40.75),
        np.full(n, -73.95),
        np.full(n, 0.9),
        instants,
        offsets,
        {},
    )
    return table, Epoch(start, end)


def scenario_from_doc(doc: dict) -> Scenario:
    """Build a Scenario from its JSON configuration document."""
    try:
        epoch = Epoch(
            Timestamp.parse(doc["epoch"]["start"]), Timestamp.parse(doc["epoch"]["end"])
        )
        region = Region(**doc["region"])
        groups = []
        for g in doc["groups"]:
            window = None
            if g.get("daily_window"):
                from .tables import parse_local_time

                window = (
                    parse_local_time(g["daily_window"][0]),
                    parse_local_time(g["daily_window"][1]),
                )
            groups.append(
                GroupSpec(
                    group=GroupClass(GroupKind(g["kind"]), g["name"]),
                    centers=tuple(GeoPoint(c[0], c[1]) for c in g["centers"]),
                    spatial_std_m=float(g["spatial_std_m"]),
                    base_rate_per_bin=float(g["base_rate_per_bin"]),
                    daily_window=window,
                    attr_means={k: float(v) for k, v in g.get("attr_means", {}).items()},
                    attr_noise=float(g.get("attr_noise", 0.0)),
                )
            )
        noise = NoiseSpec(**doc.get("noise", {})) if "noise" in doc else NoiseSpec()
        events = None
        if "events" in doc and doc["events"] is not None:
            events = EventSpec(**doc["events"])
        return Scenario(
            seed=int(doc["seed"]),
            epoch=epoch,
            region=region,
            groups=tuple(groups),
            noise=noise,
            events=events,
            n_negative_images=int(doc.get("n_negative_images", 0)),
            bin_width_minutes=int(doc.get("bin_width_minutes", 15)),
            offset_changes=tuple(
                (int(c[0]), int(c[1])) for c in doc.get("offset_changes", ())
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad scenario document: {exc}") from None
