"""Spatial index over detections and the adversarial retrieval queries.

The index is a k-d tree over unit-sphere coordinates. Chord length is
strictly monotone in great-circle distance, so tree candidates are exact up
to floating point; every query then re-ranks candidates with the same
haversine formula a linear scan would use, which keeps results identical to
a brute-force scan over the filtered set (the contract the tests enforce).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import timedelta

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from . import geometry
from .errors import UsageError
from .records import EventRecord, Timestamp
from .tables import DetectionTable, as_detection_table, as_event_table

_CHORD_SLACK = 1e-9  # relative inflation covering chord/haversine rounding skew


def _workers() -> int:
    """Parallelism cap for batch queries; never affects results."""
    return int(os.environ.get("DSI_AUDIT_THREADS", "-1"))


@dataclass(frozen=True, slots=True)
class NearestHit:
    distance_ft: float
    row: int
    image_id: str


@dataclass(slots=True)
class ProximitySummary:
    median_ft: float
    min_ft: float
    max_ft: float
    pairs: list[tuple[str, str | None, float]]  # (event_id, image_id, distance_ft)


class DetectionIndex(BaseEstimator):
    """Immutable spatial index over detections with conf >= min_conf.

    After ``fit`` the index never changes; queries are freely concurrent and
    their results do not depend on insertion order.
    """

    def __init__(self, min_conf: float = 0.0):
        self.min_conf = min_conf

    def fit(self, detections, y=None):
        if not 0.0 <= self.min_conf <= 1.0:
            raise UsageError(f"min_conf {self.min_conf} outside [0, 1]")
        table = as_detection_table(detections)
        keep = table.conf >= self.min_conf
        self.table_: DetectionTable = table.select(keep)
        self.n_indexed_ = len(self.table_)
        if self.n_indexed_:
            self._xyz = geometry.unit_vectors(self.table_.lat, self.table_.lon)
            self._tree = cKDTree(self._xyz, balanced_tree=False, compact_nodes=False)
        else:
            self._xyz = None
            self._tree = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "table_"):
            raise UsageError("index is not fitted; call fit(detections) first")

    def _refine_nearest(self, event_lat, event_lon, candidates: np.ndarray) -> NearestHit:
        dist = geometry.haversine_ft(
            event_lat, event_lon, self.table_.lat[candidates], self.table_.lon[candidates]
        )
        dist = np.atleast_1d(dist)
        best = dist.min()
        tied = candidates[dist == best]
        if len(tied) > 1:
            ids = self.table_.image_id[tied]
            row = int(tied[np.argsort(ids, kind="stable")[0]])
        else:
            row = int(tied[0])
        return NearestHit(float(best), row, str(self.table_.image_id[row]))

    def nearest_detection(self, event: EventRecord) -> NearestHit | None:
        """Globally nearest detection by great-circle distance.

        Ties break toward the lexicographically smaller image_id. Returns
        None when the index is empty.
        """
        self._check_fitted()
        if self.n_indexed_ == 0:
            return None
        q = geometry.unit_vectors(event.point.lat, event.point.lon)[0]
        d_chord, _ = self._tree.query(q, k=1)
        radius = d_chord * (1.0 + _CHORD_SLACK) + 1e-15
        candidates = np.asarray(self._tree.query_ball_point(q, radius), dtype=np.intp)
        return self._refine_nearest(event.point.lat, event.point.lon, candidates)

    def nearest_all(self, events) -> list[NearestHit]:
        """Vectorized nearest query for an event batch."""
        self._check_fitted()
        events = as_event_table(events)
        if self.n_indexed_ == 0:
            raise UsageError("index is empty")
        q = geometry.unit_vectors(events.lat, events.lon)
        d_chord, _ = self._tree.query(q, k=1, workers=_workers())
        radii = d_chord * (1.0 + _CHORD_SLACK) + 1e-15
        balls = self._tree.query_ball_point(q, radii, workers=_workers())
        return [
            self._refine_nearest(
                float(events.lat[i]), float(events.lon[i]),
                np.asarray(balls[i], dtype=np.intp),
            )
            for i in range(len(events))
        ]

    def proximity_summary(self, events) -> ProximitySummary:
        """Per-event nearest distances; the median is the lower median."""
        self._check_fitted()
        events = as_event_table(events)
        if len(events) == 0:
            raise UsageError("need at least one event")
        if self.n_indexed_ == 0:
            raise UsageError("index is empty")
        hits = self.nearest_all(events)
        distances = np.asarray([h.distance_ft for h in hits])
        order = np.argsort(distances, kind="stable")
        median = float(distances[order[(len(distances) - 1) // 2]])
        pairs = [
            (str(events.event_id[i]), hits[i].image_id, hits[i].distance_ft)
            for i in range(len(events))
        ]
        return ProximitySummary(
            median_ft=median,
            min_ft=float(distances.min()),
            max_ft=float(distances.max()),
            pairs=pairs,
        )

    def geofence(
        self,
        region_ring,
        window: tuple[Timestamp, Timestamp] | None = None,
    ) -> np.ndarray:
        """Rows with a point inside-or-on the region, optionally in [t0, t1).

        Returns row indices into ``table_`` ordered by (ts, image_id).
        """
        self._check_fitted()
        ring = geometry.check_simple_ring(np.asarray(region_ring, dtype=np.float64), "region")
        if self.n_indexed_ == 0:
            return np.empty(0, dtype=np.intp)
        lat_min, lat_max, lon_min, lon_max = geometry.ring_bbox(ring)
        mask = (
            (self.table_.lat >= lat_min)
            & (self.table_.lat <= lat_max)
            & (self.table_.lon >= lon_min)
            & (self.table_.lon <= lon_max)
        )
        idx = np.flatnonzero(mask)
        if len(idx):
            hit = geometry.points_in_ring(
                self.table_.lat[idx], self.table_.lon[idx], ring
            )
            idx = idx[hit]
        if window is not None:
            t0, t1 = window
            if t1.micros <= t0.micros:
                raise UsageError("window end must be after window start")
            ts = self.table_.ts_micros[idx]
            idx = idx[(ts >= t0.micros) & (ts < t1.micros)]
        order = np.lexsort((self.table_.image_id[idx], self.table_.ts_micros[idx]))
        return idx[order]

    def match_known_event(
        self,
        event: EventRecord,
        radius_ft: float,
        half_window: timedelta,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Detections within radius_ft and |ts - event.ts| <= half_window.

        Returns (row indices, distances_ft) sorted by distance, then image_id.
        """
        self._check_fitted()
        if radius_ft < 0:
            raise UsageError("radius must be non-negative")
        if half_window < timedelta(0):
            raise UsageError("half_window must be non-negative")
        if self.n_indexed_ == 0:
            return np.empty(0, dtype=np.intp), np.empty(0)
        q = geometry.unit_vectors(event.point.lat, event.point.lon)[0]
        chord = geometry.ft_to_chord(radius_ft) * (1.0 + _CHORD_SLACK) + 1e-15
        candidates = np.asarray(self._tree.query_ball_point(q, chord), dtype=np.intp)
        if len(candidates) == 0:
            return np.empty(0, dtype=np.intp), np.empty(0)
        dist = np.atleast_1d(
            geometry.haversine_ft(
                event.point.lat,
                event.point.lon,
                self.table_.lat[candidates],
                self.table_.lon[candidates],
            )
        )
        keep = dist <= radius_ft
        half_us = half_window // timedelta(microseconds=1)
        dt = np.abs(self.table_.ts_micros[candidates] - event.ts.micros)
        keep &= dt <= half_us
        candidates, dist = candidates[keep], dist[keep]
        order = np.lexsort((self.table_.image_id[candidates], dist))
        return candidates[order], dist[order]


def build_index(detections, min_conf: float = 0.0) -> DetectionIndex:
    """Convenience constructor mirroring DetectionIndex(min_conf).fit(...)."""
    return DetectionIndex(min_conf=min_conf).fit(detections)
