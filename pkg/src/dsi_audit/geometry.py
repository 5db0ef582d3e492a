"""Planar and spherical geometry primitives.

Distances are great-circle (haversine) on a sphere of radius 6,371,008.8 m
and are reported in feet (3.28084 ft per meter). Areas and grids use a local
equirectangular projection anchored at a reference latitude, which is exact
enough at city scale and keeps hull and shoelace arithmetic planar.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataError, UsageError

EARTH_RADIUS_M = 6_371_008.8
FT_PER_M = 3.28084
M_PER_MILE = 1609.344
SQ_M_PER_SQ_MILE = M_PER_MILE * M_PER_MILE


def haversine_ft(lat1, lon1, lat2, lon2):
    """Great-circle distance in feet. Accepts scalars or broadcastable arrays."""
    lat1 = np.radians(np.asarray(lat1, dtype=np.float64))
    lon1 = np.radians(np.asarray(lon1, dtype=np.float64))
    lat2 = np.radians(np.asarray(lat2, dtype=np.float64))
    lon2 = np.radians(np.asarray(lon2, dtype=np.float64))
    sin_dlat = np.sin((lat2 - lat1) * 0.5)
    sin_dlon = np.sin((lon2 - lon1) * 0.5)
    h = sin_dlat * sin_dlat + np.cos(lat1) * np.cos(lat2) * sin_dlon * sin_dlon
    d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(h, 1.0)))
    out = d * FT_PER_M
    if out.ndim == 0:
        return float(out)
    return out


def unit_vectors(lat, lon) -> np.ndarray:
    """Map latitude/longitude degrees to points on the unit sphere, shape (n, 3)."""
    lat = np.radians(np.atleast_1d(np.asarray(lat, dtype=np.float64)))
    lon = np.radians(np.atleast_1d(np.asarray(lon, dtype=np.float64)))
    cos_lat = np.cos(lat)
    return np.column_stack((cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)))


def ft_to_chord(distance_ft: float) -> float:
    """Chord length on the unit sphere subtending a given surface distance.

    Chord length is strictly increasing in great-circle distance, so
    nearest-by-chord equals nearest-by-haversine; this converts exact
    distance cutoffs into chord cutoffs for index queries.
    """
    angle = (distance_ft / FT_PER_M) / EARTH_RADIUS_M
    return 2.0 * math.sin(min(angle, math.pi) * 0.5)


class LocalProjection(BaseEstimator):
    """Equirectangular projection about a reference point, in meters.

    x = R * dlon * cos(lat0), y = R * dlat. When ``lat0``/``lon0`` are not
    given, ``fit`` anchors the projection at the mean coordinate of the data.
    """

    def __init__(self, lat0: float | None = None, lon0: float | None = None):
        self.lat0 = lat0
        self.lon0 = lon0

    def fit(self, latlon, y=None):
        latlon = np.asarray(latlon, dtype=np.float64)
        if latlon.ndim != 2 or latlon.shape[1] != 2:
            raise UsageError("expected an (n, 2) array of [lat, lon] rows")
        self.lat0_ = float(np.mean(latlon[:, 0])) if self.lat0 is None else self.lat0
        self.lon0_ = float(np.mean(latlon[:, 1])) if self.lon0 is None else self.lon0
        self.cos_lat0_ = math.cos(math.radians(self.lat0_))
        return self

    def transform(self, latlon) -> np.ndarray:
        latlon = np.asarray(latlon, dtype=np.float64)
        x = np.radians(latlon[..., 1] - self.lon0_) * EARTH_RADIUS_M * self.cos_lat0_
        y = np.radians(latlon[..., 0] - self.lat0_) * EARTH_RADIUS_M
        return np.stack((x, y), axis=-1)

    def inverse_transform(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        lat = self.lat0_ + np.degrees(xy[..., 1] / EARTH_RADIUS_M)
        lon = self.lon0_ + np.degrees(xy[..., 0] / (EARTH_RADIUS_M * self.cos_lat0_))
        return np.stack((lat, lon), axis=-1)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Indices of the convex hull of (n, 2) planar points, counter-clockwise.

    Andrew's monotone chain. Collinear boundary points are dropped; degenerate
    inputs yield fewer than 3 indices (a point or a segment).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise UsageError("expected an (n, 2) array of planar points")
    if len(pts) == 0:
        raise UsageError("convex hull needs at least one point")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    # collapse exact duplicates so the chain walk sees strictly sorted points
    sorted_pts = pts[order]
    keep = np.ones(len(order), dtype=bool)
    keep[1:] = np.any(sorted_pts[1:] != sorted_pts[:-1], axis=1)
    order = order[keep]
    if len(order) == 1:
        return order

    def cross(o, a, b) -> float:
        return (pts[a, 0] - pts[o, 0]) * (pts[b, 1] - pts[o, 1]) - (
            pts[a, 1] - pts[o, 1]
        ) * (pts[b, 0] - pts[o, 0])

    lower: list[int] = []
    for idx in order:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], idx) <= 0:
            lower.pop()
        lower.append(idx)
    upper: list[int] = []
    for idx in order[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], idx) <= 0:
            upper.pop()
        upper.append(idx)
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.intp)


def shoelace_area(ring: np.ndarray) -> float:
    """Unsigned polygon area of a planar ring (vertices in order, not closed)."""
    ring = np.asarray(ring, dtype=np.float64)
    if len(ring) < 3:
        return 0.0
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def points_in_ring(px: np.ndarray, py: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Boundary-inclusive point-in-polygon test, vectorized over query points.

    Even-odd ray casting; points lying exactly on an edge count as inside.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    ring = np.asarray(ring, dtype=np.float64)
    n = len(ring)
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        within = (
            (np.minimum(x1, x2) <= px)
            & (px <= np.maximum(x1, x2))
            & (np.minimum(y1, y2) <= py)
            & (py <= np.maximum(y1, y2))
        )
        on_edge |= (cross == 0.0) & within
        straddles = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            crosses = straddles & (px < (x2 - x1) * (py - y1) / (y2 - y1) + x1)
        inside ^= crosses
    return inside | on_edge


def point_in_ring(x: float, y: float, ring: np.ndarray) -> bool:
    return bool(points_in_ring(np.asarray([x]), np.asarray([y]), ring)[0])


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """True when open segments p1-p2 and p3-p4 properly cross."""

    def orient(a, b, c) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and (
        d1 != 0 or d2 != 0
    ) and (d3 != 0 or d4 != 0)


def check_simple_ring(ring: np.ndarray, name: str = "polygon") -> np.ndarray:
    """Validate that a ring has >= 3 vertices and no self-intersections.

    Returns the ring as a float array without the closing vertex. Quadratic
    in the vertex count, which is fine for census-tract-sized rings.
    """
    ring = np.asarray(ring, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise DataError(f"{name}: ring must be an (n, 2) array")
    if len(ring) >= 2 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(ring) < 3:
        raise DataError(f"{name}: ring needs at least 3 distinct vertices")
    if not np.all(np.isfinite(ring)):
        raise DataError(f"{name}: ring has non-finite coordinates")
    n = len(ring)
    for i in range(n):
        a1, a2 = ring[i], ring[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex, not an intersection
            b1, b2 = ring[j], ring[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                raise DataError(f"{name}: ring is self-intersecting")
    return ring


def ring_bbox(ring: np.ndarray) -> tuple[float, float, float, float]:
    ring = np.asarray(ring, dtype=np.float64)
    return (
        float(ring[:, 0].min()),
        float(ring[:, 0].max()),
        float(ring[:, 1].min()),
        float(ring[:, 1].max()),
    )


def iter_latlon(points: Iterable) -> np.ndarray:
    """Coerce GeoPoint iterables or (n, 2) arrays into an (n, 2) float array."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise UsageError("expected an (n, 2) array of [lat, lon] rows")
        return arr
    rows = [(p.lat, p.lon) for p in points]
    if not rows:
        raise UsageError("expected at least one point")
    return np.asarray(rows, dtype=np.float64)
