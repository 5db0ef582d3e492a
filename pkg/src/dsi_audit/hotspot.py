"""Time-windowed density grids and deployment-zone extraction."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import time

import numpy as np

from . import geometry
from .errors import UsageError
from .records import GeoPoint
from .tables import MICROS_PER_DAY, DetectionTable, as_detection_table

DEFAULT_CELL_SIZE_M = 250.0


def filter_daily_window(detections, start_local: time, end_local: time) -> DetectionTable:
    """Keep records whose capture-local time of day lies in [start, end).

    Same-day windows only: start must precede end.
    """
    if start_local >= end_local:
        raise UsageError("start of the daily window must precede its end")
    table = as_detection_table(detections)
    tod = table.wall_time_of_day_micros()
    start_us = (
        (start_local.hour * 60 + start_local.minute) * 60 + start_local.second
    ) * 1_000_000 + start_local.microsecond
    end_us = (
        (end_local.hour * 60 + end_local.minute) * 60 + end_local.second
    ) * 1_000_000 + end_local.microsecond
    assert 0 <= start_us < end_us <= MICROS_PER_DAY
    return table.select((tod >= start_us) & (tod < end_us))


@dataclass(slots=True)
class Heatmap:
    """Count grid in a local projection anchored at ``origin``.

    Cell (0, 0) has its lower-left corner at the origin; ``counts[y, x]``
    holds the tally for cell column x, row y. Records outside the grid land
    in ``overflow`` so cells + overflow always equals the windowed input.
    """

    origin: GeoPoint
    cell_size_m: float
    counts: np.ndarray  # int64, shape (ny, nx)
    overflow: int
    window: tuple[time, time] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def projection(self) -> geometry.LocalProjection:
        return geometry.LocalProjection(self.origin.lat, self.origin.lon).fit(
            np.asarray([[self.origin.lat, self.origin.lon]])
        )

    def to_rows(self):
        """Nonzero cells as (cell_x, cell_y, count), row-major order."""
        ny, nx = self.counts.shape
        for y in range(ny):
            for x in range(nx):
                if self.counts[y, x]:
                    yield x, y, int(self.counts[y, x])

    def cell_polygon(self, x: int, y: int) -> list[list[float]]:
        proj = self.projection()
        cs = self.cell_size_m
        corners_xy = np.asarray(
            [[x * cs, y * cs], [(x + 1) * cs, y * cs],
             [(x + 1) * cs, (y + 1) * cs], [x * cs, (y + 1) * cs]]
        )
        latlon = proj.inverse_transform(corners_xy)
        ring = [[float(lon), float(lat)] for lat, lon in latlon]
        ring.append(ring[0])
        return ring

    def to_feature_collection(self) -> dict:
        features = []
        for x, y, count in self.to_rows():
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [self.cell_polygon(x, y)],
                    },
                    "properties": {"cell_x": x, "cell_y": y, "count": count},
                }
            )
        return {"type": "FeatureCollection", "features": features}


def grid_density(
    detections,
    origin: GeoPoint | None = None,
    cell_size_m: float = DEFAULT_CELL_SIZE_M,
    shape: tuple[int, int] | None = None,
    window: tuple[time, time] | None = None,
) -> Heatmap:
    """Bucket records into floor(projected / cell_size) cells.

    With no explicit origin the grid is anchored at the data's south-west
    corner; with no explicit shape it grows to cover every record (overflow
    then stays zero by construction). ``shape`` is (nx, ny).
    """
    if cell_size_m <= 0:
        raise UsageError("cell_size_m must be positive")
    table = as_detection_table(detections)
    if window is not None:
        table = filter_daily_window(table, window[0], window[1])
    if origin is None:
        if len(table) == 0:
            raise UsageError("cannot derive an origin from an empty record set")
        origin = GeoPoint(float(table.lat.min()), float(table.lon.min()))
    proj = geometry.LocalProjection(origin.lat, origin.lon).fit(
        np.asarray([[origin.lat, origin.lon]])
    )
    if len(table):
        xy = proj.transform(np.column_stack((table.lat, table.lon)))
        cell_x = np.floor(xy[:, 0] / cell_size_m).astype(np.int64)
        cell_y = np.floor(xy[:, 1] / cell_size_m).astype(np.int64)
    else:
        cell_x = cell_y = np.empty(0, dtype=np.int64)
    if shape is None:
        nx = int(cell_x.max()) + 1 if len(cell_x) else 1
        ny = int(cell_y.max()) + 1 if len(cell_y) else 1
        if len(cell_x) and (cell_x.min() < 0 or cell_y.min() < 0):
            raise UsageError(
                "records fall south or west of the explicit origin; pass a "
                "shape to count them as overflow instead"
            )
    else:
        nx, ny = shape
        if nx <= 0 or ny <= 0:
            raise UsageError("shape must be positive")
    in_bounds = (cell_x >= 0) & (cell_x < nx) & (cell_y >= 0) & (cell_y < ny)
    flat = cell_y[in_bounds] * nx + cell_x[in_bounds]
    counts = np.bincount(flat, minlength=nx * ny).astype(np.int64).reshape(ny, nx)
    overflow = int(len(cell_x) - int(in_bounds.sum()))
    return Heatmap(origin, float(cell_size_m), counts, overflow, window)


def top_zones(heatmap: Heatmap, k: int) -> list[tuple[tuple[int, int], int]]:
    """The k highest-count cells as ((cell_x, cell_y), count).

    Ties break by row-major cell index; only nonzero cells are returned, so
    fewer than k entries come back from sparse grids.
    """
    if k < 1:
        raise UsageError("k must be at least 1")
    ny, nx = heatmap.counts.shape
    flat = heatmap.counts.ravel()  # row-major: index = y * nx + x
    nonzero = np.flatnonzero(flat)
    if len(nonzero) == 0:
        return []
    order = np.lexsort((nonzero, -flat[nonzero]))
    chosen = nonzero[order[:k]]
    return [
        ((int(i % nx), int(i // nx)), int(flat[i]))
        for i in chosen
    ]
