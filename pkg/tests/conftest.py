"""Shared test fixtures and small data builders."""

from __future__ import annotations

import numpy as np
import pytest

from dsi_audit.records import Epoch, GeoPoint, Timestamp
from dsi_audit.tables import DetectionTable

NYC = dict(lat_min=40.55, lat_max=40.92, lon_min=-74.05, lon_max=-73.70)


def make_table(
    n: int,
    seed: int = 0,
    lat_range=(NYC["lat_min"], NYC["lat_max"]),
    lon_range=(NYC["lon_min"], NYC["lon_max"]),
    t0: str = "2023-08-11T00:00:00-04:00",
    span_hours: float = 24.0,
    conf=None,
    label: str = "food_truck",
    attrs: dict[str, np.ndarray] | None = None,
) -> DetectionTable:
    """Random but reproducible detection table."""
    rng = np.random.default_rng(seed)
    start = Timestamp.parse(t0)
    ts = start.micros + rng.integers(0, int(span_hours * 3600e6), n)
    return DetectionTable(
        np.array([f"img{i:07d}" for i in range(n)], dtype=object),
        np.full(n, label, dtype=object),
        rng.uniform(*lat_range, n),
        rng.uniform(*lon_range, n),
        rng.uniform(0.0, 1.0, n) if conf is None else np.asarray(conf, dtype=float),
        ts.astype(np.int64),
        np.full(n, -240, dtype=np.int32),
        attrs or {},
    )


def day_epoch(t0: str = "2023-08-11T00:00:00-04:00", days: float = 1.0) -> Epoch:
    start = Timestamp.parse(t0)
    end = Timestamp.from_micros(
        start.micros + int(days * 86400e6), start.utc_offset_minutes
    )
    return Epoch(start, end)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def nyc_point():
    return GeoPoint(40.75, -73.95)
