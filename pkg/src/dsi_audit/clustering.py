"""Clustering-based group membership inference.

Demonstrates the de-identification failure mode where visually similar
obfuscated objects cluster back into identifiable groups. The clusterer is
a deliberately plain seeded k-means: deterministic for a given (inputs, k,
seed) and invariant to input order, because every expected value in the
test suite depends on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DataError, UsageError
from .tables import as_detection_table

# De-identification failure taxonomy; the first four rows are descriptive
# annotations, the fifth is what the clusterer demonstrates.
FAILURE_MODES = (
    "False negatives",
    "False positives",
    "Streisand effect",
    "Contextual identification",
    "Membership inference",
)
MEMBERSHIP_INFERENCE = "Membership inference"
DOMINANCE_THRESHOLD = 0.8


@dataclass(frozen=True, slots=True)
class FeatureSpec:
    """Which detection attributes (and derived features) feed the clusterer."""

    attr_keys: tuple[str, ...]
    include_space: bool = False
    include_time: bool = False

    def __post_init__(self):
        if not self.attr_keys and not (self.include_space or self.include_time):
            raise UsageError("feature spec selects no features")


def _minmax(column: np.ndarray) -> np.ndarray:
    lo, hi = float(column.min()), float(column.max())
    if hi == lo:
        return np.full(len(column), 0.5)
    return (column - lo) / (hi - lo)


def featurize(detections, spec: FeatureSpec) -> np.ndarray:
    """Build the (n, d) feature matrix for a detection batch.

    Attribute columns are taken verbatim in spec order; optional space/time
    features are min-max normalized over the batch (zero-variance columns
    map to 0.5). A listed key missing from any record is an error.
    """
    table = as_detection_table(detections)
    if len(table) == 0:
        raise UsageError("no records to featurize")
    columns = []
    for key in spec.attr_keys:
        if key not in table.attrs:
            raise DataError(f"attribute {key!r} missing from the record set")
        col = table.attrs[key]
        if np.isnan(col).any():
            bad = int(np.flatnonzero(np.isnan(col))[0])
            raise DataError(
                f"attribute {key!r} missing on record {table.image_id[bad]!r}"
            )
        columns.append(col.astype(np.float64))
    if spec.include_space:
        columns.append(_minmax(table.lat))
        columns.append(_minmax(table.lon))
    if spec.include_time:
        columns.append(_minmax(table.ts_micros.astype(np.float64)))
    return np.column_stack(columns)


class SeededKMeans(BaseEstimator):
    """K-means with seeded k-means++ initialization and stable-order Lloyd steps.

    All seeding draws and center updates run over a lexicographically sorted
    copy of the input, so the fitted centers (and therefore assignments) are
    bit-identical for any permutation of the same vectors. Convergence is
    assignment stability, capped at ``max_iter`` sweeps.
    """

    def __init__(self, n_clusters: int = 2, seed: int = 0, max_iter: int = 100):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise UsageError("expected an (n, d) feature matrix")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix has non-finite entries")
        n = len(X)
        if self.n_clusters < 1:
            raise UsageError("n_clusters must be at least 1")
        if self.n_clusters > n:
            raise UsageError(f"k={self.n_clusters} exceeds {n} vectors")
        if self.max_iter < 1:
            raise UsageError("max_iter must be at least 1")

        order = np.lexsort(X.T[::-1])  # canonical row order
        S = X[order]
        rng = np.random.default_rng(self.seed)
        centers = self._seed_centers(S, rng)

        labels_sorted = self._assign(S, centers)
        for iteration in range(1, self.max_iter + 1):
            centers = self._update_centers(S, labels_sorted, centers)
            new_labels = self._assign(S, centers)
            if np.array_equal(new_labels, labels_sorted):
                break
            labels_sorted = new_labels
        self.n_iter_ = iteration
        self.cluster_centers_ = centers
        self.labels_ = self._assign(X, centers)
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "cluster_centers_"):
            raise UsageError("not fitted")
        return self._assign(np.asarray(X, dtype=np.float64), self.cluster_centers_)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_

    def _seed_centers(self, S: np.ndarray, rng) -> np.ndarray:
        k = self.n_clusters
        centers = np.empty((k, S.shape[1]))
        centers[0] = S[int(rng.integers(len(S)))]
        d2 = np.sum((S - centers[0]) ** 2, axis=1)
        for j in range(1, k):
            total = d2.sum()
            if total == 0.0:
                centers[j:] = centers[0]
                return centers
            cum = np.cumsum(d2)
            draw = rng.random() * total
            centers[j] = S[int(np.searchsorted(cum, draw, side="right"))]
            d2 = np.minimum(d2, np.sum((S - centers[j]) ** 2, axis=1))
        return centers

    @staticmethod
    def _assign(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
        # squared distances; ties go to the lowest cluster index via argmin
        d2 = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]
        )
        return np.argmin(d2, axis=1)

    def _update_centers(
        self, S: np.ndarray, labels: np.ndarray, old: np.ndarray
    ) -> np.ndarray:
        k = self.n_clusters
        centers = old.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, S)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]
        empties = np.flatnonzero(~occupied)
        if len(empties):
            # deterministic re-seed: successive farthest points from their
            # assigned centers
            d2 = np.sum((S - centers[labels]) ** 2, axis=1)
            order = np.argsort(-d2, kind="stable")
            for rank, j in enumerate(empties):
                centers[j] = S[order[rank % len(order)]]
        return centers


def cluster(vectors, k: int, seed: int) -> np.ndarray:
    """Assignments for (vectors, k, seed); reproducible and order-invariant."""
    return SeededKMeans(n_clusters=k, seed=seed).fit_predict(vectors)


def purity(assignments, true_labels) -> float:
    """Sum over clusters of the dominant true-label count, divided by N."""
    assignments = np.asarray(assignments)
    true_labels = np.asarray(true_labels, dtype=object)
    if len(assignments) != len(true_labels):
        raise UsageError("assignments and labels must have equal length")
    if len(assignments) == 0:
        raise UsageError("purity of an empty assignment is undefined")
    dominant_total = 0
    for c in np.unique(assignments):
        members = true_labels[assignments == c]
        _, counts = np.unique(members.astype(str), return_counts=True)
        dominant_total += int(counts.max())
    return dominant_total / len(assignments)


@dataclass(slots=True)
class ClusterReport:
    assignments: np.ndarray
    purity: float
    dominant_labels: dict[int, tuple[str, float]]  # cluster -> (label, share)
    failure_mode_tags: dict[int, list[str]]
    taxonomy_notes: dict[str, str] = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "purity": self.purity,
            "clusters": {
                str(c): {
                    "dominant_label": label,
                    "dominant_share": share,
                    "failure_modes": self.failure_mode_tags.get(int(c), []),
                }
                for c, (label, share) in sorted(self.dominant_labels.items())
            },
            "taxonomy_notes": dict(sorted(self.taxonomy_notes.items())),
        }


def build_report(
    assignments,
    true_labels,
    taxonomy_notes: dict[str, str] | None = None,
) -> ClusterReport:
    """Score assignments against planted labels and tag failure modes.

    A cluster whose dominant planted label covers at least 80% of it gets
    the "Membership inference" tag. The other four taxonomy rows are
    descriptive scenario metadata, carried verbatim when supplied.
    """
    notes = dict(taxonomy_notes or {})
    unknown = set(notes) - set(FAILURE_MODES)
    if unknown:
        raise UsageError(f"unknown taxonomy rows: {sorted(unknown)}")
    assignments = np.asarray(assignments)
    true_labels = np.asarray(true_labels, dtype=object)
    total_purity = purity(assignments, true_labels)
    dominant: dict[int, tuple[str, float]] = {}
    tags: dict[int, list[str]] = {}
    for c in np.unique(assignments):
        members = true_labels[assignments == c].astype(str)
        values, counts = np.unique(members, return_counts=True)
        best = int(np.argmax(counts))
        share = counts[best] / len(members)
        dominant[int(c)] = (str(values[best]), float(share))
        tags[int(c)] = [MEMBERSHIP_INFERENCE] if share >= DOMINANCE_THRESHOLD else []
    return ClusterReport(assignments, total_purity, dominant, tags, notes)
