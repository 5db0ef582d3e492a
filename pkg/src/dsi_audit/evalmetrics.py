"""Detection-model validation arithmetic.

Naming note: the source dataset's validation protocol reports the fraction
of positive-classified samples that are truly positive (a sample precision)
and the fraction of negative-classified samples that are truly positive (a
false-omission fraction). Operations here are named for what they compute;
the nonstandard field vocabulary stays at the reporting layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ThresholdUnattainable, UsageError
from .records import AnnotationRecord


@dataclass(frozen=True, slots=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise UsageError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_annotations(cls, annotations: Iterable[AnnotationRecord]) -> "ConfusionCounts":
        tp = fp = fn = tn = 0
        for a in annotations:
            if a.predicted and a.actual:
                tp += 1
            elif a.predicted:
                fp += 1
            elif a.actual:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, fn, tn)


@dataclass(frozen=True, slots=True)
class ScoredSample:
    score: float
    actual: bool

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise UsageError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    fpr: float


@dataclass(frozen=True, slots=True)
class ScoreEvaluation:
    pr_curve: tuple[CurvePoint, ...]
    roc_curve: tuple[tuple[float, float], ...]  # (fpr, tpr) including (0, 0)
    average_precision: float
    roc_auc: float


def positive_sample_precision(tp: int, fp: int) -> float:
    """Fraction of positive-classified samples that are truly positive.

    (Reported as the "true positive rate" in the dataset validation write-up.)
    """
    if tp < 0 or fp < 0:
        raise UsageError("counts must be non-negative")
    if tp + fp == 0:
        raise UsageError("empty positive sample")
    return tp / (tp + fp)


def negative_sample_fnr(fn: int, n_sampled_negatives: int) -> float:
    """Fraction of negative-classified samples that are truly positive."""
    if n_sampled_negatives <= 0:
        raise UsageError("empty negative sample")
    if not 0 <= fn <= n_sampled_negatives:
        raise UsageError("fn must lie in [0, n_sampled_negatives]")
    return fn / n_sampled_negatives


def extrapolate_missed(fnr: float, n_negatives_full: int) -> int:
    """Estimated positives hiding in the full negative-classified set."""
    if not 0.0 <= fnr <= 1.0:
        raise UsageError(f"fnr {fnr} outside [0, 1]")
    if n_negatives_full < 0:
        raise UsageError("n_negatives_full must be non-negative")
    return round(fnr * n_negatives_full)


def missed_extrapolation_report(fnr: float, n_negatives_full: int) -> dict:
    """Extrapolation plus an explicit provenance flag for the base count.

    The base is whatever negative-classified population the caller supplies;
    it is not derivable from the annotation sample, so it is flagged as a
    user-supplied (possibly back-solved) quantity in every report.
    """
    return {
        "fnr": fnr,
        "negatives_base": n_negatives_full,
        "missed_estimate": extrapolate_missed(fnr, n_negatives_full),
        "negatives_base_note": (
            "user-supplied extrapolation base; not derivable from the "
            "annotation sample and flagged as back-solved when it matches "
            "no published dataset subset"
        ),
    }


def _scores_actuals(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 2:
        scores = np.asarray(samples[0], dtype=np.float64)
        actual = np.asarray(samples[1], dtype=bool)
    else:
        samples = list(samples)
        scores = np.asarray([s.score for s in samples], dtype=np.float64)
        actual = np.asarray([s.actual for s in samples], dtype=bool)
    if len(scores) != len(actual):
        raise UsageError("scores and actuals must have equal length")
    if len(scores) == 0:
        raise UsageError("no samples")
    if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
        raise UsageError("scores must be finite and in [0, 1]")
    return scores, actual


def evaluate_scores(samples) -> ScoreEvaluation:
    """Threshold sweep over all distinct scores (predict positive at >= t).

    Equal scores collapse into a single threshold step. Average precision is
    the step-wise sum (R_k - R_{k-1}) * P_k; ROC AUC is the trapezoid over
    (FPR, TPR) anchored at (0, 0). Accepts an iterable of ScoredSample or a
    ``(scores, actuals)`` array pair.
    """
    scores, actual = _scores_actuals(samples)
    n_pos = int(actual.sum())
    n_neg = len(actual) - n_pos
    if n_pos == 0:
        raise UsageError("need at least one positive sample")
    if n_neg == 0:
        raise UsageError("need at least one negative sample for a ROC sweep")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_actual = actual[order]
    # last index of each tie group marks one threshold step
    step_ends = np.flatnonzero(
        np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    )
    cum_tp = np.cumsum(sorted_actual)[step_ends]
    cum_pred = step_ends + 1
    cum_fp = cum_pred - cum_tp

    thresholds = sorted_scores[step_ends]
    precision = cum_tp / cum_pred
    recall = cum_tp / n_pos
    fpr = cum_fp / n_neg

    prev_recall = np.concatenate(([0.0], recall[:-1]))
    average_precision = float(np.sum((recall - prev_recall) * precision))

    prev_fpr = np.concatenate(([0.0], fpr[:-1]))
    prev_tpr = np.concatenate(([0.0], recall[:-1]))
    roc_auc = float(np.sum((fpr - prev_fpr) * (recall + prev_tpr) * 0.5))

    pr_curve = tuple(
        CurvePoint(float(t), float(p), float(r), float(f))
        for t, p, r, f in zip(thresholds, precision, recall, fpr)
    )
    roc_curve = ((0.0, 0.0),) + tuple(
        (float(f), float(r)) for f, r in zip(fpr, recall)
    )
    return ScoreEvaluation(pr_curve, roc_curve, average_precision, roc_auc)


@dataclass(frozen=True, slots=True)
class MaxF1:
    """Pick the threshold maximizing F1; ties go to the higher threshold."""


@dataclass(frozen=True, slots=True)
class PrecisionFloor:
    """Lowest threshold whose precision is still >= the floor (max recall)."""

    floor: float

    def __post_init__(self):
        if not 0.0 <= self.floor <= 1.0:
            raise UsageError(f"precision floor {self.floor} outside [0, 1]")


def select_threshold(pr_curve: Sequence[CurvePoint], policy) -> float:
    """Apply a threshold policy to a precision-recall sweep."""
    if len(pr_curve) == 0:
        raise UsageError("empty curve")
    if isinstance(policy, MaxF1):
        best_t, best_f1 = None, -1.0
        for point in pr_curve:  # descending thresholds: first win = higher t
            if point.precision + point.recall == 0:
                continue
            f1 = 2 * point.precision * point.recall / (point.precision + point.recall)
            if f1 > best_f1:
                best_t, best_f1 = point.threshold, f1
        if best_t is None:
            raise UsageError("curve has no point with nonzero precision or recall")
        return best_t
    if isinstance(policy, PrecisionFloor):
        eligible = [p for p in pr_curve if p.precision >= policy.floor]
        if not eligible:
            raise ThresholdUnattainable(
                policy.floor, max(p.precision for p in pr_curve)
            )
        return min(p.threshold for p in eligible)
    raise UsageError(f"unknown threshold policy {policy!r}")


def split_60_20_20(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic seeded 60-20-20 index split."""
    if n <= 0:
        raise UsageError("n must be positive")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = round(0.6 * n)
    n_val = round(0.2 * n)
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def scored_samples_from(
    annotations: Iterable[AnnotationRecord], detections, label: str | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Join annotation ground truth with detection confidences by image_id."""
    from .tables import as_detection_table

    table = as_detection_table(detections)
    conf_by_id: dict[str, float] = {}
    for i in range(len(table)):
        if label is not None and table.label[i] != label:
            continue
        conf_by_id[table.image_id[i]] = float(table.conf[i])
    scores, actuals = [], []
    for a in annotations:
        if a.image_id in conf_by_id:
            scores.append(conf_by_id[a.image_id])
            actuals.append(a.actual)
    if not scores:
        raise UsageError("no annotation matched a detection image_id")
    return np.asarray(scores, dtype=np.float64), np.asarray(actuals, dtype=bool)
