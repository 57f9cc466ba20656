"""Metrics: step-count errors, confusion matrices with per-class
precision/recall, visit matching at a distance threshold, and the
vehicle vs non-vehicle roll-up."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mobility import Visit
from .signal_core import LabelTimeline, haversine_m

DEFAULT_VISIT_MATCH_M = 10.0
DEFAULT_VEHICLE_CLASSES = ("car", "bus", "train_subway")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are actual classes, columns predicted."""

    classes: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=int)
        object.__setattr__(self, "counts", counts)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise ValueError("counts must be square and match classes")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")

    @classmethod
    def zeros(cls, classes: Sequence[str]) -> "ConfusionMatrix":
        k = len(classes)
        return cls(tuple(classes), np.zeros((k, k), dtype=int))

    def add(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.classes != self.classes:
            raise ValueError("class sets differ")
        return ConfusionMatrix(self.classes, self.counts + other.counts)

    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        total = self.total()
        return float(np.trace(self.counts)) / total if total else 0.0

    def recall(self, cls_name: str) -> float:
        i = self.classes.index(cls_name)
        row = int(self.counts[i].sum())
        return float(self.counts[i, i]) / row if row else 0.0

    def precision(self, cls_name: str) -> float:
        i = self.classes.index(cls_name)
        col = int(self.counts[:, i].sum())
        return float(self.counts[i, i]) / col if col else 0.0

    def to_csv(self) -> str:
        lines = ["actual\\predicted," + ",".join(self.classes)]
        for i, name in enumerate(self.classes):
            lines.append(name + "," + ",".join(str(int(c)) for c in self.counts[i]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MatchReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "MatchReport":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1)


def step_error(predicted: int, truth: int) -> tuple[int, float]:
    """(absolute error, relative error in percent of ground truth)."""
    if truth <= 0:
        raise ValueError("truth count must be positive")
    absolute = abs(predicted - truth)
    return absolute, 100.0 * absolute / truth


def confusion(pred: LabelTimeline, truth: LabelTimeline,
              classes: Sequence[str]) -> ConfusionMatrix:
    """Counts per (actual, predicted) pair over aligned timeline entries."""
    classes = tuple(classes)
    if len(pred) != len(truth):
        raise ValueError("timelines have different entry counts")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=int)
    for p, t in zip(pred.entries, truth.entries):
        if abs(p.t_start - t.t_start) > 1e-6 or abs(p.t_end - t.t_end) > 1e-6:
            raise ValueError("timelines are not on a common window grid")
        if t.label not in index:
            raise ValueError(f"label outside class set: {t.label}")
        if p.label not in index:
            raise ValueError(f"label outside class set: {p.label}")
        counts[index[t.label], index[p.label]] += 1
    return ConfusionMatrix(classes, counts)


def match_visits(pred: Sequence[Visit], truth: Sequence[Visit],
                 threshold_m: float = DEFAULT_VISIT_MATCH_M) -> MatchReport:
    """Greedy nearest-centroid matching of detected vs true visits.

    Candidate pairs within threshold_m are taken closest-first, each visit
    matching at most once; leftovers count as FN (truth) and FP (predicted).
    """
    pairs = []
    for ti, tv in enumerate(truth):
        for pi, pv in enumerate(pred):
            d = float(haversine_m(tv.lat, tv.lon, pv.lat, pv.lon))
            if d <= threshold_m:
                pairs.append((d, ti, pi))
    pairs.sort()
    matched_truth: set[int] = set()
    matched_pred: set[int] = set()
    for _, ti, pi in pairs:
        if ti in matched_truth or pi in matched_pred:
            continue
        matched_truth.add(ti)
        matched_pred.add(pi)
    tp = len(matched_truth)
    return MatchReport.from_counts(tp, len(pred) - tp, len(truth) - tp)


@dataclass(frozen=True)
class VehicleRollup:
    """MatchReport fields for the vehicle class plus tn and accuracy."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float


def vehicle_rollup(matrix: ConfusionMatrix,
                   vehicle_classes: Sequence[str] = DEFAULT_VEHICLE_CLASSES) -> VehicleRollup:
    """Collapse a transport confusion matrix to vehicle vs non-vehicle.

    Matrix classes absent from vehicle_classes count as non-vehicle; vehicle
    classes absent from the matrix simply contribute nothing.
    """
    vehicle = set(vehicle_classes)
    is_vehicle = np.array([c in vehicle for c in matrix.classes])
    counts = matrix.counts
    tp = int(counts[np.ix_(is_vehicle, is_vehicle)].sum())
    fn = int(counts[np.ix_(is_vehicle, ~is_vehicle)].sum())
    fp = int(counts[np.ix_(~is_vehicle, is_vehicle)].sum())
    tn = int(counts[np.ix_(~is_vehicle, ~is_vehicle)].sum())
    base = MatchReport.from_counts(tp, fp, fn)
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    return VehicleRollup(tp, fp, fn, tn, base.precision, base.recall, base.f1, accuracy)


def per_class_report(matrix: ConfusionMatrix) -> dict[str, dict[str, float]]:
    return {c: {"precision": matrix.precision(c), "recall": matrix.recall(c)}
            for c in matrix.classes}
