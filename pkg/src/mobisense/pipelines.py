"""End-to-end classifiers: per-window activity recognition with majority
smoothing, per-trip transport-mode labeling, the LOSO training harness
for both, and the vehicle/non-vehicle grouping."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import svm as svm_mod
from .evaluation import ConfusionMatrix, confusion
from .features import (
    ACTIVITY_SCHEMA,
    TRANSPORT_SCHEMA,
    FeatureSchema,
    extract_features,
    feature_matrix,
    standardize_fit,
    standardize_matrix,
)
from .ingest import LabeledAccelStream
from .mobility import Trip
from .signal_core import (
    CANONICAL_RATE_HZ,
    DEFAULT_GAP_THRESHOLD_S,
    AccelStream,
    LabelSpan,
    LabelTimeline,
    Window,
    majority_vote,
    resample,
    sliding_windows,
)
from .svm import Kernel, OvoSvmModel, predict_ovo_batch, train_ovo

log = logging.getLogger(__name__)

ACTIVITY_CLASSES = (
    "lying", "sitting", "standing", "walking", "running", "cycling",
    "nordic_walking", "ascending_stairs", "descending_stairs",
    "vacuum_cleaning", "ironing", "rope_jumping",
)
TRANSPORT_CLASSES = ("walk_run", "bike", "car", "bus", "train_subway")
VEHICLE_CLASSES = ("car", "bus", "train_subway")

ACTIVITY_WINDOW_S = 5.0
ACTIVITY_STEP_S = 1.0
ACTIVITY_VOTE_S = 60.0
TRANSPORT_WINDOW_S = 60.0
TRANSPORT_STEP_S = 10.0

# Windows whose dominant ground-truth label covers less than this fraction
# are ambiguous (label boundaries) and excluded from training/evaluation.
LABEL_AGREEMENT_MIN = 0.8

DEFAULT_C = 10.0
DEFAULT_KERNEL = Kernel("rbf")


@dataclass(frozen=True)
class LabeledWindow:
    window: Window
    label: str
    subject: int


def to_vehicle_class(label: str, vehicle_classes: Sequence[str] = VEHICLE_CLASSES) -> str:
    if label not in TRANSPORT_CLASSES:
        raise ValueError(f"unknown transport label: {label}")
    return "vehicle" if label in vehicle_classes else "non_vehicle"


def window_truth_labels(labels: LabelTimeline, windows: Sequence[Window],
                        min_agreement: float = LABEL_AGREEMENT_MIN) -> list[str | None]:
    """Dominant ground-truth label per window, or None when below agreement."""
    out: list[str | None] = []
    for w in windows:
        span = w.duration_s
        overlap: dict[str, float] = {}
        for entry in labels:
            lo = max(entry.t_start, w.t_start)
            hi = min(entry.t_end, w.t_end)
            if hi > lo:
                overlap[entry.label] = overlap.get(entry.label, 0.0) + (hi - lo)
        if not overlap:
            out.append(None)
            continue
        label, covered = max(overlap.items(), key=lambda kv: (kv[1], kv[0]))
        out.append(label if covered / span >= min_agreement else None)
    return out


def _windows_for_stream(stream: AccelStream, window_s: float, step_s: float,
                        rate_hz: float, gap_threshold_s: float) -> list[Window]:
    series = resample(stream, rate_hz, gap_threshold_s)
    return sliding_windows(series, window_s, step_s)


def _predict_windows(windows: Sequence[Window], model: OvoSvmModel,
                     schema: FeatureSchema) -> tuple[list[str], np.ndarray]:
    if model.standardization.schema_id != schema.schema_id:
        raise ValueError("model was trained on a different feature schema")
    if not windows:
        return [], np.array([])
    rows = [extract_features(w, schema) for w in windows]
    X = standardize_matrix(model.standardization, feature_matrix(rows))
    return predict_ovo_batch(model, X)


def _slots_timeline(windows: Sequence[Window], labels: Sequence[str],
                    step_s: float) -> LabelTimeline:
    spans = tuple(LabelSpan(w.t_start, w.t_start + step_s, lab)
                  for w, lab in zip(windows, labels))
    return LabelTimeline(spans)


def classify_activity(stream: AccelStream, model: OvoSvmModel, *,
                      schema: FeatureSchema = ACTIVITY_SCHEMA,
                      window_s: float = ACTIVITY_WINDOW_S,
                      step_s: float = ACTIVITY_STEP_S,
                      vote_s: float = ACTIVITY_VOTE_S,
                      rate_hz: float = CANONICAL_RATE_HZ,
                      gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> LabelTimeline:
    """Windows -> features -> standardize -> OvO vote -> majority smoothing.

    Each prediction occupies the step-long slot starting at its window's
    start; a stream shorter than one window yields an empty timeline.
    """
    windows = _windows_for_stream(stream, window_s, step_s, rate_hz, gap_threshold_s)
    if not windows:
        return LabelTimeline(())
    labels, _ = _predict_windows(windows, model, schema)
    return majority_vote(_slots_timeline(windows, labels, step_s), vote_s)


@dataclass(frozen=True)
class LosoFold:
    subject: int
    model: OvoSvmModel
    matrix: ConfusionMatrix
    training_accuracy: float


@dataclass(frozen=True)
class LosoResult:
    folds: tuple[LosoFold, ...]
    pooled: ConfusionMatrix


def _subject_rows(item: LabeledAccelStream, subject: int, classes: Sequence[str],
                  schema: FeatureSchema, window_s: float, step_s: float,
                  rate_hz: float, gap_threshold_s: float,
                  min_agreement: float) -> list[LabeledWindow]:
    windows = _windows_for_stream(item.stream, window_s, step_s, rate_hz,
                                  gap_threshold_s)
    truths = window_truth_labels(item.labels, windows, min_agreement)
    return [LabeledWindow(w, lab, subject)
            for w, lab in zip(windows, truths) if lab in classes]


def _fit_fold_model(rows: list[LabeledWindow], schema: FeatureSchema,
                    classes: tuple[str, ...], C: float, kernel: Kernel,
                    seed: int) -> tuple[OvoSvmModel, float]:
    feats = [extract_features(r.window, schema) for r in rows]
    params = standardize_fit(feats)
    X = standardize_matrix(params, feature_matrix(feats))
    y = [r.label for r in rows]
    present = tuple(c for c in classes if c in set(y))
    model = train_ovo(X, y, C, kernel, params, classes=present, seed=seed)
    predicted, _ = predict_ovo_batch(model, X)
    accuracy = float(np.mean([p == t for p, t in zip(predicted, y)]))
    return model, accuracy


def train_activity_loso(dataset: Sequence[LabeledAccelStream], *,
                        classes: Sequence[str] = ACTIVITY_CLASSES,
                        schema: FeatureSchema = ACTIVITY_SCHEMA,
                        window_s: float = ACTIVITY_WINDOW_S,
                        step_s: float = ACTIVITY_STEP_S,
                        vote_s: float = ACTIVITY_VOTE_S,
                        rate_hz: float = CANONICAL_RATE_HZ,
                        gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S,
                        min_agreement: float = LABEL_AGREEMENT_MIN,
                        C: float = DEFAULT_C,
                        kernel: Kernel = DEFAULT_KERNEL,
                        seed: int = 0) -> LosoResult:
    """Leave-one-subject-out: fit on all others, test on the held-out one.

    The held-out stream is classified end to end (smoothing included) and
    scored on window slots that carry an unambiguous ground-truth label.
    """
    if len(dataset) < 2:
        raise ValueError("LOSO needs at least 2 subjects")
    classes = tuple(classes)
    per_subject = [
        _subject_rows(item, s, classes, schema, window_s, step_s,
                      rate_hz, gap_threshold_s, min_agreement)
        for s, item in enumerate(dataset)
    ]
    eval_classes = tuple(c for c in classes
                         if any(r.label == c for rows in per_subject for r in rows))
    folds = []
    pooled = ConfusionMatrix.zeros(eval_classes)
    for held in range(len(dataset)):
        if not per_subject[held]:
            log.warning("subject %d has no labeled windows; fold skipped", held)
            continue
        train_rows = [r for s, rows in enumerate(per_subject) if s != held
                      for r in rows]
        if any(r.subject == held for r in train_rows):
            raise AssertionError("LOSO leak: held-out subject present in training rows")
        model, train_acc = _fit_fold_model(train_rows, schema, classes, C,
                                           kernel, seed)

        item = dataset[held]
        windows = _windows_for_stream(item.stream, window_s, step_s, rate_hz,
                                      gap_threshold_s)
        truths = window_truth_labels(item.labels, windows, min_agreement)
        labels, _ = _predict_windows(windows, model, schema)
        smoothed = majority_vote(_slots_timeline(windows, labels, step_s), vote_s)
        pred_spans = []
        truth_spans = []
        for entry, truth in zip(smoothed.entries, truths):
            if truth is None:
                continue
            pred_spans.append(entry)
            truth_spans.append(LabelSpan(entry.t_start, entry.t_end, truth))
        matrix = _spans_confusion(pred_spans, truth_spans, eval_classes)
        pooled = pooled.add(matrix)
        folds.append(LosoFold(held, model, matrix, train_acc))
    return LosoResult(tuple(folds), pooled)


def _spans_confusion(pred_spans, truth_spans, classes) -> ConfusionMatrix:
    return confusion(LabelTimeline(tuple(pred_spans)),
                     LabelTimeline(tuple(truth_spans)), classes)


def train_activity_model(dataset: Sequence[LabeledAccelStream], *,
                         classes: Sequence[str] = ACTIVITY_CLASSES,
                         schema: FeatureSchema = ACTIVITY_SCHEMA,
                         window_s: float = ACTIVITY_WINDOW_S,
                         step_s: float = ACTIVITY_STEP_S,
                         rate_hz: float = CANONICAL_RATE_HZ,
                         gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S,
                         min_agreement: float = LABEL_AGREEMENT_MIN,
                         C: float = DEFAULT_C,
                         kernel: Kernel = DEFAULT_KERNEL,
                         seed: int = 0) -> OvoSvmModel:
    """Single model over every subject (no held-out fold)."""
    classes = tuple(classes)
    rows = [r for s, item in enumerate(dataset)
            for r in _subject_rows(item, s, classes, schema, window_s, step_s,
                                   rate_hz, gap_threshold_s, min_agreement)]
    if not rows:
        raise ValueError("no labeled windows in dataset")
    model, _ = _fit_fold_model(rows, schema, classes, C, kernel, seed)
    return model


def classify_transport(trip: Trip, accel: AccelStream, model: OvoSvmModel, *,
                       schema: FeatureSchema = TRANSPORT_SCHEMA,
                       window_s: float = TRANSPORT_WINDOW_S,
                       step_s: float = TRANSPORT_STEP_S,
                       rate_hz: float = CANONICAL_RATE_HZ,
                       gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> str:
    """Single label per trip: plurality over per-window predictions.

    A vote tie goes to the label of the window with the largest decision
    margin among the tied labels.
    """
    mask = (accel.t >= trip.t_start) & (accel.t <= trip.t_end)
    if int(mask.sum()) < 2:
        raise ValueError("trip too short")
    sub = AccelStream(accel.t[mask], accel.ax[mask], accel.ay[mask],
                      accel.az[mask], accel.nominal_rate_hz)
    series = resample(sub, rate_hz, gap_threshold_s)
    windows = sliding_windows(series, window_s, step_s)
    if not windows:
        raise ValueError("trip too short")
    labels, margins = _predict_windows(windows, model, schema)
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = max(counts.values())
    tied = {lab for lab, c in counts.items() if c == best}
    if len(tied) == 1:
        return tied.pop()
    candidates = [(margins[i], -i, labels[i]) for i in range(len(labels))
                  if labels[i] in tied]
    return max(candidates)[2]


def transport_training_rows(sessions: Sequence[tuple[AccelStream, LabelTimeline]], *,
                            classes: Sequence[str] = TRANSPORT_CLASSES,
                            schema: FeatureSchema = TRANSPORT_SCHEMA,
                            window_s: float = TRANSPORT_WINDOW_S,
                            step_s: float = TRANSPORT_STEP_S,
                            rate_hz: float = CANONICAL_RATE_HZ,
                            gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S,
                            min_agreement: float = LABEL_AGREEMENT_MIN) -> list[LabeledWindow]:
    """Labeled transport windows per session; non-transport spans (e.g.
    "still") never reach the returned rows."""
    rows = []
    for subject, (stream, labels) in enumerate(sessions):
        item = LabeledAccelStream(stream, labels)
        rows.extend(_subject_rows(item, subject, tuple(classes), schema,
                                  window_s, step_s, rate_hz, gap_threshold_s,
                                  min_agreement))
    return rows


def train_transport_model(rows: Sequence[LabeledWindow], *,
                          schema: FeatureSchema = TRANSPORT_SCHEMA,
                          classes: Sequence[str] = TRANSPORT_CLASSES,
                          C: float = DEFAULT_C,
                          kernel: Kernel = DEFAULT_KERNEL,
                          seed: int = 0) -> OvoSvmModel:
    model, _ = _fit_fold_model(list(rows), schema, tuple(classes), C, kernel, seed)
    return model


def train_transport_loso(sessions: Sequence[tuple[AccelStream, LabelTimeline]], *,
                         classes: Sequence[str] = TRANSPORT_CLASSES,
                         schema: FeatureSchema = TRANSPORT_SCHEMA,
                         window_s: float = TRANSPORT_WINDOW_S,
                         step_s: float = TRANSPORT_STEP_S,
                         rate_hz: float = CANONICAL_RATE_HZ,
                         gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S,
                         min_agreement: float = LABEL_AGREEMENT_MIN,
                         C: float = DEFAULT_C,
                         kernel: Kernel = DEFAULT_KERNEL,
                         seed: int = 0) -> LosoResult:
    """Per-window LOSO over participants, matching the activity harness."""
    if len(sessions) < 2:
        raise ValueError("LOSO needs at least 2 subjects")
    classes = tuple(classes)
    per_subject = []
    for subject, (stream, labels) in enumerate(sessions):
        item = LabeledAccelStream(stream, labels)
        per_subject.append(_subject_rows(item, subject, classes, schema,
                                         window_s, step_s, rate_hz,
                                         gap_threshold_s, min_agreement))
    eval_classes = tuple(c for c in classes
                         if any(r.label == c for rows in per_subject for r in rows))
    folds = []
    pooled = ConfusionMatrix.zeros(eval_classes)
    for held in range(len(sessions)):
        if not per_subject[held]:
            log.warning("subject %d has no labeled windows; fold skipped", held)
            continue
        train_rows = [r for s, rows in enumerate(per_subject) if s != held
                      for r in rows]
        if any(r.subject == held for r in train_rows):
            raise AssertionError("LOSO leak: held-out subject present in training rows")
        model, train_acc = _fit_fold_model(train_rows, schema, classes, C,
                                           kernel, seed)
        test = per_subject[held]
        labels, _ = _predict_windows([r.window for r in test], model, schema)
        index = {c: i for i, c in enumerate(eval_classes)}
        counts = np.zeros((len(eval_classes), len(eval_classes)), dtype=int)
        for row, pred in zip(test, labels):
            counts[index[row.label], index[pred]] += 1
        matrix = ConfusionMatrix(eval_classes, counts)
        pooled = pooled.add(matrix)
        folds.append(LosoFold(held, model, matrix, train_acc))
    return LosoResult(tuple(folds), pooled)


PIPELINE_MODEL_FORMAT = "mobisense-pipeline-model"
PIPELINE_MODEL_VERSION = 1


def pipeline_model_doc(kind: str, model: OvoSvmModel, schema: FeatureSchema,
                       window_s: float, step_s: float, vote_s: float | None) -> dict:
    return {
        "format": PIPELINE_MODEL_FORMAT,
        "version": PIPELINE_MODEL_VERSION,
        "kind": kind,
        "window_s": window_s,
        "step_s": step_s,
        "vote_s": vote_s,
        "bands": [list(b) for b in schema.bands],
        "svm": svm_mod.model_to_doc(model),
    }


def pipeline_model_from_doc(doc: dict) -> tuple[str, OvoSvmModel, FeatureSchema, dict]:
    if doc.get("format") != PIPELINE_MODEL_FORMAT:
        raise ValueError(f"not a {PIPELINE_MODEL_FORMAT} document")
    if doc.get("version") != PIPELINE_MODEL_VERSION:
        raise ValueError(f"unsupported pipeline model version: {doc.get('version')}")
    schema = FeatureSchema.build([tuple(b) for b in doc["bands"]])
    model = svm_mod.model_from_doc(doc["svm"])
    meta = {"window_s": doc["window_s"], "step_s": doc["step_s"],
            "vote_s": doc["vote_s"]}
    return doc["kind"], model, schema, meta
