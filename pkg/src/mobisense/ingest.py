"""Data loading: the generic CSV contracts, desk-scale adapters for the
PAMAP2 and SHL dataset layouts, and the offline POI table.

Column layouts consumed here are documented in docs/formats.md. All
adapters accept truncated files so that slices of minutes work unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .signal_core import (
    AccelStream,
    DataError,
    LabelSpan,
    LabelTimeline,
    LocationFix,
    LocationStream,
    haversine_m,
)

POI_CATEGORIES = frozenset({
    "cafe", "food_retailer", "fast_food", "restaurant", "park",
    "gym", "school", "home", "sports", "other",
})

# PAMAP2 activity id -> class name (ids 0 = transient, dropped).
PAMAP2_ACTIVITY_IDS = {
    1: "lying", 2: "sitting", 3: "standing", 4: "walking", 5: "running",
    6: "cycling", 7: "nordic_walking", 12: "ascending_stairs",
    13: "descending_stairs", 16: "vacuum_cleaning", 17: "ironing",
    24: "rope_jumping",
}

# Column index of the first +/-16g accelerometer axis per IMU position.
PAMAP2_ACCEL_COLUMNS = {"hand": 4, "chest": 21, "ankle": 38}
PAMAP2_RATE_HZ = 100.0

# SHL coarse label -> evaluation class ("still" is kept for trip filtering).
SHL_COARSE_LABELS = {
    1: "still", 2: "walk_run", 3: "walk_run", 4: "bike",
    5: "car", 6: "bus", 7: "train_subway", 8: "train_subway",
}


@dataclass(frozen=True)
class PoiEntry:
    lat: float
    lon: float
    category: str

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")
        if self.category not in POI_CATEGORIES:
            raise ValueError(f"unknown POI category: {self.category}")


@dataclass(frozen=True)
class LabeledAccelStream:
    """Accelerometer stream plus its ground-truth label timeline."""

    stream: AccelStream
    labels: LabelTimeline

    def __post_init__(self) -> None:
        if len(self.labels) and len(self.stream):
            pad = 1.5 / self.stream.nominal_rate_hz
            if (self.labels.t_start < self.stream.t[0] - pad
                    or self.labels.t_end > self.stream.t[-1] + pad):
                raise ValueError("labels extend beyond the stream's time span")


def _parse_float(text: str, path, line_no: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}:{line_no}: malformed {column} value: {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{line_no}: non-finite {column} value")
    return value


def load_accel_csv(path) -> AccelStream:
    """Load `t,ax,ay,az` CSV; rejects malformed rows and non-monotonic time."""
    path = Path(path)
    t, ax, ay, az = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "ax", "ay", "az"]:
            raise DataError(f"{path}:1: expected header 't,ax,ay,az'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{line_no}: expected 4 columns, got {len(row)}")
            ti = _parse_float(row[0], path, line_no, "t")
            if t and ti <= t[-1]:
                raise DataError(f"{path}:{line_no}: non-monotonic timestamp")
            t.append(ti)
            ax.append(_parse_float(row[1], path, line_no, "ax"))
            ay.append(_parse_float(row[2], path, line_no, "ay"))
            az.append(_parse_float(row[3], path, line_no, "az"))
    if not t:
        raise DataError(f"{path}: empty stream")
    if len(t) > 1:
        rate = 1.0 / float(np.median(np.diff(np.array(t))))
    else:
        rate = 1.0
    return AccelStream(np.array(t), np.array(ax), np.array(ay), np.array(az), rate)


def save_accel_csv(path, stream: AccelStream) -> None:
    """Write the accel CSV contract at 6 fractional digits (round-trip safe)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,ax,ay,az\n")
        for t, x, y, z in zip(stream.t, stream.ax, stream.ay, stream.az):
            fh.write(f"{t:.6f},{x:.6f},{y:.6f},{z:.6f}\n")


def load_location_csv(path) -> LocationStream:
    """Load `t,lat,lon,speed` CSV; the speed column may be empty or missing."""
    path = Path(path)
    fixes = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header][:3] != ["t", "lat", "lon"]:
            raise DataError(f"{path}:1: expected header 't,lat,lon,speed'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) not in (3, 4):
                raise DataError(f"{path}:{line_no}: expected 3 or 4 columns, got {len(row)}")
            ti = _parse_float(row[0], path, line_no, "t")
            lat = _parse_float(row[1], path, line_no, "lat")
            lon = _parse_float(row[2], path, line_no, "lon")
            if not -90.0 <= lat <= 90.0:
                raise DataError(f"{path}:{line_no}: latitude out of range")
            if not -180.0 <= lon <= 180.0:
                raise DataError(f"{path}:{line_no}: longitude out of range")
            speed = None
            if len(row) == 4 and row[3].strip():
                speed = _parse_float(row[3], path, line_no, "speed")
            if fixes and ti <= fixes[-1].t:
                raise DataError(f"{path}:{line_no}: non-monotonic timestamp")
            fixes.append(LocationFix(ti, lat, lon, speed))
    if not fixes:
        raise DataError(f"{path}: empty stream")
    return LocationStream.from_fixes(fixes)


def save_location_csv(path, stream: LocationStream) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,lat,lon,speed\n")
        for t, lat, lon, sp in zip(stream.t, stream.lat, stream.lon, stream.speed_mps):
            sp_text = "" if math.isnan(sp) else f"{sp:.6f}"
            fh.write(f"{t:.6f},{lat:.7f},{lon:.7f},{sp_text}\n")


def _runs_to_timeline(t: np.ndarray, labels: list[str | None], dt: float) -> LabelTimeline:
    """Contiguous same-label runs -> spans; None labels produce no span."""
    spans = []
    start = None
    current: str | None = None
    for i, lab in enumerate(labels):
        if lab != current:
            if current is not None:
                spans.append(LabelSpan(float(start), float(t[i - 1]) + dt, current))
            current = lab
            start = t[i] if lab is not None else None
    if current is not None:
        spans.append(LabelSpan(float(start), float(t[-1]) + dt, current))
    return LabelTimeline(tuple(spans))


def load_pamap2(path, imu_position: str = "chest") -> LabeledAccelStream:
    """Load one subject's PAMAP2 .dat file (space-separated official layout).

    Uses the chosen IMU's +/-16g accelerometer columns; rows whose
    accelerometer values are NaN are dropped, and activity id 0 (transient)
    yields stream samples without labels.
    """
    if imu_position not in PAMAP2_ACCEL_COLUMNS:
        raise ValueError(f"unknown IMU position: {imu_position}")
    path = Path(path)
    col = PAMAP2_ACCEL_COLUMNS[imu_position]
    try:
        data = np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: malformed PAMAP2 file: {exc}") from None
    if data.size == 0:
        raise DataError(f"{path}: empty stream")
    if data.shape[1] < col + 3:
        raise DataError(f"{path}: expected >= {col + 3} columns, got {data.shape[1]}")
    t = data[:, 0]
    activity = data[:, 1]
    acc = data[:, col:col + 3]
    ok = np.all(np.isfinite(acc), axis=1) & np.isfinite(t)
    t, activity, acc = t[ok], activity[ok], acc[ok]
    if len(t) == 0:
        raise DataError(f"{path}: no usable accelerometer rows")
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{path}: non-monotonic timestamps")
    names: list[str | None] = []
    for aid in activity.astype(int):
        if aid == 0:
            names.append(None)
        elif aid in PAMAP2_ACTIVITY_IDS:
            names.append(PAMAP2_ACTIVITY_IDS[aid])
        else:
            raise DataError(f"{path}: unknown activity id {aid}")
    stream = AccelStream(t, acc[:, 0], acc[:, 1], acc[:, 2], PAMAP2_RATE_HZ)
    timeline = _runs_to_timeline(t, names, 1.0 / PAMAP2_RATE_HZ)
    return LabeledAccelStream(stream, timeline)


def _load_columns(path, n_cols: int) -> np.ndarray:
    try:
        data = np.loadtxt(path, dtype=float, ndmin=2)
    except (ValueError, OSError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size == 0:
        raise DataError(f"{path}: empty file")
    if data.shape[1] < n_cols:
        raise DataError(f"{path}: expected >= {n_cols} columns")
    return data


def load_shl_slice(path) -> tuple[AccelStream, LocationStream, LabelTimeline]:
    """Load an SHL-layout session directory onto a common session clock.

    Expects Motion.txt (time ms + triaxial accel in the leading columns),
    Location.txt (time ms, ignored, lat, lon, ...) and Label.txt (time ms,
    coarse label). Durations of motion and labels must agree within 1 s.
    """
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path}: not a directory")
    motion_path = path / "Motion.txt"
    location_path = path / "Location.txt"
    label_path = path / "Label.txt"
    for p in (motion_path, location_path, label_path):
        if not p.exists():
            raise DataError(f"{p}: missing SHL file")

    motion = _load_columns(motion_path, 4)
    location = _load_columns(location_path, 4)
    label = _load_columns(label_path, 2)

    t0_ms = min(motion[0, 0], location[0, 0], label[0, 0])

    acc_t = (motion[:, 0] - t0_ms) / 1000.0
    ok = np.all(np.isfinite(motion[:, 1:4]), axis=1)
    acc_t, acc = acc_t[ok], motion[ok, 1:4]
    if len(acc_t) < 2:
        raise DataError(f"{motion_path}: no usable accelerometer rows")
    rate = 1.0 / float(np.median(np.diff(acc_t)))
    accel = AccelStream(acc_t, acc[:, 0], acc[:, 1], acc[:, 2], rate)

    loc_t = (location[:, 0] - t0_ms) / 1000.0
    loc = LocationStream(loc_t, location[:, 2], location[:, 3],
                         np.full(len(loc_t), math.nan))

    lab_t = (label[:, 0] - t0_ms) / 1000.0
    names: list[str | None] = []
    for raw in label[:, 1].astype(int):
        if raw not in SHL_COARSE_LABELS:
            raise DataError(f"{label_path}: unknown coarse label {raw}")
        names.append(SHL_COARSE_LABELS[raw])
    lab_dt = float(np.median(np.diff(lab_t))) if len(lab_t) > 1 else 1.0
    timeline = _runs_to_timeline(lab_t, names, lab_dt)

    accel_duration = acc_t[-1] - acc_t[0]
    label_duration = lab_t[-1] - lab_t[0]
    if abs(accel_duration - label_duration) > 1.0 + lab_dt:
        raise DataError(f"{path}: accel/label durations differ by more than 1 s")
    return accel, loc, timeline


def load_poi_table(path) -> list[PoiEntry]:
    """Load `lat,lon,category` CSV; unknown categories are rejected by row."""
    path = Path(path)
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["lat", "lon", "category"]:
            raise DataError(f"{path}:1: expected header 'lat,lon,category'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{line_no}: expected 3 columns, got {len(row)}")
            lat = _parse_float(row[0], path, line_no, "lat")
            lon = _parse_float(row[1], path, line_no, "lon")
            category = row[2].strip()
            if category not in POI_CATEGORIES:
                raise DataError(f"{path}:{line_no}: unknown category {category!r}")
            entries.append(PoiEntry(lat, lon, category))
    return entries


def nearest_poi(table: Sequence[PoiEntry], point: LocationFix,
                radius_m: float) -> PoiEntry | None:
    """Closest entry within radius_m by haversine, or None."""
    if not radius_m > 0:
        raise ValueError("radius_m must be positive")
    best = None
    best_d = math.inf
    for entry in table:
        d = float(haversine_m(point.lat, point.lon, entry.lat, entry.lon))
        if d < best_d:
            best, best_d = entry, d
    if best is None or best_d > radius_m:
        return None
    return best
