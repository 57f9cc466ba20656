"""Canonical time-series types and operations shared by every extractor.

Triaxial accelerometer streams are reduced to a uniformly resampled
magnitude series (recording gaps flagged, never interpolated away), which
feeds windowing, step detection and feature extraction. GPS fixes get a
haversine distance. Label timelines carry per-window predictions and
ground truth, with a majority-vote smoother.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

# Any inter-sample interval longer than this is a recording gap.
DEFAULT_GAP_THRESHOLD_S = 1.0

# All extractors run on series resampled to this rate.
CANONICAL_RATE_HZ = 100.0


class DataError(Exception):
    """Input data violates its documented contract (corrupt or malformed)."""


@dataclass(frozen=True)
class AccelSample:
    """One triaxial accelerometer sample, axes in m/s², t in session seconds."""

    t: float
    ax: float
    ay: float
    az: float


@dataclass(frozen=True)
class LocationFix:
    """One GPS fix (WGS84 degrees); speed is optional."""

    t: float
    lat: float
    lon: float
    speed_mps: float | None = None

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True)
class AccelStream:
    """Accelerometer session stored as parallel arrays (time-sorted)."""

    t: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray
    nominal_rate_hz: float

    def __post_init__(self) -> None:
        for name in ("t", "ax", "ay", "az"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), name))
        n = len(self.t)
        if any(len(getattr(self, k)) != n for k in ("ax", "ay", "az")):
            raise ValueError("t/ax/ay/az must have equal lengths")
        if not self.nominal_rate_hz > 0:
            raise ValueError("nominal_rate_hz must be positive")
        if n:
            if not np.all(np.isfinite(self.t)) or self.t[0] < 0:
                raise ValueError("timestamps must be finite and non-negative")
            if n > 1 and not np.all(np.diff(self.t) > 0):
                raise ValueError("timestamps must be strictly increasing")

    @classmethod
    def from_samples(cls, samples: Iterable[AccelSample],
                     nominal_rate_hz: float | None = None) -> "AccelStream":
        rows = list(samples)
        t = np.array([s.t for s in rows], dtype=float)
        if nominal_rate_hz is None:
            if len(t) < 2:
                raise ValueError("cannot infer rate from fewer than 2 samples")
            nominal_rate_hz = 1.0 / float(np.median(np.diff(t)))
        return cls(t,
                   np.array([s.ax for s in rows]),
                   np.array([s.ay for s in rows]),
                   np.array([s.az for s in rows]),
                   nominal_rate_hz)

    @property
    def samples(self) -> tuple[AccelSample, ...]:
        return tuple(AccelSample(float(t), float(x), float(y), float(z))
                     for t, x, y, z in zip(self.t, self.ax, self.ay, self.az))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def gaps(self, gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> tuple[tuple[float, float], ...]:
        """Intervals between consecutive samples longer than the threshold."""
        if len(self.t) < 2:
            return ()
        dt = np.diff(self.t)
        idx = np.nonzero(dt > gap_threshold_s)[0]
        return tuple((float(self.t[i]), float(self.t[i + 1])) for i in idx)

    def coverage_s(self, gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> float:
        """Total recorded time, excluding gap intervals."""
        if len(self.t) < 2:
            return 0.0
        dt = np.diff(self.t)
        return float(dt[dt <= gap_threshold_s].sum())


@dataclass(frozen=True)
class LocationStream:
    """GPS session stored as parallel arrays; speed is NaN where absent."""

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    speed_mps: np.ndarray

    def __post_init__(self) -> None:
        for name in ("t", "lat", "lon", "speed_mps"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), name))
        n = len(self.t)
        if any(len(getattr(self, k)) != n for k in ("lat", "lon", "speed_mps")):
            raise ValueError("t/lat/lon/speed arrays must have equal lengths")
        if n:
            if not np.all(np.isfinite(self.t)):
                raise ValueError("timestamps must be finite")
            if n > 1 and not np.all(np.diff(self.t) > 0):
                raise ValueError("timestamps must be strictly increasing")
            if np.any(np.abs(self.lat) > 90.0):
                raise ValueError("latitude out of range")
            if np.any(np.abs(self.lon) > 180.0):
                raise ValueError("longitude out of range")

    @classmethod
    def from_fixes(cls, fixes: Iterable[LocationFix]) -> "LocationStream":
        rows = list(fixes)
        return cls(np.array([f.t for f in rows], dtype=float),
                   np.array([f.lat for f in rows], dtype=float),
                   np.array([f.lon for f in rows], dtype=float),
                   np.array([math.nan if f.speed_mps is None else f.speed_mps
                             for f in rows], dtype=float))

    @property
    def fixes(self) -> tuple[LocationFix, ...]:
        return tuple(LocationFix(float(t), float(la), float(lo),
                                 None if math.isnan(sp) else float(sp))
                     for t, la, lo, sp in zip(self.t, self.lat, self.lon, self.speed_mps))

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class MagnitudeSeries:
    """Uniformly sampled acceleration magnitude with flagged recording gaps.

    Gap intervals mark spans of the original stream where no data existed;
    interpolated values inside them are placeholders and windows overlapping
    them are excluded downstream.
    """

    t0: float
    rate_hz: float
    m: np.ndarray
    gaps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", _as_float_array(self.m, "m"))
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        if not np.all(np.isfinite(self.m)):
            raise ValueError("magnitudes must be finite")
        if np.any(self.m < 0):
            raise ValueError("magnitudes must be non-negative")
        for lo, hi in self.gaps:
            if hi <= lo:
                raise ValueError("gap interval must have positive length")

    def __len__(self) -> int:
        return len(self.m)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.m)) / self.rate_hz

    @property
    def duration_s(self) -> float:
        return (len(self.m) - 1) / self.rate_hz if len(self.m) else 0.0


@dataclass(frozen=True)
class Window:
    """A fixed-length slice of a magnitude series starting at t_start."""

    t_start: float
    rate_hz: float
    m: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", _as_float_array(self.m, "m"))

    def __len__(self) -> int:
        return len(self.m)

    @property
    def duration_s(self) -> float:
        return len(self.m) / self.rate_hz

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration_s


class LabelSpan(NamedTuple):
    t_start: float
    t_end: float
    label: str


@dataclass(frozen=True)
class LabelTimeline:
    """Ordered, non-overlapping labeled intervals."""

    entries: tuple[LabelSpan, ...]

    def __post_init__(self) -> None:
        entries = tuple(LabelSpan(float(a), float(b), str(lab))
                        for a, b, lab in self.entries)
        object.__setattr__(self, "entries", entries)
        prev_end = -math.inf
        for span in entries:
            if span.t_end <= span.t_start:
                raise ValueError(f"empty or inverted span: {span}")
            if span.t_start < prev_end - 1e-9:
                raise ValueError(f"overlapping span: {span}")
            prev_end = span.t_end

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def labels(self) -> set[str]:
        return {span.label for span in self.entries}

    @property
    def t_start(self) -> float:
        return self.entries[0].t_start

    @property
    def t_end(self) -> float:
        return self.entries[-1].t_end


def magnitude(ax: float, ay: float, az: float) -> float:
    """Euclidean norm of one triaxial sample; rejects corrupt values."""
    if not (math.isfinite(ax) and math.isfinite(ay) and math.isfinite(az)):
        raise DataError("non-finite acceleration sample")
    return math.sqrt(ax * ax + ay * ay + az * az)


def resample(stream: AccelStream, target_hz: float,
             gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> MagnitudeSeries:
    """Magnitude per sample, linearly interpolated onto a uniform grid.

    The grid spans [t_first, t_last]. Inter-sample intervals longer than
    gap_threshold_s are flagged as gaps rather than trusted as data.
    """
    if len(stream) == 0:
        raise ValueError("cannot resample an empty stream")
    if not target_hz > 0:
        raise ValueError("target_hz must be positive")
    if not (np.all(np.isfinite(stream.ax)) and np.all(np.isfinite(stream.ay))
            and np.all(np.isfinite(stream.az))):
        raise DataError("non-finite acceleration sample")
    m = np.sqrt(stream.ax ** 2 + stream.ay ** 2 + stream.az ** 2)
    t = stream.t
    n_out = int(math.floor((t[-1] - t[0]) * target_hz + 1e-9)) + 1
    grid = t[0] + np.arange(n_out) / target_hz
    mg = np.interp(grid, t, m)
    dt = np.diff(t)
    gap_idx = np.nonzero(dt > gap_threshold_s)[0]
    gaps = tuple((float(t[i]), float(t[i + 1])) for i in gap_idx)
    return MagnitudeSeries(t0=float(t[0]), rate_hz=float(target_hz), m=mg, gaps=gaps)


def sliding_windows(series: MagnitudeSeries, length_s: float, step_s: float) -> list[Window]:
    """Fixed-length windows starting at t0, t0+step, ...

    The trailing partial window is discarded and windows overlapping a
    flagged gap are excluded. A series shorter than length_s yields [].
    """
    if not (length_s >= step_s > 0):
        raise ValueError("need length_s >= step_s > 0")
    n = len(series)
    if n == 0:
        return []
    duration = series.duration_s
    if duration + 1e-9 < length_s:
        return []
    n_per = int(round(length_s * series.rate_hz))
    if n_per < 1:
        raise ValueError("window too short for the series rate")
    out: list[Window] = []
    i = 0
    while True:
        start = i * step_s
        if start + length_s > duration + 1e-9:
            break
        idx = int(round(start * series.rate_hz))
        w_start = series.t0 + start
        w_end = w_start + length_s
        if not any(w_start < g_hi and w_end > g_lo for g_lo, g_hi in series.gaps):
            out.append(Window(w_start, series.rate_hz, series.m[idx:idx + n_per].copy()))
        i += 1
    return out


def majority_vote(timeline: LabelTimeline, window_s: float) -> LabelTimeline:
    """Smooth a uniform-duration timeline by neighborhood majority.

    Each entry takes the most frequent label among entries whose centers lie
    within ±window_s/2 of its own center; ties keep the entry's own label.
    """
    if not window_s > 0:
        raise ValueError("window_s must be positive")
    entries = timeline.entries
    if not entries:
        return timeline
    durations = np.array([e.t_end - e.t_start for e in entries])
    if durations.max() - durations.min() > 1e-6 * durations.max():
        raise ValueError("majority_vote requires uniform-duration entries")
    centers = np.array([(e.t_start + e.t_end) / 2 for e in entries])
    labels = [e.label for e in entries]
    half = window_s / 2 + 1e-9
    smoothed = []
    for i, entry in enumerate(entries):
        lo = np.searchsorted(centers, centers[i] - half, side="left")
        hi = np.searchsorted(centers, centers[i] + half, side="right")
        counts: dict[str, int] = {}
        for lab in labels[lo:hi]:
            counts[lab] = counts.get(lab, 0) + 1
        best = max(counts.values())
        tied = sorted(lab for lab, c in counts.items() if c == best)
        winner = entry.label if entry.label in tied else tied[0]
        smoothed.append(LabelSpan(entry.t_start, entry.t_end, winner))
    return LabelTimeline(tuple(smoothed))


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters; accepts scalars or numpy arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = np.radians(np.subtract(lat2, lat1))
    dlam = np.radians(np.subtract(lon2, lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine(p1: LocationFix, p2: LocationFix) -> float:
    """Great-circle distance between two fixes, meters."""
    return float(haversine_m(p1.lat, p1.lon, p2.lat, p2.lon))


def path_length_m(lat: Sequence[float], lon: Sequence[float]) -> float:
    """Cumulative haversine length of an ordered track."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if len(lat) < 2:
        return 0.0
    return float(np.sum(haversine_m(lat[:-1], lon[:-1], lat[1:], lon[1:])))
