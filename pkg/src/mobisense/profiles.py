"""Per-user behavioral profiles: daily steps, actigraphy-style activity
counts, weekly visit rates by place category, monitored hours, and the
after-school destination grouping.

The activity-counts pipeline is a standard actigraphy reconstruction:
band-pass 0.25-2.5 Hz, rectify, integrate per epoch, scaled so a 1 Hz
1 m/s² sinusoid yields 1000 counts per minute.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sp_signal

from .ingest import PoiEntry, nearest_poi
from .mobility import Visit
from .signal_core import (
    CANONICAL_RATE_HZ,
    DEFAULT_GAP_THRESHOLD_S,
    AccelStream,
    LocationFix,
    resample,
)
from .steps import StepResult

COUNT_BAND_HZ = (0.25, 2.5)
COUNTS_PER_MIN_REFERENCE = 1000.0
DEFAULT_POI_RADIUS_M = 50.0

_SECONDS_PER_DAY = 86400.0

_scale_cache: dict[tuple, float] = {}


def _bandpass_sos(rate_hz: float, band_hz: tuple[float, float]) -> np.ndarray:
    return sp_signal.butter(2, band_hz, btype="bandpass", fs=rate_hz, output="sos")


def _raw_epoch_integrals(m: np.ndarray, rate_hz: float, epoch_s: float,
                         band_hz: tuple[float, float]) -> np.ndarray:
    """Band-pass, rectify, integrate per full epoch (trailing partial dropped)."""
    sos = _bandpass_sos(rate_hz, band_hz)
    filtered = sp_signal.sosfilt(sos, m - float(np.mean(m)))
    rectified = np.abs(filtered)
    per_epoch = int(round(epoch_s * rate_hz))
    n_epochs = len(rectified) // per_epoch
    if n_epochs == 0:
        return np.array([])
    trimmed = rectified[:n_epochs * per_epoch].reshape(n_epochs, per_epoch)
    return trimmed.sum(axis=1) / rate_hz


def _count_scale(rate_hz: float, band_hz: tuple[float, float]) -> float:
    """Counts per integral-unit so the 1 Hz unit sinusoid hits the reference."""
    key = (rate_hz, band_hz)
    if key not in _scale_cache:
        t = np.arange(int(rate_hz * 180)) / rate_hz
        m = 9.81 + np.sin(2 * np.pi * 1.0 * t)
        integrals = _raw_epoch_integrals(m, rate_hz, 60.0, band_hz)
        steady = float(integrals[-1])  # last epoch is past the filter transient
        _scale_cache[key] = COUNTS_PER_MIN_REFERENCE / steady
    return _scale_cache[key]


def activity_counts(stream: AccelStream, epoch_s: float = 60.0, *,
                    rate_hz: float = CANONICAL_RATE_HZ,
                    band_hz: tuple[float, float] = COUNT_BAND_HZ,
                    gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> np.ndarray:
    """Integer activity counts per epoch."""
    if len(stream) == 0:
        raise ValueError("empty stream")
    series = resample(stream, rate_hz, gap_threshold_s)
    integrals = _raw_epoch_integrals(series.m, rate_hz, epoch_s, band_hz)
    scale = _count_scale(rate_hz, band_hz)
    return np.rint(integrals * scale).astype(int)


def daily_steps(sessions: Sequence[tuple[dt.date, StepResult]]) -> float:
    """Mean steps per distinct day."""
    if not sessions:
        raise ValueError("no sessions")
    per_day: dict[dt.date, int] = {}
    for day, result in sessions:
        per_day[day] = per_day.get(day, 0) + result.count
    return float(np.mean(list(per_day.values())))


def categorize_visit(visit: Visit, poi_table: Sequence[PoiEntry],
                     radius_m: float = DEFAULT_POI_RADIUS_M) -> str:
    entry = nearest_poi(poi_table, LocationFix(0.0, visit.lat, visit.lon), radius_m)
    return entry.category if entry is not None else "unknown"


def weekly_place_visits(visits: Sequence[Visit], poi_table: Sequence[PoiEntry],
                        radius_m: float = DEFAULT_POI_RADIUS_M,
                        span_days: float | None = None) -> dict[str, float]:
    """Visits per week by category; spans shorter than a day are an error."""
    if not visits:
        return {}
    if span_days is None:
        span_days = (max(v.departure_t for v in visits)
                     - min(v.arrival_t for v in visits)) / _SECONDS_PER_DAY
    if span_days < 1.0:
        raise ValueError("observation span must be at least 1 day")
    rates: dict[str, float] = {}
    for visit in visits:
        category = categorize_visit(visit, poi_table, radius_m)
        rates[category] = rates.get(category, 0.0) + 1.0
    return {cat: count * 7.0 / span_days for cat, count in sorted(rates.items())}


def after_school_tallies(visits: Sequence[Visit], poi_table: Sequence[PoiEntry],
                         radius_m: float = DEFAULT_POI_RADIUS_M) -> dict[str, int]:
    """Category of the next same-day visit after each school departure."""
    ordered = sorted(visits, key=lambda v: v.arrival_t)
    categories = [categorize_visit(v, poi_table, radius_m) for v in ordered]
    tallies: dict[str, int] = {}
    for i, category in enumerate(categories):
        if category != "school" or i + 1 >= len(ordered):
            continue
        depart_day = int(ordered[i].departure_t // _SECONDS_PER_DAY)
        arrive_day = int(ordered[i + 1].arrival_t // _SECONDS_PER_DAY)
        if arrive_day != depart_day:
            continue
        nxt = categories[i + 1]
        tallies[nxt] = tallies.get(nxt, 0) + 1
    return dict(sorted(tallies.items()))


def after_school_destination(visits: Sequence[Visit], poi_table: Sequence[PoiEntry],
                             radius_m: float = DEFAULT_POI_RADIUS_M) -> str:
    """Modal after-school destination; ties go to the smallest category name."""
    tallies = after_school_tallies(visits, poi_table, radius_m)
    if not tallies:
        return "unknown"
    best = max(tallies.values())
    return min(cat for cat, n in tallies.items() if n == best)


def group_users_by_destination(destinations: Sequence[str]) -> dict[str, int]:
    """User counts per modal destination (the multi-user table shape)."""
    groups: dict[str, int] = {}
    for dest in destinations:
        groups[dest] = groups.get(dest, 0) + 1
    return dict(sorted(groups.items()))


@dataclass(frozen=True)
class Profile:
    daily_steps: float
    avg_activity_counts_per_min: float
    weekly_visits: dict[str, float]
    monitored_hours_per_day: float

    def __post_init__(self) -> None:
        if (self.daily_steps < 0 or self.avg_activity_counts_per_min < 0
                or self.monitored_hours_per_day < 0):
            raise ValueError("profile values must be non-negative")
        if any(rate < 0 for rate in self.weekly_visits.values()):
            raise ValueError("weekly visit rates must be non-negative")

    def to_dict(self) -> dict:
        return {
            "daily_steps": self.daily_steps,
            "daily_avg_activity_counts_per_min": self.avg_activity_counts_per_min,
            "weekly_visits": dict(self.weekly_visits),
            "monitored_hours_per_day": self.monitored_hours_per_day,
        }


def build_profile(step_sessions: Sequence[tuple[dt.date, StepResult]],
                  count_arrays: Sequence[np.ndarray],
                  visits: Sequence[Visit],
                  poi_table: Sequence[PoiEntry],
                  streams: Sequence[tuple[dt.date, AccelStream]], *,
                  radius_m: float = DEFAULT_POI_RADIUS_M,
                  span_days: float | None = None,
                  gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> Profile:
    """Assemble the per-user profile from per-session extractor outputs."""
    all_counts = np.concatenate([np.asarray(c) for c in count_arrays]) \
        if count_arrays else np.array([])
    avg_counts = float(all_counts.mean()) if len(all_counts) else 0.0
    weekly = weekly_place_visits(visits, poi_table, radius_m, span_days) \
        if visits else {}
    days = {day for day, _ in streams}
    covered = sum(s.coverage_s(gap_threshold_s) for _, s in streams)
    hours_per_day = covered / 3600.0 / len(days) if days else 0.0
    return Profile(daily_steps(step_sessions), avg_counts, weekly, hours_per_day)
