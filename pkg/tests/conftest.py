"""Shared synthetic-data generators.

Each generator knows its own ground truth (bump counts, planted stay
centers, per-mode vibration profiles), which the tests use as oracles.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from mobisense.signal_core import LocationStream, MagnitudeSeries

METERS_PER_DEG_LAT = math.pi * 6_371_000.0 / 180.0


def snap(value: float, rate_hz: float) -> float:
    return round(value * rate_hz) / rate_hz


def make_gait_series(n_bumps: int, cadence_hz: float, amplitude: float,
                     rate_hz: float = 100.0, baseline: float = 9.81,
                     width_frac: float = 0.6, pad_s: float = 1.5,
                     cadence_jitter: float = 0.0,
                     rng: np.random.Generator | None = None,
                     t0: float = 0.0) -> tuple[MagnitudeSeries, list[float]]:
    """Raised-cosine bump train on a flat baseline.

    Bump centers are snapped to the sample grid so each bump has a strict
    local maximum exactly at its center. Returns the series and the center
    times (the step-count ground truth).
    """
    period = 1.0 / cadence_hz
    width = width_frac * period
    centers = []
    t_next = pad_s
    for _ in range(n_bumps):
        centers.append(snap(t_next, rate_hz))
        step = period
        if cadence_jitter and rng is not None:
            step *= 1.0 + cadence_jitter * float(rng.uniform(-1.0, 1.0))
        t_next += step
    duration = centers[-1] + pad_s
    n = int(round(duration * rate_hz)) + 1
    t = np.arange(n) / rate_hz
    m = np.full(n, baseline)
    for c in centers:
        mask = np.abs(t - c) <= width / 2
        m[mask] += amplitude * 0.5 * (1.0 + np.cos(2.0 * np.pi * (t[mask] - c) / width))
    return MagnitudeSeries(t0=t0, rate_hz=rate_hz, m=m), [t0 + c for c in centers]


def local_track(lat0: float, lon0: float, xy_m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert local east/north offsets in meters to lat/lon degrees."""
    lat = lat0 + xy_m[:, 1] / METERS_PER_DEG_LAT
    lon = lon0 + xy_m[:, 0] / (METERS_PER_DEG_LAT * math.cos(math.radians(lat0)))
    return lat, lon


def make_stay_track(rng: np.random.Generator, n_stays: int = 3, *,
                    lat0: float = 45.0, lon0: float = 7.0,
                    stay_minutes: tuple[float, float] = (6.0, 12.0),
                    jitter_m: float = 8.0,
                    transit_m: tuple[float, float] = (220.0, 600.0),
                    transit_speed_mps: tuple[float, float] = (3.0, 8.0),
                    fix_interval_s: float = 5.0,
                    gps_noise_m: float = 3.0,
                    approach_blackout_m: float = 40.0):
    """GPS track alternating planted stays with straight transits.

    Transit fixes are suppressed inside approach_blackout_m of the next stay
    center: at typical fix spacing a fix that close is an arrival-in-progress
    and would make the planted arrival timestamp ambiguous.

    Returns (LocationStream, truth) where truth is a list of dicts with the
    stay center (lat/lon) and arrival/departure times of its dwell.
    """
    points = []   # (t, x, y)
    truth = []
    t = 0.0
    pos = np.array([0.0, 0.0])
    for k in range(n_stays):
        dwell = float(rng.uniform(*stay_minutes)) * 60.0
        t_arrive = t
        while t <= t_arrive + dwell:
            offset = rng.uniform(-jitter_m, jitter_m, size=2)
            points.append((t, pos[0] + offset[0], pos[1] + offset[1]))
            t += fix_interval_s
        truth.append({"x": pos[0], "y": pos[1], "arrival": t_arrive,
                      "departure": points[-1][0]})
        if k == n_stays - 1:
            break
        heading = rng.uniform(0.0, 2.0 * np.pi)
        dist = float(rng.uniform(*transit_m))
        speed = float(rng.uniform(*transit_speed_mps))
        target = pos + dist * np.array([np.cos(heading), np.sin(heading)])
        while True:
            delta = target - pos
            remaining = float(np.hypot(*delta))
            if remaining <= speed * fix_interval_s:
                pos = target
                t += remaining / speed + fix_interval_s
                break
            pos = pos + delta / remaining * speed * fix_interval_s
            t += fix_interval_s
            if float(np.hypot(*(target - pos))) > approach_blackout_m:
                noise = rng.normal(0.0, gps_noise_m, size=2)
                points.append((t, pos[0] + noise[0], pos[1] + noise[1]))
    xy = np.array([(x, y) for _, x, y in points])
    lat, lon = local_track(lat0, lon0, xy)
    ts = np.array([p[0] for p in points])
    stream = LocationStream(ts, lat, lon, np.full(len(ts), np.nan))
    for entry in truth:
        offset = np.array([[entry.pop("x"), entry.pop("y")]])
        entry["lat"], entry["lon"] = (float(v[0]) for v in local_track(lat0, lon0, offset))
    return stream, truth


# ---------------------------------------------------------------------------
# PAMAP2-format slice generation. Per-class magnitude profiles are chosen so
# that most classes separate cleanly while sitting/standing noise levels
# overlap across subjects (within-subject separable, cross-subject confusable).

PAMAP2_IDS = {
    "lying": 1, "sitting": 2, "standing": 3, "walking": 4, "running": 5,
    "cycling": 6, "nordic_walking": 7, "ascending_stairs": 12,
    "descending_stairs": 13, "vacuum_cleaning": 16, "ironing": 17,
    "rope_jumping": 24,
}

SLICE_CLASSES = ("lying", "sitting", "standing", "walking", "running",
                 "cycling", "vacuum_cleaning", "rope_jumping")


def bump_train(t: np.ndarray, cadence_hz: float, amplitude: float,
               width_frac: float = 0.6) -> np.ndarray:
    period = 1.0 / cadence_hz
    phase = t % period
    width = width_frac * period
    m = np.zeros_like(t)
    mask = phase <= width
    m[mask] = amplitude * 0.5 * (1.0 + np.cos(2.0 * np.pi * (phase[mask] - width / 2) / width))
    return m


def class_magnitude(cls: str, subject: int, n: int, rng: np.random.Generator,
                    rate_hz: float = 100.0) -> np.ndarray:
    t = np.arange(n) / rate_hz
    base = np.full(n, 9.81)
    s = subject
    if cls == "lying":
        return base + rng.normal(0, 0.05, n)
    if cls == "sitting":
        return base + rng.normal(0, 0.28 + 0.025 * s, n) + 0.15 * np.sin(2 * np.pi * 0.35 * t)
    if cls == "standing":
        return base + rng.normal(0, 0.32 + 0.025 * s, n) + 0.15 * np.sin(2 * np.pi * 0.35 * t + 1.0)
    if cls == "walking":
        return base + bump_train(t, 1.9 + 0.1 * s, 2.6 + 0.2 * s) + rng.normal(0, 0.2, n)
    if cls == "running":
        return base + bump_train(t, 2.7 + 0.1 * s, 5.0 + 0.3 * s) + rng.normal(0, 0.3, n)
    if cls == "cycling":
        return base + (1.3 + 0.1 * s) * np.sin(2 * np.pi * (1.45 + 0.05 * s) * t) + rng.normal(0, 0.15, n)
    if cls == "vacuum_cleaning":
        return base + (0.85 + 0.05 * s) * np.sin(2 * np.pi * 3.5 * t) + rng.normal(0, 0.8, n)
    if cls == "rope_jumping":
        return base + bump_train(t, 3.3 + 0.1 * s, 7.0 + 0.4 * s) + rng.normal(0, 0.4, n)
    raise ValueError(cls)


def subject_activity_arrays(subject: int, seconds_per_class: float = 60.0,
                            classes=SLICE_CLASSES, seed_base: int = 77,
                            rate_hz: float = 100.0):
    """(t, activity_id, magnitude) arrays with 5 s transient gaps between blocks."""
    rng = np.random.default_rng([seed_base, subject])
    chunks = []
    t0 = 0.0
    for cls in classes:
        n_tr = int(5 * rate_hz)
        chunks.append((t0 + np.arange(n_tr) / rate_hz, np.zeros(n_tr),
                       9.81 + rng.normal(0, 0.05, n_tr)))
        t0 = chunks[-1][0][-1] + 1 / rate_hz
        n = int(seconds_per_class * rate_hz)
        chunks.append((t0 + np.arange(n) / rate_hz,
                       np.full(n, PAMAP2_IDS[cls]),
                       class_magnitude(cls, subject, n, rng, rate_hz)))
        t0 = chunks[-1][0][-1] + 1 / rate_hz
    t = np.concatenate([c[0] for c in chunks])
    act = np.concatenate([c[1] for c in chunks])
    m = np.concatenate([c[2] for c in chunks])
    return t, act, m


def write_pamap2_dat(path, t: np.ndarray, activity: np.ndarray, m: np.ndarray) -> None:
    """Write rows in the official column layout, truncated after the chest
    accelerometer columns (21-23); the magnitude rides on the z axis."""
    n = len(t)
    data = np.full((n, 24), np.nan)
    data[:, 0] = t
    data[:, 1] = activity
    data[:, 21] = 0.0
    data[:, 22] = 0.0
    data[:, 23] = m
    np.savetxt(path, data, fmt="%.4f")


def write_pamap2_slice(dir_path, n_subjects: int = 3,
                       seconds_per_class: float = 60.0,
                       classes=SLICE_CLASSES, seed_base: int = 77) -> list:
    files = []
    for s in range(n_subjects):
        t, act, m = subject_activity_arrays(s, seconds_per_class, classes, seed_base)
        out = dir_path / f"subject10{s + 1}.dat"
        write_pamap2_dat(out, t, act, m)
        files.append(out)
    return files


TRANSPORT_PROFILES = {
    # mode: (tone_hz, tone_amp, noise_sigma)
    "walk_run": (2.1, 3.2, 0.30),
    "bike": (1.35, 1.3, 0.20),
    "car": (0.45, 0.55, 0.25),
    "bus": (0.30, 0.85, 0.42),
    "train_subway": (0.15, 0.50, 0.12),
}


def transport_magnitude(mode: str, duration_s: float, rng: np.random.Generator,
                        rate_hz: float = 100.0) -> np.ndarray:
    """Per-mode vibration profile with mild per-trip parameter jitter."""
    freq, amp, sigma = TRANSPORT_PROFILES[mode]
    freq *= 1.0 + 0.1 * float(rng.uniform(-1.0, 1.0))
    amp *= 1.0 + 0.15 * float(rng.uniform(-1.0, 1.0))
    sigma *= 1.0 + 0.2 * float(rng.uniform(-1.0, 1.0))
    n = int(round(duration_s * rate_hz))
    t = np.arange(n) / rate_hz
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    m = 9.81 + amp * np.sin(2.0 * np.pi * freq * t + phase)
    m = m + rng.normal(0.0, sigma, size=n)
    return np.maximum(m, 0.0)


def magnitude_accel_stream(m: np.ndarray, rate_hz: float = 100.0, t0: float = 0.0):
    """AccelStream whose z axis carries the given magnitude."""
    from mobisense.signal_core import AccelStream

    t = t0 + np.arange(len(m)) / rate_hz
    zeros = np.zeros(len(m))
    return AccelStream(t, zeros, zeros, m, rate_hz)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
