"""Step counting on the acceleration magnitude.

Phone path: smooth, pick prominent local maxima, then filter by step-rate
periodicity, alternating-foot amplitude similarity, and run continuity.
Watch path: compare the raw magnitude against a delayed low-pass replica
and count armed segments that clear the duration/peak thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal
from scipy.ndimage import uniform_filter1d

from .signal_core import MagnitudeSeries

# Step rate 1..3 Hz expressed as inter-step intervals.
PERIOD_MIN_S = 1.0 / 3.0
PERIOD_MAX_S = 1.0

SIMILARITY_TOL = 0.5
CONTINUITY_MIN_STEPS = 8
RUN_SPLIT_GAP_S = 1.0

SMOOTH_CUTOFF_HZ = 5.0
PROMINENCE_FLOOR_MS2 = 0.8
PROMINENCE_WINDOW_S = 1.0

WATCH_LOWPASS_HZ = 3.0
WATCH_DELAY_S = 0.1
WATCH_HYSTERESIS_UP_MS2 = 0.5
WATCH_HYSTERESIS_DOWN_MS2 = 0.5
WATCH_MIN_ARMED_S = 0.15

_INTERVAL_EPS = 1e-9


@dataclass(frozen=True)
class PeakCandidate:
    """A strict local maximum of the magnitude series."""

    t: float
    m: float
    index: int


@dataclass(frozen=True)
class StepResult:
    count: int
    step_times: tuple[float, ...]
    groups: tuple[tuple[float, float, int], ...]

    def __post_init__(self) -> None:
        if self.count != len(self.step_times):
            raise ValueError("count must equal len(step_times)")
        if self.count != sum(g[2] for g in self.groups):
            raise ValueError("group step counts must sum to count")
        if any(self.step_times[i] >= self.step_times[i + 1]
               for i in range(len(self.step_times) - 1)):
            raise ValueError("step_times must be strictly increasing")


_EMPTY_RESULT = StepResult(0, (), ())


def lowpass_series(series: MagnitudeSeries, cutoff_hz: float) -> MagnitudeSeries:
    """Zero-phase 2nd-order Butterworth low-pass of the magnitude."""
    if cutoff_hz >= series.rate_hz / 2 or len(series) < 10:
        return series
    sos = sp_signal.butter(2, cutoff_hz, fs=series.rate_hz, output="sos")
    padlen = min(len(series) - 1, 3 * (2 * sos.shape[0] + 1))
    smoothed = sp_signal.sosfiltfilt(sos, series.m, padlen=padlen)
    return MagnitudeSeries(series.t0, series.rate_hz,
                           np.maximum(smoothed, 0.0), series.gaps)


def detect_peaks(series: MagnitudeSeries,
                 prominence_floor: float = PROMINENCE_FLOOR_MS2,
                 prominence_window_s: float = PROMINENCE_WINDOW_S) -> list[PeakCandidate]:
    """Strict local maxima exceeding the local mean by the prominence floor."""
    m = series.m
    if len(m) < 3:
        return []
    k = max(1, int(round(prominence_window_s * series.rate_hz)))
    local_mean = uniform_filter1d(m, size=k, mode="nearest")
    interior = np.arange(1, len(m) - 1)
    is_peak = (m[interior] > m[interior - 1]) & (m[interior] > m[interior + 1])
    idx = interior[is_peak]
    idx = idx[m[idx] >= local_mean[idx] + prominence_floor]
    t0, rate = series.t0, series.rate_hz
    return [PeakCandidate(t0 + int(i) / rate, float(m[i]), int(i)) for i in idx]


def filter_periodicity(peaks: list[PeakCandidate],
                       min_interval_s: float = PERIOD_MIN_S,
                       max_interval_s: float = PERIOD_MAX_S) -> list[PeakCandidate]:
    """Keep peaks whose interval to a kept neighbor is a plausible step period.

    A peak survives when the gap to its predecessor or successor lies in
    [min_interval_s, max_interval_s]; isolated peaks are removed. The rule is
    symmetric, so any surviving peak's certifying neighbor also survives.
    """
    n = len(peaks)
    if n < 2:
        return []
    t = np.array([p.t for p in peaks])
    dt = np.diff(t)
    in_range = (dt >= min_interval_s - _INTERVAL_EPS) & (dt <= max_interval_s + _INTERVAL_EPS)
    keep = []
    for i, peak in enumerate(peaks):
        prev_ok = i > 0 and in_range[i - 1]
        next_ok = i < n - 1 and in_range[i]
        if prev_ok or next_ok:
            keep.append(peak)
    return keep


def _split_runs(peaks: list[PeakCandidate], gap_s: float) -> list[list[PeakCandidate]]:
    runs: list[list[PeakCandidate]] = []
    for peak in peaks:
        if runs and peak.t - runs[-1][-1].t <= gap_s + _INTERVAL_EPS:
            runs[-1].append(peak)
        else:
            runs.append([peak])
    return runs


def filter_similarity(peaks: list[PeakCandidate],
                      tol: float = SIMILARITY_TOL,
                      run_gap_s: float = RUN_SPLIT_GAP_S) -> list[PeakCandidate]:
    """Require alternating steps to have similar magnitude, per foot.

    Within a run, each peak is compared against the last kept peak of the
    same parity (odd vs even position); it survives when the magnitudes
    differ by at most tol relative to the larger one. The first peak of each
    parity has no predecessor and is always kept.
    """
    keep: list[PeakCandidate] = []
    for run in _split_runs(peaks, run_gap_s):
        last_kept: dict[int, float] = {}
        for pos, peak in enumerate(run):
            ref = last_kept.get(pos % 2)
            if ref is None or abs(peak.m - ref) <= tol * max(peak.m, ref):
                keep.append(peak)
                last_kept[pos % 2] = peak.m
    return keep


def filter_continuity(peaks: list[PeakCandidate],
                      min_steps: int = CONTINUITY_MIN_STEPS,
                      run_gap_s: float = RUN_SPLIT_GAP_S) -> StepResult:
    """Steps must come in groups: runs shorter than min_steps are discarded."""
    groups = []
    times: list[float] = []
    for run in _split_runs(peaks, run_gap_s):
        if len(run) < min_steps:
            continue
        groups.append((run[0].t, run[-1].t, len(run)))
        times.extend(p.t for p in run)
    return StepResult(len(times), tuple(times), tuple(groups))


def count_steps_phone(series: MagnitudeSeries, *,
                      smooth_cutoff_hz: float = SMOOTH_CUTOFF_HZ,
                      prominence_floor: float = PROMINENCE_FLOOR_MS2,
                      prominence_window_s: float = PROMINENCE_WINDOW_S,
                      similarity_tol: float = SIMILARITY_TOL,
                      min_steps: int = CONTINUITY_MIN_STEPS,
                      run_gap_s: float = RUN_SPLIT_GAP_S) -> StepResult:
    """Full phone pipeline: peaks -> periodicity -> similarity -> continuity."""
    smoothed = lowpass_series(series, smooth_cutoff_hz)
    peaks = detect_peaks(smoothed, prominence_floor, prominence_window_s)
    peaks = filter_periodicity(peaks)
    peaks = filter_similarity(peaks, similarity_tol, run_gap_s)
    return filter_continuity(peaks, min_steps, run_gap_s)


def count_steps_watch(series: MagnitudeSeries, *,
                      lowpass_hz: float = WATCH_LOWPASS_HZ,
                      delay_s: float = WATCH_DELAY_S,
                      hysteresis_up: float = WATCH_HYSTERESIS_UP_MS2,
                      hysteresis_down: float = WATCH_HYSTERESIS_DOWN_MS2,
                      min_armed_s: float = WATCH_MIN_ARMED_S,
                      min_peak_delta: float = WATCH_HYSTERESIS_UP_MS2,
                      run_gap_s: float = RUN_SPLIT_GAP_S) -> StepResult:
    """One step per armed segment of the raw-vs-replica comparator.

    The replica is a causal 2nd-order low-pass of the magnitude delayed by
    delay_s. A segment arms when raw exceeds replica + hysteresis_up and
    disarms below replica - hysteresis_down; it yields a step when it lasts
    at least min_armed_s and its peak clears replica + min_peak_delta.
    """
    raw = series.m
    n = len(raw)
    if n < 3:
        return _EMPTY_RESULT
    if lowpass_hz >= series.rate_hz / 2:
        raise ValueError("replica cutoff must be below Nyquist")
    sos = sp_signal.butter(2, lowpass_hz, fs=series.rate_hz, output="sos")
    zi = sp_signal.sosfilt_zi(sos) * raw[0]
    replica, _ = sp_signal.sosfilt(sos, raw, zi=zi)
    delay_n = int(round(delay_s * series.rate_hz))
    if delay_n > 0:
        replica = np.concatenate([np.full(delay_n, replica[0]), replica[:-delay_n]])

    segments: list[tuple[int, int]] = []
    start = -1
    for i in range(n):
        if start < 0:
            if raw[i] > replica[i] + hysteresis_up:
                start = i
        elif raw[i] < replica[i] - hysteresis_down:
            segments.append((start, i))
            start = -1
    if start >= 0:
        segments.append((start, n))

    rate = series.rate_hz
    times = []
    for a, b in segments:
        if (b - a) / rate < min_armed_s:
            continue
        rel = raw[a:b] - replica[a:b]
        if float(rel.max()) < min_peak_delta:
            continue
        peak_idx = a + int(np.argmax(raw[a:b]))
        times.append(series.t0 + peak_idx / rate)

    groups = []
    run_start = run_count = 0
    for i, t in enumerate(times):
        if i and t - times[i - 1] > run_gap_s + _INTERVAL_EPS:
            groups.append((times[run_start], times[i - 1], run_count))
            run_start, run_count = i, 0
        run_count += 1
    if times:
        groups.append((times[run_start], times[-1], run_count))
    return StepResult(len(times), tuple(times), tuple(groups))
