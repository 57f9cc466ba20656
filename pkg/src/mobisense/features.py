"""Window features (time-domain statistics and Welch-PSD summaries) and
train-set standardization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sp_signal

from .signal_core import Window

EPSILON_STD = 1e-8

# Band edges in Hz; the first set brackets gait, the second vehicle vibration.
ACTIVITY_BANDS = ((0.0, 1.0), (1.0, 3.0), (3.0, 5.0), (5.0, 10.0))
TRANSPORT_BANDS = ((0.0, 0.5), (0.5, 1.0), (1.0, 3.0), (3.0, 10.0))

TIME_FEATURE_NAMES = ("mean", "std", "peak_to_peak", "sma")

WELCH_SEGMENT_SAMPLES = 256
WELCH_OVERLAP_FRACTION = 0.5


def psd_feature_names(bands: Sequence[tuple[float, float]]) -> tuple[str, ...]:
    names = [f"band_power_{lo:g}_{hi:g}" for lo, hi in bands]
    return tuple(names) + ("total_power", "dominant_hz", "spectral_entropy")


@dataclass(frozen=True)
class FeatureSchema:
    """Binds feature-vector positions to names for a given band layout."""

    schema_id: str
    bands: tuple[tuple[float, float], ...]
    feature_names: tuple[str, ...]

    @classmethod
    def build(cls, bands: Sequence[tuple[float, float]]) -> "FeatureSchema":
        bands = tuple((float(lo), float(hi)) for lo, hi in bands)
        schema_id = "time+psd:" + ",".join(f"{lo:g}-{hi:g}" for lo, hi in bands)
        return cls(schema_id, bands, TIME_FEATURE_NAMES + psd_feature_names(bands))

    def __len__(self) -> int:
        return len(self.feature_names)


ACTIVITY_SCHEMA = FeatureSchema.build(ACTIVITY_BANDS)
TRANSPORT_SCHEMA = FeatureSchema.build(TRANSPORT_BANDS)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_id: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")

    def __len__(self) -> int:
        return len(self.values)


def time_features(window: Window) -> np.ndarray:
    """[mean, population std, peak-to-peak, mean |m - mean|] of the window."""
    m = window.m
    if len(m) == 0:
        raise ValueError("empty window")
    mean = float(np.mean(m))
    std = float(np.std(m))
    p2p = float(np.max(m) - np.min(m))
    sma = float(np.mean(np.abs(m - mean)))
    return np.array([mean, std, p2p, sma])


def welch_psd(window: Window) -> tuple[np.ndarray, np.ndarray]:
    """Welch periodogram (Hann, 50% overlap, per-segment mean removal)."""
    nper = min(WELCH_SEGMENT_SAMPLES, len(window))
    freqs, psd = sp_signal.welch(
        window.m,
        fs=window.rate_hz,
        window="hann",
        nperseg=nper,
        noverlap=int(nper * WELCH_OVERLAP_FRACTION),
        detrend="constant",
    )
    return freqs, psd


def psd_features(window: Window, bands: Sequence[tuple[float, float]]) -> np.ndarray:
    """Per-band power, total power, dominant frequency, spectral entropy."""
    nyquist = window.rate_hz / 2
    for lo, hi in bands:
        if hi > nyquist + 1e-9:
            raise ValueError(f"band edge {hi} Hz above Nyquist {nyquist} Hz")
        if not hi > lo >= 0:
            raise ValueError(f"invalid band ({lo}, {hi})")
    freqs, psd = welch_psd(window)
    df = float(freqs[1] - freqs[0]) if len(freqs) > 1 else 1.0
    band_powers = [float(np.sum(psd[(freqs >= lo) & (freqs < hi)]) * df)
                   for lo, hi in bands]
    total = float(np.sum(psd) * df)
    dominant = float(freqs[int(np.argmax(psd))])
    entropy = _spectral_entropy(psd)
    return np.array(band_powers + [total, dominant, entropy])


def _spectral_entropy(psd: np.ndarray) -> float:
    # All-zero spectrum (constant window) is defined as entropy 0.
    total = float(np.sum(psd))
    if total <= 0 or len(psd) < 2:
        return 0.0
    p = psd / total
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)) / np.log(len(psd)))


def extract_features(window: Window, schema: FeatureSchema) -> FeatureVector:
    values = np.concatenate([time_features(window), psd_features(window, schema.bands)])
    return FeatureVector(values, schema.schema_id)


@dataclass(frozen=True)
class StandardizationParams:
    """Per-dimension mean/std fitted on a training set."""

    mean: np.ndarray
    std: np.ndarray
    schema_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=float))
        if self.mean.shape != self.std.shape:
            raise ValueError("mean/std shape mismatch")
        if np.any(self.std < EPSILON_STD):
            raise ValueError("std must be clamped to >= epsilon")


def standardize_fit(rows: Sequence[FeatureVector]) -> StandardizationParams:
    """Fit per-dimension mean/std; degenerate dimensions get std clamped to 1."""
    if len(rows) < 2:
        raise ValueError("standardization needs at least 2 rows")
    schema_id = rows[0].schema_id
    if any(r.schema_id != schema_id for r in rows):
        raise ValueError("schema mismatch across rows")
    X = np.stack([r.values for r in rows])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < EPSILON_STD, 1.0, std)
    return StandardizationParams(mean, std, schema_id)


def standardize_apply(params: StandardizationParams, v: FeatureVector) -> FeatureVector:
    if v.schema_id != params.schema_id:
        raise ValueError(f"schema mismatch: {v.schema_id} vs {params.schema_id}")
    return FeatureVector((v.values - params.mean) / params.std, v.schema_id)


def standardize_matrix(params: StandardizationParams, X: np.ndarray) -> np.ndarray:
    """Vectorized standardize_apply for stacked rows."""
    return (np.asarray(X, dtype=float) - params.mean) / params.std


def feature_matrix(rows: Sequence[FeatureVector]) -> np.ndarray:
    return np.stack([r.values for r in rows])


def save_feature_csv(path, schema: FeatureSchema, rows: Sequence[FeatureVector],
                     labels: Sequence[str] | None = None) -> None:
    """Export a feature matrix as CSV with the schema as header."""
    header = ",".join(schema.feature_names)
    if labels is not None:
        header += ",label"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(rows):
            if row.schema_id != schema.schema_id:
                raise ValueError("schema mismatch in export")
            line = ",".join(format(v, ".9g") for v in row.values)
            if labels is not None:
                line += f",{labels[i]}"
            fh.write(line + "\n")
