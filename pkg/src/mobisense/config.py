"""Runtime configuration: every tunable threshold, loadable from a flat
TOML file. Unknown keys and out-of-range values are rejected."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


class ConfigError(Exception):
    """Bad configuration file or value."""


@dataclass
class Config:
    # signal core
    canonical_rate_hz: float = 100.0
    gap_threshold_s: float = 1.0
    # phone steps
    step_smooth_cutoff_hz: float = 5.0
    step_prominence_ms2: float = 0.8
    step_prominence_window_s: float = 1.0
    step_period_min_s: float = 1.0 / 3.0
    step_period_max_s: float = 1.0
    step_similarity_tol: float = 0.5
    step_continuity_min: int = 8
    step_run_gap_s: float = 1.0
    # watch steps
    watch_lowpass_hz: float = 3.0
    watch_delay_s: float = 0.1
    watch_hysteresis_up_ms2: float = 0.5
    watch_hysteresis_down_ms2: float = 0.5
    watch_min_armed_s: float = 0.15
    # features
    activity_bands: tuple = ((0.0, 1.0), (1.0, 3.0), (3.0, 5.0), (5.0, 10.0))
    transport_bands: tuple = ((0.0, 0.5), (0.5, 1.0), (1.0, 3.0), (3.0, 10.0))
    # svm
    svm_c: float = 10.0
    svm_kernel: str = "rbf"
    svm_gamma: float | None = None
    # windows / smoothing
    activity_window_s: float = 5.0
    activity_step_s: float = 1.0
    activity_vote_s: float = 60.0
    transport_window_s: float = 60.0
    transport_step_s: float = 10.0
    label_agreement_min: float = 0.8
    # mobility
    visit_eps_m: float = 30.0
    visit_min_density: float = 5.0
    visit_min_stay_s: float = 300.0
    visit_split_gap_s: float = 600.0
    moveability_window_s: float = 600.0
    max_fix_speed_mps: float = 70.0
    trip_min_speed_kmh: float = 0.5
    # evaluation / profiles
    visit_match_threshold_m: float = 10.0
    poi_radius_m: float = 50.0
    count_epoch_s: float = 60.0
    count_band_low_hz: float = 0.25
    count_band_high_hz: float = 2.5
    pamap2_imu_position: str = "chest"
    vehicle_classes: tuple = ("car", "bus", "train_subway")
    seed: int = 0

    def validate(self) -> None:
        positive = (
            "canonical_rate_hz", "gap_threshold_s", "step_smooth_cutoff_hz",
            "step_prominence_window_s", "step_period_min_s", "step_period_max_s",
            "step_run_gap_s", "watch_lowpass_hz", "watch_min_armed_s",
            "svm_c", "activity_window_s", "activity_step_s", "activity_vote_s",
            "transport_window_s", "transport_step_s", "visit_eps_m",
            "visit_min_density", "visit_min_stay_s", "visit_split_gap_s",
            "moveability_window_s", "max_fix_speed_mps",
            "visit_match_threshold_m", "poi_radius_m", "count_epoch_s",
            "count_band_low_hz", "count_band_high_hz",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        non_negative = ("step_prominence_ms2", "watch_delay_s",
                        "watch_hysteresis_up_ms2", "watch_hysteresis_down_ms2",
                        "trip_min_speed_kmh")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.step_period_min_s >= self.step_period_max_s:
            raise ConfigError("step_period_min_s must be below step_period_max_s")
        if not 0 < self.step_similarity_tol <= 1:
            raise ConfigError("step_similarity_tol must be in (0, 1]")
        if self.step_continuity_min < 1:
            raise ConfigError("step_continuity_min must be >= 1")
        if self.svm_kernel not in ("linear", "rbf"):
            raise ConfigError(f"unknown svm_kernel: {self.svm_kernel}")
        if self.svm_gamma is not None and not self.svm_gamma > 0:
            raise ConfigError("svm_gamma must be positive when set")
        if not 0 < self.label_agreement_min <= 1:
            raise ConfigError("label_agreement_min must be in (0, 1]")
        if self.activity_window_s < self.activity_step_s:
            raise ConfigError("activity window must be at least one step long")
        if self.transport_window_s < self.transport_step_s:
            raise ConfigError("transport window must be at least one step long")
        if self.count_band_low_hz >= self.count_band_high_hz:
            raise ConfigError("count band must have low < high")
        if self.pamap2_imu_position not in ("hand", "chest", "ankle"):
            raise ConfigError(f"unknown pamap2_imu_position: {self.pamap2_imu_position}")
        for name in ("activity_bands", "transport_bands"):
            bands = getattr(self, name)
            for band in bands:
                if len(band) != 2 or not band[1] > band[0] >= 0:
                    raise ConfigError(f"invalid band in {name}: {band}")
        if int(self.seed) != self.seed:
            raise ConfigError("seed must be an integer")

    @property
    def count_band_hz(self) -> tuple[float, float]:
        return (self.count_band_low_hz, self.count_band_high_hz)


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}
_TUPLE_OF_PAIRS = ("activity_bands", "transport_bands")


def _coerce(name: str, value):
    if name in _TUPLE_OF_PAIRS:
        try:
            return tuple((float(lo), float(hi)) for lo, hi in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} must be a list of [low, high] pairs") from None
    if name == "vehicle_classes":
        if not isinstance(value, (list, tuple)):
            raise ConfigError("vehicle_classes must be a list of labels")
        return tuple(str(v) for v in value)
    default = _FIELDS[name].default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or int(value) != value:
            raise ConfigError(f"{name} must be an integer")
        return int(value)
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    return value


def load_config(path) -> Config:
    """Parse a flat TOML file into a validated Config."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = Config(**{k: _coerce(k, v) for k, v in raw.items()})
    cfg.validate()
    return cfg
