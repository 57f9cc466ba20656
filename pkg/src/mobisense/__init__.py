"""Behavioral indicators from phone sensors: step counts, activity type,
visited places, trips and transportation mode, with the evaluation metrics
used to validate them."""

__version__ = "0.1.0"

from .signal_core import (  # noqa: F401
    AccelSample,
    AccelStream,
    DataError,
    LabelSpan,
    LabelTimeline,
    LocationFix,
    LocationStream,
    MagnitudeSeries,
    Window,
    haversine,
    magnitude,
    majority_vote,
    resample,
    sliding_windows,
)
