"""Visited-place detection from GPS tracks and trip segmentation.

Stays are found with a DBSCAN variant whose density weights the neighbor
count by (1 - move-ability), so dwelling scores high and transit scores
near zero. Trips are the segments between consecutive visits, valid when
the average speed reaches 0.5 km/h and the accelerometer has no gaps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .signal_core import (
    DEFAULT_GAP_THRESHOLD_S,
    AccelStream,
    LocationFix,
    LocationStream,
    haversine_m,
    path_length_m,
)

DEFAULT_EPS_M = 30.0
DEFAULT_MIN_DENSITY = 5.0
DEFAULT_MIN_STAY_S = 300.0
DEFAULT_SPLIT_GAP_S = 600.0
DEFAULT_MOVEABILITY_WINDOW_S = 600.0

# Fixes implying a jump faster than this from the previous kept fix are
# treated as teleport spikes and dropped before clustering.
MAX_FIX_SPEED_MPS = 70.0

MIN_TRIP_SPEED_KMH = 0.5


@dataclass(frozen=True)
class Visit:
    """A detected stay: centroid, arrival/departure, member fix indices."""

    lat: float
    lon: float
    arrival_t: float
    departure_t: float
    member_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.departure_t > self.arrival_t:
            raise ValueError("departure must be after arrival")

    @property
    def duration_s(self) -> float:
        return self.departure_t - self.arrival_t


@dataclass(frozen=True)
class Trip:
    """Movement segment between two consecutive visits."""

    start_visit: int | None
    end_visit: int | None
    t_start: float
    t_end: float
    avg_speed_kmh: float
    valid: bool

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise ValueError("trip must have positive duration")

    @property
    def duration_s(self) -> float:
        return self.t_end - self.t_start


def _moveability_arrays(lat: np.ndarray, lon: np.ndarray) -> float:
    total = path_length_m(lat, lon)
    if total <= 0.0:
        return 0.0
    direct = float(haversine_m(lat[0], lon[0], lat[-1], lon[-1]))
    return min(1.0, max(0.0, direct / total))


def moveability(track: Sequence[LocationFix]) -> float:
    """Straight-line displacement over cumulative path length, in [0, 1].

    A zero-length path (all fixes coincident) is 0 by convention.
    """
    if len(track) < 2:
        raise ValueError("move-ability needs at least 2 fixes")
    lat = np.array([f.lat for f in track])
    lon = np.array([f.lon for f in track])
    return _moveability_arrays(lat, lon)


def point_density(stream: LocationStream, i: int, eps_m: float,
                  window_s: float = DEFAULT_MOVEABILITY_WINDOW_S) -> float:
    """Neighbor count within eps_m, scaled by (1 - local move-ability).

    Move-ability is computed over the fixes within +/- window_s/2 of fix i;
    fewer than 2 fixes in that window count as move-ability 0.
    """
    if not 0 <= i < len(stream):
        raise IndexError(f"fix index out of range: {i}")
    d = haversine_m(stream.lat[i], stream.lon[i], stream.lat, stream.lon)
    count = int(np.count_nonzero(d <= eps_m))
    lo = np.searchsorted(stream.t, stream.t[i] - window_s / 2, side="left")
    hi = np.searchsorted(stream.t, stream.t[i] + window_s / 2, side="right")
    if hi - lo < 2:
        mv = 0.0
    else:
        mv = _moveability_arrays(stream.lat[lo:hi], stream.lon[lo:hi])
    return count * (1.0 - mv)


def drop_teleport_fixes(stream: LocationStream,
                        max_speed_mps: float = MAX_FIX_SPEED_MPS) -> np.ndarray:
    """Indices of fixes kept after sequential speed-spike removal."""
    n = len(stream)
    if n == 0:
        return np.array([], dtype=int)
    kept = [0]
    for i in range(1, n):
        j = kept[-1]
        dt = stream.t[i] - stream.t[j]
        dist = float(haversine_m(stream.lat[j], stream.lon[j],
                                 stream.lat[i], stream.lon[i]))
        if dt > 0 and dist / dt > max_speed_mps:
            continue
        kept.append(i)
    return np.array(kept, dtype=int)


def dbscan_labels(stream: LocationStream, eps_m: float, min_density: float,
                  window_s: float = DEFAULT_MOVEABILITY_WINDOW_S) -> np.ndarray:
    """Cluster ids per fix (-1 = noise) under the move-ability density.

    Core points reach density >= min_density; clusters are grown from cores
    in index order, border points joining the first cluster that reaches
    them. This deterministic expansion is what the reference oracle mirrors.
    """
    n = len(stream)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    neighbor_rows = [
        np.nonzero(haversine_m(stream.lat[i], stream.lon[i],
                               stream.lat, stream.lon) <= eps_m)[0]
        for i in range(n)
    ]
    density = np.array([point_density(stream, i, eps_m, window_s) for i in range(n)])
    core = density >= min_density
    cluster_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = cluster_id
        queue = [seed]
        while queue:
            p = queue.pop(0)
            for q in neighbor_rows[p]:
                if labels[q] == -1:
                    labels[q] = cluster_id
                    if core[q]:
                        queue.append(int(q))
        cluster_id += 1
    return labels


def detect_visits(stream: LocationStream,
                  eps_m: float = DEFAULT_EPS_M,
                  min_density: float = DEFAULT_MIN_DENSITY,
                  min_stay_s: float = DEFAULT_MIN_STAY_S,
                  split_gap_s: float = DEFAULT_SPLIT_GAP_S,
                  moveability_window_s: float = DEFAULT_MOVEABILITY_WINDOW_S,
                  max_fix_speed_mps: float = MAX_FIX_SPEED_MPS) -> list[Visit]:
    """Stays as temporally contiguous runs of density-based clusters.

    Cluster members are split at time gaps larger than split_gap_s (so a
    place visited twice yields two visits), runs shorter than min_stay_s are
    dropped, and arrival/departure are the first/last member timestamps.
    """
    if len(stream) == 0:
        return []
    kept = drop_teleport_fixes(stream, max_fix_speed_mps)
    work = LocationStream(stream.t[kept], stream.lat[kept], stream.lon[kept],
                          stream.speed_mps[kept])
    labels = dbscan_labels(work, eps_m, min_density, moveability_window_s)
    visits = []
    for cid in range(labels.max() + 1 if len(labels) else 0):
        members = np.nonzero(labels == cid)[0]  # already time-ordered
        run_start = 0
        runs = []
        for k in range(1, len(members)):
            if work.t[members[k]] - work.t[members[k - 1]] > split_gap_s:
                runs.append(members[run_start:k])
                run_start = k
        runs.append(members[run_start:])
        for run in runs:
            if len(run) < 2:
                continue
            duration = float(work.t[run[-1]] - work.t[run[0]])
            if duration < min_stay_s:
                continue
            visits.append(Visit(
                lat=float(np.mean(work.lat[run])),
                lon=float(np.mean(work.lon[run])),
                arrival_t=float(work.t[run[0]]),
                departure_t=float(work.t[run[-1]]),
                member_indices=tuple(int(kept[r]) for r in run),
            ))
    visits.sort(key=lambda v: v.arrival_t)
    return visits


def _has_accel_gap(accel: AccelStream, t_start: float, t_end: float,
                   gap_threshold_s: float) -> bool:
    """True when [t_start, t_end] is not continuously covered by samples."""
    t = accel.t
    if len(t) == 0:
        return True
    if t[0] > t_start + gap_threshold_s or t[-1] < t_end - gap_threshold_s:
        return True
    lo = int(np.searchsorted(t, t_start, side="left"))
    hi = int(np.searchsorted(t, t_end, side="right"))
    lo = max(lo - 1, 0)
    hi = min(hi + 1, len(t))
    seg = t[lo:hi]
    if len(seg) < 2:
        return t_end - t_start > gap_threshold_s
    dt = np.diff(seg)
    overlap = (seg[1:] > t_start) & (seg[:-1] < t_end)
    return bool(np.any(dt[overlap] > gap_threshold_s))


def segment_trips(visits: Sequence[Visit], loc_stream: LocationStream,
                  accel_stream: AccelStream, *,
                  min_speed_kmh: float = MIN_TRIP_SPEED_KMH,
                  gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> list[Trip]:
    """One Trip per consecutive visit pair, departure to next arrival."""
    trips = []
    for k in range(len(visits) - 1):
        t0 = visits[k].departure_t
        t1 = visits[k + 1].arrival_t
        if t1 <= t0:
            continue
        mask = (loc_stream.t >= t0) & (loc_stream.t <= t1)
        path = path_length_m(loc_stream.lat[mask], loc_stream.lon[mask])
        speed_kmh = path / (t1 - t0) * 3.6
        valid = (speed_kmh >= min_speed_kmh
                 and not _has_accel_gap(accel_stream, t0, t1, gap_threshold_s))
        trips.append(Trip(k, k + 1, t0, t1, speed_kmh, valid))
    return trips


def load_visits_csv(path) -> list[Visit]:
    """Read the visits CSV contract back into Visit records (no members)."""
    visits = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["arrival_t", "departure_t", "lat", "lon", "n_points"]
        if header is None or [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            if not row:
                continue
            arrival, departure, lat, lon = (float(v) for v in row[:4])
            visits.append(Visit(lat, lon, arrival, departure, ()))
    return visits


def visits_to_csv(visits: Sequence[Visit]) -> str:
    lines = ["arrival_t,departure_t,lat,lon,n_points"]
    for v in visits:
        lines.append(f"{v.arrival_t:.3f},{v.departure_t:.3f},"
                     f"{v.lat:.7f},{v.lon:.7f},{len(v.member_indices)}")
    return "\n".join(lines) + "\n"


def trips_to_csv(trips: Sequence[Trip]) -> str:
    lines = ["t_start,t_end,avg_speed_kmh,valid"]
    for tr in trips:
        lines.append(f"{tr.t_start:.3f},{tr.t_end:.3f},"
                     f"{tr.avg_speed_kmh:.4f},{str(tr.valid).lower()}")
    return "\n".join(lines) + "\n"
