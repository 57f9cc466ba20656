"""Move-ability, density-based visit detection, trip segmentation."""

import math

import numpy as np
import pytest

from conftest import local_track, make_stay_track
from mobisense.mobility import (
    Trip,
    Visit,
    dbscan_labels,
    detect_visits,
    drop_teleport_fixes,
    moveability,
    point_density,
    segment_trips,
)
from mobisense.signal_core import (
    AccelStream,
    LocationFix,
    LocationStream,
    haversine_m,
)


def stream_from_xy(t, xy, lat0=45.0, lon0=7.0):
    lat, lon = local_track(lat0, lon0, np.asarray(xy, dtype=float))
    return LocationStream(np.asarray(t, dtype=float), lat, lon,
                          np.full(len(t), np.nan))


def fixes_from_xy(xy, lat0=45.0, lon0=7.0):
    stream = stream_from_xy(np.arange(len(xy), dtype=float), xy, lat0, lon0)
    return list(stream.fixes)


def oracle_moveability(fixes):
    """Independent re-computation via pairwise haversine sums."""
    path = sum(float(haversine_m(a.lat, a.lon, b.lat, b.lon))
               for a, b in zip(fixes[:-1], fixes[1:]))
    if path <= 0:
        return 0.0
    direct = float(haversine_m(fixes[0].lat, fixes[0].lon,
                               fixes[-1].lat, fixes[-1].lon))
    return min(1.0, direct / path)


def oracle_dbscan(stream, eps_m, min_density, window_s):
    """Naive O(n^2) DBSCAN with the same density function and the same
    deterministic index-order expansion policy."""
    n = len(stream)
    densities = []
    for i in range(n):
        count = 0
        for q in range(n):
            d = float(haversine_m(stream.lat[i], stream.lon[i],
                                  stream.lat[q], stream.lon[q]))
            if d <= eps_m:
                count += 1
        members = [q for q in range(n)
                   if abs(stream.t[q] - stream.t[i]) <= window_s / 2]
        if len(members) < 2:
            mv = 0.0
        else:
            path = sum(float(haversine_m(stream.lat[members[k]], stream.lon[members[k]],
                                         stream.lat[members[k + 1]], stream.lon[members[k + 1]]))
                       for k in range(len(members) - 1))
            if path <= 0:
                mv = 0.0
            else:
                direct = float(haversine_m(stream.lat[members[0]], stream.lon[members[0]],
                                           stream.lat[members[-1]], stream.lon[members[-1]]))
                mv = min(1.0, max(0.0, direct / path))
        densities.append(count * (1.0 - mv))
    labels = [-1] * n
    cluster = 0
    for seed in range(n):
        if densities[seed] < min_density or labels[seed] != -1:
            continue
        labels[seed] = cluster
        queue = [seed]
        while queue:
            p = queue.pop(0)
            for q in range(n):
                if labels[q] != -1:
                    continue
                d = float(haversine_m(stream.lat[p], stream.lon[p],
                                      stream.lat[q], stream.lon[q]))
                if d <= eps_m:
                    labels[q] = cluster
                    if densities[q] >= min_density:
                        queue.append(q)
        cluster += 1
    return np.array(labels)


class TestMoveability:
    def test_straight_line_is_one(self):
        xy = np.column_stack([np.arange(10) * 50.0, np.zeros(10)])
        assert moveability(fixes_from_xy(xy)) == pytest.approx(1.0, abs=1e-9)

    def test_closed_loop_is_zero(self):
        angles = np.linspace(0, 2 * math.pi, 13)
        xy = np.column_stack([100 * np.cos(angles), 100 * np.sin(angles)])
        xy[-1] = xy[0]
        assert moveability(fixes_from_xy(xy)) == pytest.approx(0.0, abs=1e-9)

    def test_right_angle_path(self):
        leg = 1000.0
        xy = np.array([[0.0, 0.0], [leg, 0.0], [leg, leg]])
        assert moveability(fixes_from_xy(xy)) == pytest.approx(math.sqrt(2) / 2,
                                                               abs=1e-3)

    def test_requires_two_fixes(self):
        with pytest.raises(ValueError):
            moveability([LocationFix(0.0, 45.0, 7.0)])

    def test_bounded_and_matches_oracle(self, rng):
        for _ in range(10):
            xy = rng.normal(0, 200, size=(12, 2))
            fixes = fixes_from_xy(xy)
            value = moveability(fixes)
            assert 0.0 <= value <= 1.0
            assert value == pytest.approx(oracle_moveability(fixes), abs=1e-9)


class TestPointDensity:
    def test_coincident_cluster(self):
        xy = np.zeros((10, 2))
        stream = stream_from_xy(np.arange(10.0), xy)
        assert point_density(stream, 4, 30.0, 600.0) == pytest.approx(10.0)

    def test_constant_velocity_track_near_zero(self):
        xy = np.column_stack([np.arange(40) * 20.0, np.zeros(40)])
        stream = stream_from_xy(np.arange(40.0), xy)
        assert point_density(stream, 20, 30.0, 600.0) == pytest.approx(0.0, abs=0.05)

    def test_matches_brute_force(self, rng):
        xy = rng.normal(0, 60, size=(60, 2))
        t = np.cumsum(rng.uniform(2, 8, size=60))
        stream = stream_from_xy(t, xy)
        for i in (0, 17, 42, 59):
            count = 0
            for q in range(len(stream)):
                d = float(haversine_m(stream.lat[i], stream.lon[i],
                                      stream.lat[q], stream.lon[q]))
                if d <= 30.0:
                    count += 1
            members = [q for q in range(len(stream))
                       if abs(stream.t[q] - stream.t[i]) <= 300.0]
            fixes = [LocationFix(float(stream.t[q]), float(stream.lat[q]),
                                 float(stream.lon[q])) for q in members]
            mv = oracle_moveability(fixes) if len(fixes) >= 2 else 0.0
            expected = count * (1.0 - mv)
            assert point_density(stream, i, 30.0, 600.0) == pytest.approx(
                expected, abs=1e-9)


class TestDetectVisits:
    def spec_track(self, seed=3):
        """Two 20-min stays (jitter <= 5 m) joined by a 20 km/h transit."""
        r = np.random.default_rng(seed)
        pts, truth = [], []
        t, pos = 0.0, np.array([0.0, 0.0])
        for k in range(2):
            arrive = t
            while t <= arrive + 1200.0:
                off = r.uniform(-5, 5, 2)
                pts.append((t, pos[0] + off[0], pos[1] + off[1]))
                t += 10.0
            truth.append({"arrival": arrive, "departure": pts[-1][0],
                          "x": pos[0], "y": pos[1]})
            if k == 0:
                v = 20.0 / 3.6
                target = pos + np.array([900.0, 0.0])
                while True:
                    delta = target - pos
                    rem = float(np.hypot(*delta))
                    if rem <= v * 10:
                        pos, t = target, t + rem / v + 10
                        break
                    pos = pos + delta / rem * v * 10
                    t += 10
                    if float(np.hypot(*(target - pos))) > 40.0:
                        pts.append((t, pos[0], pos[1]))
        xy = np.array([(x, y) for _, x, y in pts])
        ts = np.array([p[0] for p in pts])
        return stream_from_xy(ts, xy), truth

    def test_two_planted_stays(self):
        stream, truth = self.spec_track()
        visits = detect_visits(stream)
        assert len(visits) == 2
        for visit, expected in zip(visits, truth):
            lat, lon = local_track(45.0, 7.0,
                                   np.array([[expected["x"], expected["y"]]]))
            assert float(haversine_m(visit.lat, visit.lon, lat[0], lon[0])) < 10.0
            assert abs(visit.arrival_t - expected["arrival"]) <= 10.0
            assert abs(visit.departure_t - expected["departure"]) <= 10.0

    def test_straight_track_has_no_visits(self):
        t = np.arange(0.0, 1800.0, 10.0)
        xy = np.column_stack([t * 5.0, np.zeros_like(t)])
        assert detect_visits(stream_from_xy(t, xy)) == []

    def test_revisited_place_splits_into_two_visits(self):
        r = np.random.default_rng(5)
        pts = []
        t = 0.0
        home = np.array([0.0, 0.0])
        for phase in range(3):
            if phase == 1:
                # 2 h continuous loop excursion, never dwelling
                speed, radius = 6.0, 2000.0
                n = int(7200 / 10)
                for k in range(n):
                    ang = speed * 10 * k / radius
                    pts.append((t, radius * math.sin(ang),
                                radius * (1 - math.cos(ang))))
                    t += 10.0
                continue
            arrive = t
            while t <= arrive + 900.0:
                off = r.uniform(-5, 5, 2)
                pts.append((t, home[0] + off[0], home[1] + off[1]))
                t += 10.0
        xy = np.array([(x, y) for _, x, y in pts])
        ts = np.array([p[0] for p in pts])
        visits = detect_visits(stream_from_xy(ts, xy))
        assert len(visits) == 2
        d = float(haversine_m(visits[0].lat, visits[0].lon,
                              visits[1].lat, visits[1].lon))
        assert d < 10.0

    def test_matches_reference_dbscan(self, rng):
        for seed in range(3):
            r = np.random.default_rng(seed)
            stream, _ = make_stay_track(r, int(r.integers(2, 4)))
            assert len(stream) <= 2000
            fast = dbscan_labels(stream, 30.0, 5.0, 600.0)
            slow = oracle_dbscan(stream, 30.0, 5.0, 600.0)
            np.testing.assert_array_equal(fast, slow)

    def test_visit_invariants(self, rng):
        stream, _ = make_stay_track(rng, 4)
        visits = detect_visits(stream, min_stay_s=300.0)
        for v in visits:
            assert v.duration_s >= 300.0
        for a, b in zip(visits[:-1], visits[1:]):
            assert a.departure_t <= b.arrival_t

    def test_teleport_fixes_dropped(self):
        t = np.arange(10.0)
        xy = np.zeros((10, 2))
        xy[5] = [50_000.0, 0.0]  # 50 km jump within 1 s
        stream = stream_from_xy(t, xy)
        kept = drop_teleport_fixes(stream)
        assert 5 not in kept
        assert len(kept) == 9


def accel_covering(t0, t1, rate=100.0, hole=None):
    t = np.arange(t0, t1 + 1.0 / rate, 1.0 / rate)
    if hole is not None:
        keep = (t < hole[0]) | (t > hole[1])
        t = t[keep]
    zeros = np.zeros(len(t))
    return AccelStream(t, zeros, zeros, np.full(len(t), 9.81), rate)


def visit_at(xy, arrival, departure, lat0=45.0, lon0=7.0):
    lat, lon = local_track(lat0, lon0, np.array([xy], dtype=float))
    return Visit(float(lat[0]), float(lon[0]), arrival, departure, (0,))


class TestSegmentTrips:
    def make_track(self, t0, t1, dist_m, n=40):
        t = np.linspace(t0, t1, n)
        xy = np.column_stack([np.linspace(0, dist_m, n), np.zeros(n)])
        return stream_from_xy(t, xy)

    def test_valid_trip_speed(self):
        visits = [visit_at([0.0, 0.0], 0.0, 600.0),
                  visit_at([1000.0, 0.0], 1200.0, 1800.0)]
        loc = self.make_track(600.0, 1200.0, 1000.0)
        accel = accel_covering(0.0, 1800.0)
        trips = segment_trips(visits, loc, accel)
        assert len(trips) == 1
        trip = trips[0]
        assert trip.valid
        assert trip.avg_speed_kmh == pytest.approx(6.0, rel=0.01)

    def test_accel_hole_invalidates(self):
        visits = [visit_at([0.0, 0.0], 0.0, 600.0),
                  visit_at([1000.0, 0.0], 1200.0, 1800.0)]
        loc = self.make_track(600.0, 1200.0, 1000.0)
        accel = accel_covering(0.0, 1800.0, hole=(800.0, 805.0))
        trips = segment_trips(visits, loc, accel)
        assert len(trips) == 1
        assert not trips[0].valid

    def test_slow_trip_invalid(self):
        visits = [visit_at([0.0, 0.0], 0.0, 600.0),
                  visit_at([100.0, 0.0], 2400.0, 3000.0)]
        loc = self.make_track(600.0, 2400.0, 100.0)
        accel = accel_covering(0.0, 3000.0)
        trips = segment_trips(visits, loc, accel)
        assert len(trips) == 1
        assert trips[0].avg_speed_kmh == pytest.approx(0.2, rel=0.01)
        assert not trips[0].valid

    def test_trips_tile_inter_visit_intervals(self):
        visits = [visit_at([0.0, 0.0], 0.0, 100.0),
                  visit_at([500.0, 0.0], 300.0, 400.0),
                  visit_at([1000.0, 0.0], 700.0, 900.0)]
        loc = self.make_track(0.0, 900.0, 1000.0)
        accel = accel_covering(0.0, 900.0)
        trips = segment_trips(visits, loc, accel)
        assert [(tr.start_visit, tr.end_visit) for tr in trips] == [(0, 1), (1, 2)]
        assert trips[0].t_start == visits[0].departure_t
        assert trips[0].t_end == visits[1].arrival_t


def test_visit_requires_positive_duration():
    with pytest.raises(ValueError):
        Visit(45.0, 7.0, 10.0, 10.0, (0,))


def test_trip_requires_positive_duration():
    with pytest.raises(ValueError):
        Trip(0, 1, 5.0, 5.0, 1.0, True)
