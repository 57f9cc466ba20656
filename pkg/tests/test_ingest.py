"""CSV contracts, PAMAP2/SHL adapters, POI table."""

import numpy as np
import pytest

from conftest import subject_activity_arrays, write_pamap2_dat
from mobisense.ingest import (
    LabeledAccelStream,
    PoiEntry,
    load_accel_csv,
    load_location_csv,
    load_pamap2,
    load_poi_table,
    load_shl_slice,
    nearest_poi,
    save_accel_csv,
)
from mobisense.signal_core import AccelStream, DataError, LocationFix


class TestAccelCsv:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,ax,ay,az\n0.0,0.1,0.2,9.8\n0.01,0.2,0.1,9.7\n0.02,0.0,0.0,9.9\n")
        stream = load_accel_csv(p)
        assert len(stream) == 3
        assert stream.t[1] == pytest.approx(0.01)

    def test_header_only_is_empty_stream(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,ax,ay,az\n")
        with pytest.raises(DataError, match="empty stream"):
            load_accel_csv(p)

    def test_wrong_column_count_names_line(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,ax,ay,az\n0.0,1,2,3\n0.01,1,2,3,4\n")
        with pytest.raises(DataError, match="a.csv:3"):
            load_accel_csv(p)

    def test_non_monotonic_rejected(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("t,ax,ay,az\n0.0,1,2,3\n0.0,1,2,3\n")
        with pytest.raises(DataError, match="non-monotonic"):
            load_accel_csv(p)

    def test_roundtrip_exact_at_6_digits(self, tmp_path):
        rng = np.random.default_rng(0)
        t = np.round(np.cumsum(rng.uniform(0.009, 0.011, 50)), 6)
        stream = AccelStream(t, rng.normal(0, 1, 50), rng.normal(0, 1, 50),
                             rng.normal(9.8, 1, 50), 100.0)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_accel_csv(p1, stream)
        reloaded = load_accel_csv(p1)
        save_accel_csv(p2, reloaded)
        assert p1.read_bytes() == p2.read_bytes()


class TestLocationCsv:
    def test_two_fixes(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("t,lat,lon,speed\n0.0,45.0,7.0,1.5\n10.0,45.001,7.0,\n")
        stream = load_location_csv(p)
        assert len(stream) == 2
        fixes = stream.fixes
        assert fixes[0].speed_mps == 1.5
        assert fixes[1].speed_mps is None

    def test_latitude_out_of_range(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("t,lat,lon,speed\n0.0,95.0,7.0,\n")
        with pytest.raises(DataError, match="latitude out of range"):
            load_location_csv(p)

    def test_missing_speed_column(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("t,lat,lon\n0.0,45.0,7.0\n5.0,45.0,7.1\n")
        stream = load_location_csv(p)
        assert all(f.speed_mps is None for f in stream.fixes)


class TestPamap2:
    def test_single_activity_slice(self, tmp_path):
        n = 500
        t = np.arange(n) / 100.0
        write_pamap2_dat(tmp_path / "s.dat", t, np.full(n, 4), np.full(n, 9.81))
        labeled = load_pamap2(tmp_path / "s.dat")
        assert labeled.labels.labels() == {"walking"}
        assert len(labeled.stream) == n

    def test_posture_ids_map_per_caption(self, tmp_path):
        n = 300
        t = np.arange(n) / 100.0
        act = np.concatenate([np.full(100, 1), np.full(100, 2), np.full(100, 3)])
        write_pamap2_dat(tmp_path / "s.dat", t, act, np.full(n, 9.81))
        labeled = load_pamap2(tmp_path / "s.dat")
        assert [e.label for e in labeled.labels] == ["lying", "sitting", "standing"]

    def test_transient_rows_keep_stream_drop_labels(self, tmp_path):
        n = 200
        t = np.arange(n) / 100.0
        write_pamap2_dat(tmp_path / "s.dat", t, np.zeros(n), np.full(n, 9.81))
        labeled = load_pamap2(tmp_path / "s.dat")
        assert len(labeled.labels) == 0
        assert len(labeled.stream) == n

    def test_unknown_activity_id_rejected(self, tmp_path):
        t = np.arange(10) / 100.0
        write_pamap2_dat(tmp_path / "s.dat", t, np.full(10, 99), np.full(10, 9.81))
        with pytest.raises(DataError, match="unknown activity id"):
            load_pamap2(tmp_path / "s.dat")

    def test_official_54_column_layout(self, tmp_path):
        n = 50
        data = np.full((n, 54), np.nan)
        data[:, 0] = np.arange(n) / 100.0
        data[:, 1] = 4
        data[:, 21:24] = [0.0, 0.0, 9.81]
        data[:, 4:7] = [1.0, 2.0, 2.0]  # hand accel
        np.savetxt(tmp_path / "s.dat", data, fmt="%.4f")
        chest = load_pamap2(tmp_path / "s.dat", "chest")
        assert chest.stream.az[0] == pytest.approx(9.81)
        hand = load_pamap2(tmp_path / "s.dat", "hand")
        assert hand.stream.ax[0] == pytest.approx(1.0)

    def test_nan_accel_rows_dropped(self, tmp_path):
        n = 100
        t = np.arange(n) / 100.0
        m = np.full(n, 9.81)
        m[10:20] = np.nan
        write_pamap2_dat(tmp_path / "s.dat", t, np.full(n, 4), m)
        labeled = load_pamap2(tmp_path / "s.dat")
        assert len(labeled.stream) == 90

    def test_labels_cover_only_stream_span(self, tmp_path):
        t, act, m = subject_activity_arrays(0, seconds_per_class=10.0,
                                            classes=("lying", "walking"))
        write_pamap2_dat(tmp_path / "s.dat", t, act, m)
        labeled = load_pamap2(tmp_path / "s.dat")
        pad = 1.5 / labeled.stream.nominal_rate_hz
        assert labeled.labels.t_start >= labeled.stream.t[0] - pad
        assert labeled.labels.t_end <= labeled.stream.t[-1] + pad


def write_shl_session(path, label_values, n_seconds=30, rate=100, t0_ms=1000):
    path.mkdir(parents=True, exist_ok=True)
    n = n_seconds * rate
    t_ms = t0_ms + np.arange(n) * (1000.0 / rate)
    motion = np.column_stack([t_ms, np.zeros(n), np.zeros(n), np.full(n, 9.81)])
    np.savetxt(path / "Motion.txt", motion, fmt="%.2f")
    t_loc = t0_ms + np.arange(n_seconds) * 1000.0
    location = np.column_stack([t_loc, np.zeros(n_seconds),
                                np.full(n_seconds, 45.0),
                                np.full(n_seconds, 7.0),
                                np.zeros(n_seconds), np.ones(n_seconds)])
    np.savetxt(path / "Location.txt", location, fmt="%.2f")
    t_lab = t0_ms + np.arange(n_seconds) * 1000.0
    labels = np.column_stack([t_lab, label_values])
    np.savetxt(path / "Label.txt", labels, fmt="%.2f")


class TestShl:
    def test_single_mode_session(self, tmp_path):
        write_shl_session(tmp_path / "s1", np.full(30, 5))
        accel, loc, labels = load_shl_slice(tmp_path / "s1")
        assert labels.labels() == {"car"}
        assert accel.t[0] == 0.0
        assert len(loc) == 30

    def test_still_segments_present(self, tmp_path):
        values = np.concatenate([np.full(10, 1), np.full(10, 2), np.full(10, 1)])
        write_shl_session(tmp_path / "s1", values)
        _, _, labels = load_shl_slice(tmp_path / "s1")
        assert [e.label for e in labels] == ["still", "walk_run", "still"]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError):
            load_shl_slice(tmp_path / "nope")

    def test_duration_mismatch_rejected(self, tmp_path):
        path = tmp_path / "s1"
        write_shl_session(path, np.full(30, 5))
        labels = np.column_stack([1000 + np.arange(10) * 1000.0, np.full(10, 5)])
        np.savetxt(path / "Label.txt", labels, fmt="%.2f")
        with pytest.raises(DataError, match="durations"):
            load_shl_slice(path)

    def test_unknown_coarse_label(self, tmp_path):
        path = tmp_path / "s1"
        write_shl_session(path, np.full(30, 9))
        with pytest.raises(DataError, match="unknown coarse label"):
            load_shl_slice(path)


class TestPoi:
    def test_two_rows(self, tmp_path):
        p = tmp_path / "poi.csv"
        p.write_text("lat,lon,category\n45.0,7.0,cafe\n45.001,7.0,school\n")
        table = load_poi_table(p)
        assert len(table) == 2
        assert table[0].category == "cafe"

    def test_unknown_category_names_row(self, tmp_path):
        p = tmp_path / "poi.csv"
        p.write_text("lat,lon,category\n45.0,7.0,cafe\n45.1,7.0,disco\n")
        with pytest.raises(DataError, match="poi.csv:3"):
            load_poi_table(p)

    def test_duplicate_coordinates_kept(self, tmp_path):
        p = tmp_path / "poi.csv"
        p.write_text("lat,lon,category\n45.0,7.0,cafe\n45.0,7.0,gym\n")
        assert len(load_poi_table(p)) == 2

    def test_nearest_within_radius(self):
        table = [PoiEntry(45.0, 7.0, "cafe"), PoiEntry(45.01, 7.0, "gym")]
        near_cafe = LocationFix(0.0, 45.00004, 7.0)  # ~4.5 m away
        found = nearest_poi(table, near_cafe, 50.0)
        assert found is not None and found.category == "cafe"

    def test_nothing_within_radius(self):
        table = [PoiEntry(45.0, 7.0, "cafe")]
        far = LocationFix(0.0, 45.0008, 7.0)  # ~89 m away
        assert nearest_poi(table, far, 50.0) is None

    def test_picks_closest_of_two(self):
        table = [PoiEntry(45.00018, 7.0, "gym"),     # ~20 m
                 PoiEntry(45.00009, 7.0, "cafe")]    # ~10 m
        found = nearest_poi(table, LocationFix(0.0, 45.0, 7.0), 50.0)
        assert found is not None and found.category == "cafe"

    def test_result_distance_never_exceeds_radius(self, rng):
        from mobisense.signal_core import haversine_m
        table = [PoiEntry(45.0 + float(d), 7.0, "other")
                 for d in rng.uniform(-0.01, 0.01, 20)]
        for _ in range(20):
            point = LocationFix(0.0, 45.0 + float(rng.uniform(-0.01, 0.01)), 7.0)
            radius = float(rng.uniform(5, 500))
            found = nearest_poi(table, point, radius)
            if found is not None:
                assert float(haversine_m(point.lat, point.lon,
                                         found.lat, found.lon)) <= radius


def test_labeled_stream_rejects_out_of_span_labels():
    t = np.arange(100) / 100.0
    stream = AccelStream(t, np.zeros(100), np.zeros(100), np.full(100, 9.81), 100.0)
    from mobisense.signal_core import LabelSpan, LabelTimeline
    bad = LabelTimeline((LabelSpan(0.0, 50.0, "walking"),))
    with pytest.raises(ValueError):
        LabeledAccelStream(stream, bad)
