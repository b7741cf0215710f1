import random
from datetime import datetime, timedelta, timezone

import pytest

from uavforensics import synthetic
from uavforensics.evidence import GeoPoint, sha256_bytes
from uavforensics.media import (
    ClockAlignment,
    Confidence,
    MediaEntry,
    MediaManifest,
    OutOfWindowError,
    alignment_from_log,
    build_media_manifest,
    geotag,
    parse_media_manifest,
    position_at,
    read_capture_time,
    render_media_manifest,
)
from uavforensics.track import TrackSample, Trajectory, build_trajectory

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def two_point():
    return Trajectory(
        (TrackSample(0, GeoPoint(0.0, 0.0, 0.0)), TrackSample(10_000_000, GeoPoint(0.001, 0.0, 10.0)))
    )


def entry(name, seconds):
    return MediaEntry(name, EPOCH + timedelta(seconds=seconds), "0" * 64)


class TestInterpolation:
    def test_midpoint(self):
        p = position_at(two_point(), 5_000_000)
        assert p.lat_deg == pytest.approx(0.0005, abs=1e-12)
        assert p.lon_deg == pytest.approx(0.0, abs=1e-12)
        assert p.alt_m == pytest.approx(5.0, abs=1e-12)

    def test_exact_at_samples(self):
        traj = two_point()
        assert position_at(traj, 0) == traj.samples[0].position
        assert position_at(traj, 10_000_000) == traj.samples[1].position

    def test_outside_window_refused(self):
        with pytest.raises(OutOfWindowError) as info:
            position_at(two_point(), 10_000_001)
        assert info.value.window == (0, 10_000_000)

    def test_continuity(self):
        rng = random.Random(3)
        pts = [TrackSample(k * 1_000_000, GeoPoint(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 100))) for k in range(20)]
        traj = Trajectory(tuple(pts))
        for s in traj.samples[1:-1]:
            before = position_at(traj, s.t_us - 1)
            after = position_at(traj, s.t_us + 1)
            assert abs(before.lat_deg - s.position.lat_deg) < 1e-5
            assert abs(after.lat_deg - s.position.lat_deg) < 1e-5
            assert abs(before.alt_m - s.position.alt_m) < 1e-3


class TestGeotag:
    def test_counts_and_confidence(self):
        traj = two_point()
        manifest = MediaManifest((entry("a.jpg", -1), entry("b.jpg", 5), entry("c.jpg", 11)))
        res = geotag(manifest, traj, ClockAlignment(EPOCH))
        assert len(res) == len(manifest.entries)
        assert [r.confidence for r in res] == [Confidence.OUT_OF_FLIGHT, Confidence.INTERPOLATED, Confidence.OUT_OF_FLIGHT]
        assert res[0].position is None and res[2].position is None
        assert res[1].spacing_m > 0

    def test_offset_shift_invariance(self):
        traj = two_point()
        base = geotag(MediaManifest((entry("x.jpg", 4),)), traj, ClockAlignment(EPOCH))[0]
        for shift in (-3.5, 0.25, 2.0):
            shifted = MediaManifest((entry("x.jpg", 4 - shift),))
            got = geotag(shifted, traj, ClockAlignment(EPOCH, camera_offset_s=shift))[0]
            assert got.t_log_us == base.t_log_us
            assert got.position == base.position

    def test_single_sample_trajectory(self):
        traj = Trajectory((TrackSample(0, GeoPoint(0, 0)),))
        res = geotag(MediaManifest((entry("a.jpg", 0),)), traj, ClockAlignment(EPOCH))
        assert res[0].confidence is Confidence.EXTRAPOLATION_REFUSED

    def test_result_dict(self):
        r = geotag(MediaManifest((entry("b.jpg", 5),)), two_point(), ClockAlignment(EPOCH))[0]
        d = r.to_dict()
        assert d["file"] == "b.jpg" and d["confidence"] == "interpolated"
        assert d["t_log_us"] == 5_000_000


class TestAlignment:
    def test_from_gps_utc(self):
        log = synthetic.flight_log()
        align = alignment_from_log(log)
        assert align.log_epoch_utc == synthetic.LOG_EPOCH_UTC
        assert align.source.endswith("time_utc_usec")

    def test_missing_gps_time(self):
        from uavforensics.ulog import FlightLog

        assert alignment_from_log(FlightLog()) is None

    def test_constructed_flight_geotags(self):
        log = synthetic.flight_log()
        traj = build_trajectory(log)
        manifest = MediaManifest(
            tuple(
                MediaEntry(n, synthetic.LOG_EPOCH_UTC + timedelta(seconds=s), "0" * 64)
                for n, s in synthetic.IMAGES
                if s is not None
            )
        )
        res = {r.file_name: r for r in geotag(manifest, traj, alignment_from_log(log))}
        assert res["IMG_0001.jpg"].confidence is Confidence.OUT_OF_FLIGHT
        assert res["IMG_0002.jpg"].confidence is Confidence.INTERPOLATED
        assert res["IMG_0003.jpg"].confidence is Confidence.INTERPOLATED


class TestManifest:
    def test_round_trip(self):
        m = MediaManifest((entry("a.jpg", 1), entry("b.jpg", 2)), ("c.jpg",))
        assert parse_media_manifest(render_media_manifest(m)) == m

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            MediaManifest((entry("a.jpg", 1), entry("a.jpg", 2)))

    def test_build_from_files(self, tmp_path):
        when = datetime(2023, 3, 14, 9, 8, 40, tzinfo=timezone.utc)
        blobs = {
            "IMG_1.jpg": synthetic.jpeg_with_capture_time(when, 1),
            "IMG_2.jpg": synthetic.jpeg_with_capture_time(None, 2),
            "notes.txt": b"not an image",
            "broken.jpg": b"\xff\xd8 garbage",
        }
        for name, data in blobs.items():
            (tmp_path / name).write_bytes(data)
        assert read_capture_time(tmp_path / "IMG_1.jpg") == when
        m = build_media_manifest(tmp_path.iterdir())
        assert [e.file_name for e in m.entries] == ["IMG_1.jpg"]
        assert m.entries[0].sha256 == sha256_bytes(blobs["IMG_1.jpg"])
        assert set(m.uncorrelatable) == {"IMG_2.jpg", "broken.jpg"}
