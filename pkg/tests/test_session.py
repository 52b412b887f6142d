import numpy as np
import pytest

from shoegait.kinematics import MountingCalibration, SensorLayout
from shoegait.session import (
    MODULE_HEADER,
    STUDY_SHOES,
    DuplicateRecordError,
    MalformedLineError,
    MissingTriggerError,
    ModuleFile,
    NoCommonRangeError,
    NonMonotoneTickError,
    SessionFormatError,
    SessionMeta,
    ShoeConfig,
    UnitRangeError,
    derive_walking_height,
    load_session,
    modules_from_streams,
    parse_module_file,
    read_calibration,
    read_kv,
    read_meta,
    shoe_clusters,
    synchronize,
    write_calibration,
    write_kv,
    write_meta,
    write_module_file,
    write_session_files,
)

HEADER = ",".join(MODULE_HEADER)


def write_lines(tmp_path, lines, name="module_0.csv", newline=True):
    path = tmp_path / name
    path.write_text("\n".join(lines) + ("\n" if newline else ""), encoding="utf-8")
    return path


def record(tick, sid, accel=(0.0, 0.0, 9.81), gyro=(0.0, 0.0, 0.0), module=0):
    return ",".join(str(v) for v in (module, tick, sid, *accel, *gyro))


def module(module_id, sensors, n_ticks, rng=None, skip=()):
    rng = rng or np.random.default_rng(0)
    ticks, sids = [], []
    for t in range(n_ticks):
        for s in sensors:
            if (t, s) in skip:
                continue
            ticks.append(t)
            sids.append(s)
    n = len(ticks)
    return ModuleFile(
        module_id,
        np.array(ticks),
        np.array(sids),
        rng.normal(0, 3, size=(n, 3)) + [0, 0, 9.81],
        rng.normal(0, 1, size=(n, 3)),
    )


META = SessionMeta("c01", STUDY_SHOES["H3"])


class TestShoes:
    @pytest.mark.parametrize(
        "label, expected",
        [("H1", 0.25), ("H2", 1.75), ("H3", 2.5), ("H4", 4.0), ("H5", 4.0), ("H6", 4.5), ("H7", 2.25)],
    )
    def test_walking_heights(self, label, expected):
        assert derive_walking_height(STUDY_SHOES[label]) == expected
        assert STUDY_SHOES[label].walking_height_in == expected

    def test_flat_shoe(self):
        assert derive_walking_height(ShoeConfig("F", 1.0, 1.0)) == 0.0

    @pytest.mark.parametrize("x, y", [(2.0, 1.0), (-0.5, 1.0), (float("nan"), 1.0)])
    def test_invalid(self, x, y):
        with pytest.raises(ValueError):
            ShoeConfig("X", x, y)

    def test_published_clusters(self):
        clusters = shoe_clusters(STUDY_SHOES.values())
        assert clusters == {
            "walking_height": ("H1", "H2", "H3"),
            "platform_height": ("H4", "H5", "H6"),
            "overall_height": ("H3", "H7"),
        }

    def test_clusters_order_independent(self):
        shoes = list(STUDY_SHOES.values())[::-1]
        assert shoe_clusters(shoes) == shoe_clusters(STUDY_SHOES.values())


class TestParse:
    def test_two_sensors_three_ticks(self, tmp_path):
        lines = [HEADER] + [record(t, s) for t in range(3) for s in (0, 1)]
        m = parse_module_file(write_lines(tmp_path, lines))
        assert len(m) == 6
        assert m.sensors() == [0, 1]
        assert m.events is None

    def test_event_column(self, tmp_path):
        lines = [HEADER + ",event", record(0, 0) + ",", record(1, 0) + ",3"]
        m = parse_module_file(write_lines(tmp_path, lines))
        assert m.events.tolist() == [0, 3]

    def test_duplicate_names_line(self, tmp_path):
        lines = [HEADER, record(0, 0), record(0, 1), record(1, 0), record(1, 0)]
        with pytest.raises(DuplicateRecordError) as exc:
            parse_module_file(write_lines(tmp_path, lines))
        assert exc.value.line == 5
        assert "line 5" in str(exc.value)
        assert exc.value.kind == "duplicate-record"

    def test_non_monotone(self, tmp_path):
        lines = [HEADER, record(0, 0), record(2, 0), record(1, 0)]
        with pytest.raises(NonMonotoneTickError) as exc:
            parse_module_file(write_lines(tmp_path, lines))
        assert (exc.value.line, exc.value.column) == (4, 2)

    @pytest.mark.parametrize(
        "accel, gyro, column",
        [((160.5, 0, 0), (0, 0, 0), 4), ((0, 0, -161), (0, 0, 0), 6), ((0, 0, 9.8), (0, 35.1, 0), 8)],
    )
    def test_unit_range(self, tmp_path, accel, gyro, column):
        lines = [HEADER, record(0, 0), record(1, 0, accel, gyro)]
        with pytest.raises(UnitRangeError) as exc:
            parse_module_file(write_lines(tmp_path, lines))
        assert (exc.value.line, exc.value.column) == (3, column)

    def test_full_scale_accepted(self, tmp_path):
        lines = [HEADER, record(0, 0, (160, -160, 0), (35, -35, 0))]
        parse_module_file(write_lines(tmp_path, lines))

    def test_missing_trigger(self, tmp_path):
        lines = [HEADER, record(0, 0), record(1, 0), record(1, 1)]
        with pytest.raises(MissingTriggerError) as exc:
            parse_module_file(write_lines(tmp_path, lines))
        assert exc.value.line == 4

    @pytest.mark.parametrize(
        "bad_line, column",
        [
            ("0,1,0,0.0,0.0,9.81,0.0,0.0", 8),  # short
            ("0,1,0,0.0,0.0,9.81,0.0,0.0,0.0,1", 9),  # long
            ("x,1,0,0.0,0.0,9.81,0.0,0.0,0.0", 1),
            ("1,1,0,0.0,0.0,9.81,0.0,0.0,0.0", 1),  # other module
            ("0,1.5,0,0.0,0.0,9.81,0.0,0.0,0.0", 2),
            ("0,-1,0,0.0,0.0,9.81,0.0,0.0,0.0", 2),
            ("0,1,12,0.0,0.0,9.81,0.0,0.0,0.0", 3),
            ("0,1,0,0.0,abc,9.81,0.0,0.0,0.0", 5),
            ("0,1,0,0.0,0.0,nan,0.0,0.0,0.0", 6),
            ("0,1,0,0.0,0.0,9.81,0.0,0.0,inf", 9),
            ("", 1),
        ],
    )
    def test_malformed_located(self, tmp_path, bad_line, column):
        lines = [HEADER, record(0, 0), bad_line]
        with pytest.raises(MalformedLineError) as exc:
            parse_module_file(write_lines(tmp_path, lines))
        assert (exc.value.line, exc.value.column) == (3, column)
        assert str(tmp_path) in str(exc.value)

    def test_bad_header(self, tmp_path):
        with pytest.raises(MalformedLineError) as exc:
            parse_module_file(write_lines(tmp_path, ["module,tick", record(0, 0)]))
        assert exc.value.line == 1

    def test_missing_final_newline(self, tmp_path):
        with pytest.raises(MalformedLineError, match="newline"):
            parse_module_file(write_lines(tmp_path, [HEADER, record(0, 0)], newline=False))

    def test_header_only(self, tmp_path):
        with pytest.raises(MalformedLineError, match="no records"):
            parse_module_file(write_lines(tmp_path, [HEADER]))

    def test_errors_share_base(self):
        for cls in (MalformedLineError, DuplicateRecordError, NonMonotoneTickError, UnitRangeError, MissingTriggerError):
            assert issubclass(cls, SessionFormatError)

    def test_write_parse_identity(self, tmp_path, rng):
        m = module(1, range(6, 12), 50, rng)
        m.events = rng.integers(0, 3, size=len(m))
        path = tmp_path / "module_1.csv"
        write_module_file(path, m)
        back = parse_module_file(path)
        assert back.module_id == 1
        for name in ("ticks", "sensor_ids", "accel", "gyro", "events"):
            assert np.array_equal(getattr(back, name), getattr(m, name))


class TestSynchronize:
    def test_full_overlap(self):
        mods = [module(0, range(6), 1000), module(1, range(6, 12), 1000)]
        streams = synchronize(mods, META)
        assert sorted(streams) == list(range(12))
        assert all(len(s) == 1000 for s in streams.values())
        assert streams[3].timestamps[32] == 1.0

    def test_intersection(self):
        mods = [module(0, range(6), 1000), module(1, range(6, 12), 900)]
        streams = synchronize(mods, META)
        assert all(len(s) == 900 for s in streams.values())
        assert streams[0].timestamps[-1] == 899 / 32

    def test_single_gap_interpolated(self):
        m = module(0, range(6), 20, skip={(10, 2)})
        s = synchronize([m], META)[2]
        assert len(s) == 20
        assert s.interpolated.tolist() == [k == 10 for k in range(20)]
        np.testing.assert_allclose(s.accel[10], 0.5 * (s.accel[9] + s.accel[11]), rtol=0, atol=1e-15)
        np.testing.assert_allclose(s.gyro[10], 0.5 * (s.gyro[9] + s.gyro[11]), rtol=0, atol=1e-15)

    def test_two_gap_interpolated(self):
        m = module(0, range(6), 20, skip={(10, 2), (11, 2)})
        s = synchronize([m], META)[2]
        assert s.interpolated.sum() == 2
        np.testing.assert_allclose(s.accel[10], s.accel[9] + (s.accel[12] - s.accel[9]) / 3, atol=1e-14)

    def test_long_gap_left(self):
        m = module(0, range(6), 20, skip={(10, 2), (11, 2), (12, 2)})
        s = synchronize([m], META)[2]
        assert len(s) == 17
        assert not s.interpolated.any()
        assert np.max(np.diff(s.timestamps)) == pytest.approx(4 / 32)

    def test_timestamps_follow_rate(self):
        meta = SessionMeta("c", STUDY_SHOES["H1"], sample_rate_hz=100.0)
        s = synchronize([module(0, range(6), 5)], meta)[0]
        np.testing.assert_array_equal(s.timestamps, np.arange(5) / 100.0)

    def test_no_common_range(self):
        a = module(0, [0], 5)
        b = module(1, [6], 20)
        b = ModuleFile(1, b.ticks[b.ticks >= 10], b.sensor_ids[b.ticks >= 10], b.accel[b.ticks >= 10], b.gyro[b.ticks >= 10])
        with pytest.raises(NoCommonRangeError):
            synchronize([a, b], META)

    def test_no_modules(self):
        with pytest.raises(NoCommonRangeError):
            synchronize([], META)

    def test_sensor_in_two_modules(self):
        with pytest.raises(ValueError):
            synchronize([module(0, [0, 1], 5), module(1, [1, 2], 5)], META)

    def test_idempotent(self, rng):
        mods = [module(0, range(6), 200, rng, skip={(50, 3)}), module(1, range(6, 12), 180, rng)]
        once = synchronize(mods, META)
        twice = synchronize(modules_from_streams(once, META.layout, META.sample_rate_hz), META)
        for sid in once:
            for name in ("timestamps", "accel", "gyro"):
                assert np.array_equal(getattr(once[sid], name), getattr(twice[sid], name))


class TestKeyValue:
    def test_round_trip(self, tmp_path):
        write_kv(tmp_path / "a.kv", {"x": 1.5, "y": "two words", "z": 3}, comment="hello")
        assert read_kv(tmp_path / "a.kv") == {"x": "1.5", "y": "two words", "z": "3"}

    def test_malformed(self, tmp_path):
        (tmp_path / "b.kv").write_text("a = 1\nnot a pair\n")
        with pytest.raises(MalformedLineError) as exc:
            read_kv(tmp_path / "b.kv")
        assert exc.value.line == 2

    def test_duplicate_key(self, tmp_path):
        (tmp_path / "c.kv").write_text("a = 1\n# note\na = 2\n")
        with pytest.raises(DuplicateRecordError) as exc:
            read_kv(tmp_path / "c.kv")
        assert exc.value.line == 3

    def test_meta_round_trip(self, tmp_path):
        left = dict(zip(["pelvis", "thigh_upper", "thigh_lower", "shank_upper", "shank_lower", "foot"], [1, 0, 3, 2, 5, 4]))
        right = {k: v + 6 for k, v in left.items()}
        meta = SessionMeta(
            "Cand.02",
            ShoeConfig("H9", 0.75, 4.125),
            sample_rate_hz=50.0,
            layout=SensorLayout(left, right),
            calibration_file="cal.kv",
            notes="trial 3",
            reported={"step_cycle_time_s": 1.1474, "accel_variance_mps2sq": 0.3921},
        )
        write_meta(tmp_path / "meta.kv", meta)
        assert read_meta(tmp_path / "meta.kv") == meta

    def test_meta_missing_key(self, tmp_path):
        (tmp_path / "meta.kv").write_text("candidate_id = a\n")
        with pytest.raises(SessionFormatError, match="shoe.label"):
            read_meta(tmp_path / "meta.kv")

    def test_meta_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            SessionMeta("a", STUDY_SHOES["H1"], sample_rate_hz=0.0)

    def test_calibration_round_trip(self, tmp_path, rng):
        q = rng.normal(size=(12, 4))
        calib = MountingCalibration({i: q[i] / np.linalg.norm(q[i]) for i in range(12)})
        write_calibration(tmp_path / "calibration.kv", calib)
        back = read_calibration(tmp_path / "calibration.kv")
        for i in range(12):
            np.testing.assert_allclose(back.alignments[i], calib.alignments[i], rtol=0, atol=1e-15)


class TestSessionDir:
    def test_load(self, tmp_path, rng):
        mods = [module(0, range(6), 40, rng), module(1, range(6, 12), 40, rng)]
        calib = MountingCalibration.identity(range(12))
        meta = SessionMeta("c", STUDY_SHOES["H2"])
        write_session_files(tmp_path, meta, mods, calib)
        s = load_session(tmp_path)
        assert not s.metadata_only
        assert [m.module_id for m in s.modules] == [0, 1]
        assert s.calibration is not None
        assert s.meta.calibration_file == "calibration.kv"

    def test_metadata_only(self, tmp_path):
        write_session_files(tmp_path, SessionMeta("c", STUDY_SHOES["H2"]), [])
        assert load_session(tmp_path).metadata_only

    def test_missing_meta(self, tmp_path):
        with pytest.raises(SessionFormatError, match="meta.kv"):
            load_session(tmp_path)

    def test_module_numbering_sorted_numerically(self, tmp_path, rng):
        mods = [module(i, [i], 5, rng) for i in (2, 10, 1)]
        write_session_files(tmp_path, META, mods)
        assert [m.module_id for m in load_session(tmp_path).modules] == [1, 2, 10]
