import struct
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from strategies import flight_logs

from uavforensics.ulog import (
    Dropout,
    Field,
    FlightLog,
    LoggedText,
    ParameterChange,
    ParameterDefault,
    ParameterSet,
    Subscription,
    TimeSeries,
    ULogFormatError,
    ULogWriteError,
    UlogHeader,
    detect_dropouts,
    extract_parameters,
    parse_ulog,
    read_ulog,
    write_ulog,
)
from uavforensics.ulog.layout import compile_layout, parse_format, render_format
from uavforensics.ulog.model import Provenance

GOLDEN = Path(__file__).resolve().parent.parent / "fixtures" / "ulog" / "golden.ulg"


def golden_log() -> FlightLog:
    """What fixtures/ulog/golden.ulg decodes to, spelled out by hand."""
    q_cols = ("timestamp", "q[0]", "q[1]", "q[2]", "q[3]")
    return FlightLog(
        header=UlogHeader(1, 1_000_000),
        parameters=ParameterSet(initial={"MPC_XY_CRUISE": 5.0}),
        formats={"vehicle_attitude": (Field("uint64_t", "timestamp"), Field("float", "q", 4))},
        subscriptions=[Subscription(0, "vehicle_attitude", 0)],
        series={
            ("vehicle_attitude", 0): TimeSeries(
                "vehicle_attitude",
                0,
                q_cols,
                [
                    dict(zip(q_cols, (2_000_000, 1.0, 0.0, 0.0, 0.0))),
                    dict(zip(q_cols, (2_100_000, 0.5, 0.5, 0.5, 0.5))),
                ],
            )
        },
        logged_text=[LoggedText(2_000_000, 6, "Armed")],
        dropouts=[Dropout(2_100_000, 40)],
        info={"sys_name": "NuttX"},
    )


def _msg(kind, payload):
    return struct.pack("<HB", len(payload), ord(kind)) + payload


def _header(ts=0):
    return b"ULog\x01\x12\x35\x01" + struct.pack("<Q", ts)


class TestGoldenFile:
    def test_writer_reproduces_golden_bytes(self):
        assert write_ulog(golden_log()) == GOLDEN.read_bytes()

    def test_reader_decodes_golden(self):
        log = read_ulog(GOLDEN)
        assert log == golden_log()
        assert not log.truncated
        assert log.warnings == []

    def test_helpers(self):
        log = parse_ulog(GOLDEN.read_bytes())
        assert extract_parameters(log).get("MPC_XY_CRUISE") == 5.0
        assert detect_dropouts(log) == [(2_100_000, 40)]


class TestReaderSalvage:
    def test_empty_log_is_header_only(self):
        data = write_ulog(FlightLog())
        assert len(data) == 16
        assert parse_ulog(data) == FlightLog()

    def test_bad_magic(self):
        with pytest.raises(ULogFormatError) as e:
            parse_ulog(b"XLog\x01\x12\x35\x01" + bytes(8))
        assert e.value.offset == 0

    def test_short_header(self):
        with pytest.raises(ULogFormatError):
            parse_ulog(b"ULog\x01\x12\x35\x01\x00")

    def test_read_error_names_file(self, tmp_path):
        p = tmp_path / "bad.ulg"
        p.write_bytes(b"not a log at all")
        with pytest.raises(ULogFormatError) as e:
            read_ulog(p)
        assert "bad.ulg" in str(e.value)

    def test_truncated_tail_keeps_prefix(self):
        data = GOLDEN.read_bytes()
        log = parse_ulog(data[:200])  # cuts the second D message
        assert log.truncated
        assert log.truncated_at == 186
        rows = log.series[("vehicle_attitude", 0)].rows
        assert [r["timestamp"] for r in rows] == [2_000_000]
        assert log.logged_text == [LoggedText(2_000_000, 6, "Armed")]

    def test_unknown_message_type_skipped(self):
        data = GOLDEN.read_bytes()
        data = data[:140] + _msg("Z", b"\x01\x02\x03") + data[140:]
        log = parse_ulog(data)
        assert log == golden_log()
        assert log.skipped == {"unknown:90": 1}

    def test_malformed_message_skipped_with_warning(self):
        bad_param = _msg("P", b"\x40" + b"float X")  # key length past payload
        data = _header() + bad_param + _msg("P", bytes([10]) + b"int32_t AB" + struct.pack("<i", 3))
        log = parse_ulog(data)
        assert log.warnings
        assert log.skipped.get("corrupt") == 1
        assert not log.truncated
        assert log.parameters.initial == {"AB": 3}

    def test_parameter_provenance(self):
        body = _msg("P", bytes([13]) + b"int32_t SDLOG" + struct.pack("<i", 0))
        body += _msg("Q", b"\x01" + bytes([13]) + b"float BAT_LOW" + struct.pack("<f", 0.25))
        body += _msg("F", b"m:uint64_t timestamp;")
        body += _msg("A", struct.pack("<BH", 0, 0) + b"m")
        body += _msg("D", struct.pack("<HQ", 0, 5_000))
        body += _msg("P", bytes([13]) + b"int32_t SDLOG" + struct.pack("<i", 1))
        log = parse_ulog(_header() + body)
        p = log.parameters
        assert p.initial == {"SDLOG": 0}
        assert p.changes == [ParameterChange(5_000, "SDLOG", 1)]
        assert p.defaults == [ParameterDefault("BAT_LOW", 0.25, 1)]
        entries = p.entries()
        assert entries["SDLOG"].provenance == Provenance.CHANGED_IN_FLIGHT
        assert entries["BAT_LOW"].provenance == Provenance.DEFAULT

    def test_dropout_before_any_data_uses_header_time(self):
        log = parse_ulog(_header(777) + _msg("O", struct.pack("<H", 12)))
        assert log.dropouts == [Dropout(777, 12)]

    def test_unknown_incompat_bits_stop_decoding(self):
        flags = struct.pack("<8s8s3Q", bytes(8), b"\x02" + bytes(7), 0, 0, 0)
        data = _header() + _msg("B", flags) + _msg("I", bytes([12]) + b"char[1] name" + b"x")
        log = parse_ulog(data)
        assert log.truncated
        assert log.info == {}
        assert log.flag_bits.unknown_incompat

    def test_appended_data_flag_alone_is_fine(self):
        flags = struct.pack("<8s8s3Q", bytes(8), b"\x01" + bytes(7), 0, 0, 0)
        data = _header() + _msg("B", flags) + _msg("I", bytes([12]) + b"char[1] name" + b"x")
        log = parse_ulog(data)
        assert not log.truncated
        assert log.info == {"name": "x"}

    def test_padding_fields_are_not_columns(self):
        body = _msg("F", b"m:uint64_t timestamp;uint8_t a;uint8_t[3] _padding0;float b;")
        body += _msg("A", struct.pack("<BH", 0, 3) + b"m")
        body += _msg("D", struct.pack("<HQB3xf", 3, 10, 7, 1.5))
        log = parse_ulog(_header() + body)
        s = log.find_series("m")
        assert s.columns == ("timestamp", "a", "b")
        assert s.rows == [{"timestamp": 10, "a": 7, "b": 1.5}]

    def test_nested_format_flattened(self):
        body = _msg("F", b"inner:float x;float y;")
        body += _msg("F", b"outer:uint64_t timestamp;inner pos;")
        body += _msg("A", struct.pack("<BH", 1, 0) + b"outer")
        body += _msg("D", struct.pack("<HQff", 0, 10, 1.0, 2.0))
        log = parse_ulog(_header() + body)
        s = log.find_series("outer")
        assert s.multi_id == 1
        assert s.rows == [{"timestamp": 10, "pos.x": 1.0, "pos.y": 2.0}]


class TestWriterChecks:
    def test_rows_without_subscription(self):
        log = golden_log()
        log.subscriptions = []
        with pytest.raises(ULogWriteError):
            write_ulog(log)

    def test_decreasing_timestamps(self):
        log = golden_log()
        log.series[("vehicle_attitude", 0)].rows.reverse()
        with pytest.raises(ULogWriteError):
            write_ulog(log)

    def test_bool_parameter_rejected(self):
        log = FlightLog(parameters=ParameterSet(initial={"X": True}))
        with pytest.raises(ULogWriteError):
            write_ulog(log)


class TestFormatText:
    def test_format_round_trip(self):
        text = "vehicle_gps_position:uint64_t timestamp;int32_t lat;char[8] name;float[3] v;"
        name, fields = parse_format(text)
        assert name == "vehicle_gps_position"
        assert render_format(name, fields) == text

    def test_layout_columns(self):
        fields = parse_format("a:uint64_t timestamp;float[2] q;char[4] s;")[1]
        layout = compile_layout("a", {"a": fields})
        assert layout.columns == ("timestamp", "q[0]", "q[1]", "s")


# -- property: parse(write(log)) == log for generated logs ------------------


class TestRoundTripProperty:
    @settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(flight_logs())
    def test_parse_write_identity(self, log):
        data = write_ulog(log)
        again = parse_ulog(data)
        assert again == log
        assert not again.truncated
        assert write_ulog(again) == data
