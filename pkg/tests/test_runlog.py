import io

import numpy as np
import pytest

from planwatch import (
    CornerCaseEvent,
    EventKind,
    LateralProfile,
    ParseError,
    Pose2D,
    ResponseAction,
    RunLog,
    SpeedClass,
    Trajectory,
    TrajectorySource,
    quantize_stamp,
    read_log,
    write_log,
)
from planwatch.runlog import (
    E2ePlanRecord,
    EventRecord,
    InterventionRecord,
    LogHeader,
    ModularPlanRecord,
    ProfileRecord,
    SpeedClassRecord,
    WorldRecord,
)


def sample_log():
    mod = Trajectory.modular(
        0.1, [Pose2D(0, 0, 0.25), Pose2D(1, 0.5), Pose2D(2, 0.75)], [5.0, 4.5, 4.0]
    )
    e2e = Trajectory.end_to_end(0.1, [Pose2D(0, 0), Pose2D(1, 0)])
    event = CornerCaseEvent(
        EventKind.LONGITUDINAL, 0.2, 2.0, (0.2, 0.3),
        response=ResponseAction.minimal_risk_maneuver(),
        trigger_sc=SpeedClass.BRAKE,
    )
    profile = LateralProfile(0.3, (0.1, -0.2), (0.0, 1.5))
    records = (
        E2ePlanRecord(0.1, e2e),
        SpeedClassRecord(0.1, SpeedClass.WARNING),
        ModularPlanRecord(0.1, mod),
        WorldRecord(0.15, Pose2D(0.5, 0.0, 0.0), 5.0, (3.0, -1.0)),
        InterventionRecord(0.2),
        EventRecord(0.25, event),
        ProfileRecord(0.3, TrajectorySource.MODULAR, profile),
        WorldRecord(0.3, Pose2D(1.0, 0.0, 0.0), 5.0, None),
    )
    return RunLog(LogHeader("unit", {"scenario": {"reference": [[0, 0], [10, 0]]}}), records)


class TestRoundTrip:
    def test_structural_identity(self):
        log = sample_log()
        buffer = io.StringIO()
        write_log(log, buffer)
        parsed = read_log(io.StringIO(buffer.getvalue()))
        assert parsed == log

    def test_write_is_stable(self):
        log = sample_log()
        first, second = io.StringIO(), io.StringIO()
        write_log(log, first)
        write_log(read_log(io.StringIO(first.getvalue())), second)
        assert first.getvalue() == second.getvalue()

    def test_header_only_log(self):
        log = RunLog(LogHeader("empty", {}), ())
        buffer = io.StringIO()
        write_log(log, buffer)
        assert read_log(io.StringIO(buffer.getvalue())) == log

    def test_file_destination(self, tmp_path):
        target = tmp_path / "run.log"
        write_log(sample_log(), target)
        assert read_log(target) == sample_log()

    def test_stamps_have_six_decimals(self):
        buffer = io.StringIO()
        write_log(sample_log(), buffer)
        for line in buffer.getvalue().splitlines()[1:]:
            stamp_text = line.split(" ", 2)[1]
            assert len(stamp_text.split(".")[1]) == 6

    def test_quantized_stamps_round_trip_exactly(self):
        rng = np.random.default_rng(0)
        for value in rng.uniform(0.0, 1e5, size=5000):
            q = quantize_stamp(float(value))
            assert float(f"{q:.6f}") == q


class TestParseErrors:
    def header_line(self):
        buffer = io.StringIO()
        write_log(RunLog(LogHeader("x", {}), ()), buffer)
        return buffer.getvalue().strip()

    def test_unknown_tag_reports_line(self):
        text = self.header_line() + "\nBOGUS 0.000000 {}\n"
        with pytest.raises(ParseError) as err:
            read_log(io.StringIO(text))
        assert err.value.line == 2
        assert "BOGUS" in str(err.value)

    def test_missing_header(self):
        with pytest.raises(ParseError, match="HEADER"):
            read_log(io.StringIO("SC 0.000000 {\"sc\": 3}\n"))

    def test_empty_input(self):
        with pytest.raises(ParseError, match="missing header"):
            read_log(io.StringIO(""))

    def test_duplicate_header(self):
        text = self.header_line() + "\n" + self.header_line() + "\n"
        with pytest.raises(ParseError, match="duplicate"):
            read_log(io.StringIO(text))

    def test_version_mismatch(self):
        text = 'HEADER {"format_version": 99, "scenario": "x", "config": {}, "epoch": "t0"}\n'
        with pytest.raises(ParseError, match="format_version"):
            read_log(io.StringIO(text))

    def test_bad_stamp(self):
        text = self.header_line() + "\nSC zero {\"sc\": 3}\n"
        with pytest.raises(ParseError, match="stamp"):
            read_log(io.StringIO(text))

    def test_bad_json_payload(self):
        text = self.header_line() + "\nSC 0.000000 {nope}\n"
        with pytest.raises(ParseError) as err:
            read_log(io.StringIO(text))
        assert err.value.line == 2

    def test_speeds_length_mismatch(self):
        text = (
            self.header_line()
            + "\nMOD 0.000000 {\"poses\": [0,0,0, 1,0,0], \"speeds\": [5.0]}\n"
        )
        with pytest.raises(ParseError, match="speeds"):
            read_log(io.StringIO(text))

    def test_decreasing_stamps_rejected(self):
        text = (
            self.header_line()
            + "\nSC 1.000000 {\"sc\": 3}\nSC 0.500000 {\"sc\": 3}\n"
        )
        with pytest.raises(ParseError, match="non-decreasing"):
            read_log(io.StringIO(text))

    def test_bad_speed_class_value(self):
        text = self.header_line() + "\nSC 0.000000 {\"sc\": 7}\n"
        with pytest.raises(ParseError):
            read_log(io.StringIO(text))


class TestRunLogInvariants:
    def test_records_must_be_time_ordered(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            RunLog(
                LogHeader("x", {}),
                (SpeedClassRecord(1.0, SpeedClass.OK), SpeedClassRecord(0.5, SpeedClass.OK)),
            )

    def test_equal_stamps_allowed(self):
        RunLog(
            LogHeader("x", {}),
            (SpeedClassRecord(1.0, SpeedClass.OK), SpeedClassRecord(1.0, SpeedClass.OK)),
        )
