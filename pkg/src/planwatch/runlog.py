"""Run-log persistence: a line-delimited, self-describing text format.

Every line is `TAG <stamp> <json payload>`: a record-type tag, the stamp in
seconds with six decimal digits, and the type-specific fields as a JSON
object (trajectories as flat coordinate lists, speeds in m/s, classes as
integers). The header line comes first and carries the format version, the
scenario name, a config snapshot, and a note fixing the time epoch. Logs
are diff-friendly debugging artifacts: values round-trip exactly as long
as stamps are quantized to microseconds (`quantize_stamp`), which the
simulator guarantees for everything it writes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

from .errors import ParseError
from .types import (
    CornerCaseEvent,
    EventKind,
    LateralProfile,
    Pose2D,
    ResponseAction,
    ResponseLevel,
    SpeedClass,
    SpeedClassSample,
    Trajectory,
    TrajectorySource,
)

FORMAT_VERSION = 1

_HEADER_TAG = "HEADER"


def quantize_stamp(t: float) -> float:
    """Round a stamp to whole microseconds so its 6-digit text form
    round-trips bit-exactly."""
    return round(float(t), 6)


@dataclass(frozen=True)
class LogHeader:
    scenario: str
    config: dict
    epoch: str = "t=0 at scenario start (simulation clock)"
    format_version: int = FORMAT_VERSION


@dataclass(frozen=True)
class ModularPlanRecord:
    stamp: float
    trajectory: Trajectory


@dataclass(frozen=True)
class E2ePlanRecord:
    stamp: float
    trajectory: Trajectory


@dataclass(frozen=True)
class SpeedClassRecord:
    stamp: float
    sc: SpeedClass


@dataclass(frozen=True)
class WorldRecord:
    """Ground-truth snapshot: ego pose+speed and pedestrian position."""

    stamp: float
    ego_pose: Pose2D
    ego_speed: float
    pedestrian: tuple[float, float] | None = None


@dataclass(frozen=True)
class InterventionRecord:
    """Marker: the (scripted) safety driver takes over here."""

    stamp: float


@dataclass(frozen=True)
class EventRecord:
    """A detection event. The record stamp is when the event was emitted;
    the embedded event keeps its own (earlier or equal) trigger stamp."""

    stamp: float
    event: CornerCaseEvent


@dataclass(frozen=True)
class ProfileRecord:
    """Optional precomputed lateral profile for one system at one stamp.

    Logs that carry these let replay bypass the path-geometry step, e.g.
    when offsets were measured by some other means.
    """

    stamp: float
    source: TrajectorySource
    profile: LateralProfile


Record = Union[
    ModularPlanRecord,
    E2ePlanRecord,
    SpeedClassRecord,
    WorldRecord,
    InterventionRecord,
    EventRecord,
    ProfileRecord,
]


@dataclass(frozen=True)
class RunLog:
    header: LogHeader
    records: tuple[Record, ...]

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        for a, b in zip(records, records[1:]):
            if b.stamp < a.stamp:
                raise ValueError("records must be non-decreasing in stamp")


# ---------------------------------------------------------------------------
# serialization


def _flat_poses(traj: Trajectory) -> list[float]:
    out: list[float] = []
    for p in traj.points:
        out.extend((p.pose.x, p.pose.y, p.pose.heading))
    return out


def _pose_list(flat: list[float], line_no: int) -> list[Pose2D]:
    if len(flat) % 3 != 0 or not flat:
        raise ParseError("pose list length must be a positive multiple of 3", line_no)
    try:
        return [Pose2D(*flat[i:i + 3]) for i in range(0, len(flat), 3)]
    except ValueError as exc:
        raise ParseError(str(exc), line_no) from None


def _event_payload(event: CornerCaseEvent) -> dict:
    payload = {
        "kind": event.kind.value,
        "stamp": event.stamp,
        "score": event.score,
        "window": list(event.window),
        "response": {"level": event.response.level.value},
    }
    if event.response.factor is not None:
        payload["response"]["factor"] = event.response.factor
    if event.trigger_sc is not None:
        payload["trigger_sc"] = int(event.trigger_sc)
    return payload


def _event_from_payload(payload: dict, line_no: int) -> CornerCaseEvent:
    try:
        response = ResponseAction(
            ResponseLevel(payload["response"]["level"]),
            payload["response"].get("factor"),
        )
        trigger = payload.get("trigger_sc")
        return CornerCaseEvent(
            kind=EventKind(payload["kind"]),
            stamp=float(payload["stamp"]),
            score=float(payload["score"]),
            window=tuple(payload["window"]),
            response=response,
            trigger_sc=SpeedClass(trigger) if trigger is not None else None,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad event payload: {exc}", line_no) from None


def format_record(record: Record) -> str:
    if isinstance(record, ModularPlanRecord):
        tag, payload = "MOD", {
            "poses": _flat_poses(record.trajectory),
            "speeds": [p.target_speed for p in record.trajectory.points],
        }
    elif isinstance(record, E2ePlanRecord):
        tag, payload = "E2E", {"poses": _flat_poses(record.trajectory)}
    elif isinstance(record, SpeedClassRecord):
        tag, payload = "SC", {"sc": int(record.sc)}
    elif isinstance(record, WorldRecord):
        tag, payload = "WORLD", {
            "ego": [record.ego_pose.x, record.ego_pose.y,
                    record.ego_pose.heading, record.ego_speed],
            "ped": list(record.pedestrian) if record.pedestrian is not None else None,
        }
    elif isinstance(record, InterventionRecord):
        tag, payload = "INTERVENTION", {}
    elif isinstance(record, EventRecord):
        tag, payload = "EVENT", _event_payload(record.event)
    elif isinstance(record, ProfileRecord):
        tag, payload = "PROFILE", {
            "system": record.source.value,
            "offsets": list(record.profile.offsets),
            "stations": list(record.profile.arclengths),
        }
    else:
        raise TypeError(f"unknown record type: {type(record).__name__}")
    return f"{tag} {record.stamp:.6f} {json.dumps(payload)}"


def _parse_record(tag: str, stamp: float, payload: dict, line_no: int) -> Record:
    try:
        if tag == "MOD":
            poses = _pose_list(payload["poses"], line_no)
            speeds = payload["speeds"]
            if len(speeds) != len(poses):
                raise ParseError("speeds and poses lengths differ", line_no)
            return ModularPlanRecord(stamp, Trajectory.modular(stamp, poses, speeds))
        if tag == "E2E":
            poses = _pose_list(payload["poses"], line_no)
            return E2ePlanRecord(stamp, Trajectory.end_to_end(stamp, poses))
        if tag == "SC":
            return SpeedClassRecord(stamp, SpeedClass(payload["sc"]))
        if tag == "WORLD":
            ego = payload["ego"]
            if len(ego) != 4:
                raise ParseError("WORLD ego needs [x, y, heading, speed]", line_no)
            ped = payload.get("ped")
            return WorldRecord(
                stamp, Pose2D(*ego[:3]), float(ego[3]),
                tuple(ped) if ped is not None else None,
            )
        if tag == "INTERVENTION":
            return InterventionRecord(stamp)
        if tag == "EVENT":
            return EventRecord(stamp, _event_from_payload(payload, line_no))
        if tag == "PROFILE":
            source = TrajectorySource(payload["system"])
            profile = LateralProfile(
                stamp, tuple(payload["offsets"]), tuple(payload["stations"])
            )
            return ProfileRecord(stamp, source, profile)
    except ParseError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad {tag} payload: {exc}", line_no) from None
    raise ParseError(f"unknown record tag {tag!r}", line_no)


def write_log(log: RunLog, destination: str | Path | IO[str]) -> None:
    """Write a run log as line-delimited text; `-` means stdout."""
    header_line = _HEADER_TAG + " " + json.dumps(
        {
            "format_version": log.header.format_version,
            "scenario": log.header.scenario,
            "config": log.header.config,
            "epoch": log.header.epoch,
        }
    )
    lines = [header_line]
    lines.extend(format_record(r) for r in log.records)
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
        return
    if str(destination) == "-":
        import sys

        sys.stdout.write(text)
        return
    Path(destination).write_text(text, encoding="utf-8")


def _parse_lines(lines: Iterable[str]) -> RunLog:
    header: LogHeader | None = None
    records: list[Record] = []
    prev_stamp = None
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(" ", 2)
        tag = parts[0]
        if header is None:
            if tag != _HEADER_TAG:
                raise ParseError(f"expected {_HEADER_TAG} first, got {tag!r}", line_no)
            if len(parts) < 2:
                raise ParseError("header payload missing", line_no)
            try:
                payload = json.loads(line[len(_HEADER_TAG) + 1:])
                version = payload["format_version"]
                if version != FORMAT_VERSION:
                    raise ParseError(
                        f"unsupported format_version {version!r} "
                        f"(supported: {FORMAT_VERSION})", line_no,
                    )
                header = LogHeader(
                    scenario=payload["scenario"],
                    config=payload["config"],
                    epoch=payload["epoch"],
                    format_version=version,
                )
            except ParseError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"bad header: {exc}", line_no) from None
            continue
        if tag == _HEADER_TAG:
            raise ParseError("duplicate header", line_no)
        if len(parts) != 3:
            raise ParseError("expected 'TAG stamp {json}'", line_no)
        try:
            stamp = float(parts[1])
        except ValueError:
            raise ParseError(f"bad stamp {parts[1]!r}", line_no) from None
        try:
            payload = json.loads(parts[2])
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad payload: {exc}", line_no) from None
        record = _parse_record(tag, stamp, payload, line_no)
        if prev_stamp is not None and stamp < prev_stamp:
            raise ParseError("records must be non-decreasing in stamp", line_no)
        prev_stamp = stamp
        records.append(record)
    if header is None:
        raise ParseError("empty input: missing header")
    return RunLog(header, tuple(records))


def read_log(source: str | Path | IO[str]) -> RunLog:
    """Parse a run log; `-` means stdin. Raises ParseError with the line
    number on malformed input."""
    if hasattr(source, "read"):
        return _parse_lines(source.read().splitlines())
    if str(source) == "-":
        import sys

        return _parse_lines(sys.stdin.read().splitlines())
    return _parse_lines(Path(source).read_text(encoding="utf-8").splitlines())
