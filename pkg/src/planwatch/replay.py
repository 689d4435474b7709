"""Offline replay of run logs through the detection pipeline, metrics
export, and threshold calibration.

Replay reconstructs the two plan streams from a log, aligns them, runs
both detectors, and returns the events plus a per-frame metrics table with
exactly the quantities needed to plot a run: stamp, the three lateral
scores, the smoothed score, hazard class, modular target speed, the
longitudinal flag, and event markers. Replay output is a pure function of
(log bytes, config): replaying the same log twice gives identical bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .errors import CalibrationError, ParseError
from .pipeline import AlignmentResult, DetectionResult, align_streams, run_detection
from .runlog import (
    E2ePlanRecord,
    ModularPlanRecord,
    ProfileRecord,
    RunLog,
    SpeedClassRecord,
)
from .types import (
    CornerCaseEvent,
    DetectorConfig,
    ReferencePath,
    SpeedClassSample,
    TrajectorySource,
    path_from_xy,
)

_STAMP_MATCH = 1e-9

METRIC_COLUMNS = (
    "stamp", "lat_m", "lat_avg", "lat", "lat_smooth", "sc", "v", "long_flag", "event",
)


@dataclass
class ReplayResult:
    events: list[CornerCaseEvent]
    rows: list[dict]
    modular_total: int = 0
    paired: int = 0
    dropped: int = 0
    skipped: int = 0  # aligned frames whose plans did not cover the horizon

    @property
    def reconciled(self) -> bool:
        """paired + dropped == modular samples and rows + skipped == paired."""
        return (
            self.paired + self.dropped == self.modular_total
            and len(self.rows) + self.skipped == self.paired
        )


def reference_from_log(log: RunLog) -> ReferencePath:
    """The reference route stored in the log header's config snapshot."""
    try:
        vertices = log.header.config["scenario"]["reference"]
        return path_from_xy(vertices)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"log header lacks a usable scenario reference: {exc}") from None


def _streams(log: RunLog):
    """Rebuild the modular and secondary streams plus profile overrides."""
    mod = [r.trajectory for r in log.records if isinstance(r, ModularPlanRecord)]
    plans = [r for r in log.records if isinstance(r, E2ePlanRecord)]
    classes = [r for r in log.records if isinstance(r, SpeedClassRecord)]
    if len(plans) != len(classes):
        raise ParseError(
            f"log has {len(plans)} secondary plans but {len(classes)} speed classes"
        )
    e2e = []
    for plan, sc in zip(plans, classes):
        if abs(plan.stamp - sc.stamp) > _STAMP_MATCH:
            raise ParseError(
                f"secondary plan at {plan.stamp!r} has no speed class at the same stamp"
            )
        e2e.append((plan.trajectory, SpeedClassSample(sc.stamp, sc.sc)))
    overrides = {
        (r.source, r.stamp): r.profile
        for r in log.records
        if isinstance(r, ProfileRecord)
    }
    return mod, e2e, overrides


def _event_markers(events: list[CornerCaseEvent]) -> dict[float, str]:
    markers: dict[float, str] = {}
    for event in events:
        tag = event.kind.value
        markers[event.stamp] = (
            f"{markers[event.stamp]}+{tag}" if event.stamp in markers else tag
        )
    return markers


def _rows(detection: DetectionResult, events: list[CornerCaseEvent]) -> list[dict]:
    markers = _event_markers(events)
    rows = []
    for score, smooth, sample in zip(
        detection.lateral_scores, detection.smoothed, detection.longitudinal_samples
    ):
        rows.append(
            {
                "stamp": score.stamp,
                "lat_m": score.lat_m,
                "lat_avg": score.lat_avg,
                "lat": score.lat,
                "lat_smooth": smooth,
                "sc": int(sample.sc),
                "v": sample.v,
                "long_flag": sample.long_flag,
                "event": markers.get(score.stamp, ""),
            }
        )
    return rows


def replay(log: RunLog, cfg: DetectorConfig) -> ReplayResult:
    """Run the full detection pipeline over a recorded log."""
    mod, e2e, overrides = _streams(log)
    alignment: AlignmentResult = align_streams(mod, e2e, cfg)
    detection = run_detection(
        alignment.frames, reference_from_log(log), cfg,
        profile_overrides=overrides or None,
    )
    return ReplayResult(
        events=detection.events,
        rows=_rows(detection, detection.events),
        modular_total=alignment.modular_total,
        paired=len(alignment.frames),
        dropped=alignment.dropped,
        skipped=detection.frames_skipped,
    )


def write_metrics_csv(rows: list[dict], destination: str | Path | IO[str]) -> None:
    """Comma-separated metrics, header row, one row per processed frame."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=METRIC_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buffer.getvalue()
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# calibration

SUGGESTION_MARGIN = 1.5  # suggested threshold = margin x nominal peak


@dataclass
class CalibrationReport:
    """Threshold guidance extracted from a nominal (corner-case-free) run."""

    frames: int
    max_smoothed_lat: float
    p99_smoothed_lat: float
    suggested_lat_threshold: float
    max_abs_dv: float        # largest raw step-to-step target-speed change
    std_dv: float
    suggested_v_deadband: float
    threshold_crossings: int # frames whose smoothed score met the current threshold
    events: int
    warnings: list[str] = field(default_factory=list)

    @property
    def nominal(self) -> bool:
        return not self.warnings


def calibrate(log: RunLog, cfg: DetectorConfig) -> CalibrationReport:
    """Report nominal divergence statistics and a suggested lateral
    threshold (margin x the nominal smoothed peak) plus the observed
    target-speed jitter for deadband selection.

    Emits a warning (suggestion still included) when the input does not
    look nominal. Raises CalibrationError when the log yields no frames.
    """
    result = replay(log, cfg)
    if not result.rows:
        raise CalibrationError("log contains no usable aligned frames")
    smoothed = np.array([row["lat_smooth"] for row in result.rows])
    speeds = np.array([row["v"] for row in result.rows])
    raw_dv = np.abs(np.diff(speeds)) if len(speeds) > 1 else np.zeros(1)
    crossings = int(np.count_nonzero(smoothed >= cfg.lat_threshold))

    warnings = []
    if result.events or crossings:
        warnings.append(
            f"input does not look nominal: {len(result.events)} event(s), "
            f"{crossings} frame(s) at or above the current threshold"
        )
    return CalibrationReport(
        frames=len(result.rows),
        max_smoothed_lat=float(smoothed.max()),
        p99_smoothed_lat=float(np.percentile(smoothed, 99)),
        suggested_lat_threshold=SUGGESTION_MARGIN * float(smoothed.max()),
        max_abs_dv=float(raw_dv.max()),
        std_dv=float(raw_dv.std()),
        suggested_v_deadband=1.5 * float(raw_dv.max()),
        threshold_crossings=crossings,
        events=len(result.events),
        warnings=warnings,
    )


def format_calibration_report(report: CalibrationReport) -> str:
    lines = [
        f"frames analyzed:          {report.frames}",
        f"max smoothed lat:         {report.max_smoothed_lat:.4f} m",
        f"99th pct smoothed lat:    {report.p99_smoothed_lat:.4f} m",
        f"suggested lat_threshold:  {report.suggested_lat_threshold:.4f} m "
        f"({SUGGESTION_MARGIN:g} x nominal peak)",
        f"max |dv| per step:        {report.max_abs_dv:.4f} m/s",
        f"dv std:                   {report.std_dv:.4f} m/s",
        f"suggested v_deadband:     {report.suggested_v_deadband:.4f} m/s",
    ]
    for warning in report.warnings:
        lines.append(f"WARNING: {warning}")
    return "\n".join(lines)
