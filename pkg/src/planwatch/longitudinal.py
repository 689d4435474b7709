"""Longitudinal disagreement monitor.

Flags timestamps where the secondary system's hazard class worsens (its
backward difference is negative) while the modular target speed does not
decrease, i.e. the secondary system demands deceleration that the primary
system is not delivering. Derivatives are one-step backward differences on
the aligned sample grid; only their signs matter, so the sampling rate does
not change detections except at run boundaries. A class improvement never
triggers anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AlignmentSkew, UnorderedInput
from .types import (
    CornerCaseEvent,
    DetectorConfig,
    EventKind,
    PlanSample,
    SpeedClass,
    SpeedClassSample,
)


def delta_sc(curr: SpeedClass, prev: SpeedClass) -> int:
    """Backward difference of the hazard class over one aligned sample."""
    return int(curr) - int(prev)


def delta_v(curr: float, prev: float, deadband: float) -> float:
    """Backward difference of the target speed with a symmetric deadband.

    Differences of magnitude <= deadband collapse to exactly 0 so that
    planner jitter cannot masquerade as braking (or as acceleration).
    """
    if deadband < 0.0:
        raise ValueError(f"deadband must be >= 0, got {deadband!r}")
    raw = curr - prev
    return 0.0 if abs(raw) <= deadband else raw


def long_flag(dsc: int, dv: float) -> int:
    """1 iff the class worsened (dsc < 0) and the speed did not drop (dv >= 0)."""
    return 1 if dsc < 0 and dv >= 0.0 else 0


@dataclass(frozen=True)
class LongitudinalSample:
    """Per-step longitudinal state: inputs, backward differences, and flag."""

    stamp: float
    sc: SpeedClass
    v: float
    delta_sc: int
    delta_v: float
    long_flag: int

    def __post_init__(self):
        if not math.isfinite(self.stamp):
            raise ValueError("LongitudinalSample.stamp must be finite")
        expected = long_flag(self.delta_sc, self.delta_v)
        if self.long_flag != expected:
            raise ValueError(
                f"long_flag {self.long_flag} inconsistent with "
                f"delta_sc={self.delta_sc}, delta_v={self.delta_v}"
            )


class LongitudinalMonitor:
    """Incremental monitor over aligned (hazard class, target speed) pairs.

    Pure step function plus the previous sample as explicit state; one
    owner per stream. An event triggers once the flag has held for
    cfg.long_persistence consecutive samples and is returned when the
    flagged run ends (flush() closes a run left open at end of stream).
    The event's score is the magnitude of the class drop at the trigger
    step and its window spans the whole flagged run.
    """

    def __init__(self, cfg: DetectorConfig):
        self._cfg = cfg
        self._prev: LongitudinalSample | None = None
        self._run_len = 0
        self._run_start = 0.0
        self._run_last = 0.0
        self._trigger: tuple[float, int, SpeedClass] | None = None

    def push(
        self, sc_sample: SpeedClassSample, plan: PlanSample
    ) -> tuple[LongitudinalSample, CornerCaseEvent | None]:
        skew = abs(sc_sample.stamp - plan.stamp)
        if skew > self._cfg.align_tolerance:
            raise AlignmentSkew(
                f"class/speed pair skew {skew:.6f} s exceeds "
                f"tolerance {self._cfg.align_tolerance:.6f} s"
            )
        stamp = plan.stamp
        prev = self._prev
        if prev is not None and stamp <= prev.stamp:
            raise UnorderedInput(
                f"pair stamps must be strictly increasing ({stamp!r} after {prev.stamp!r})"
            )

        if prev is None:
            sample = LongitudinalSample(stamp, sc_sample.sc, plan.v, 0, 0.0, 0)
        else:
            dsc = delta_sc(sc_sample.sc, prev.sc)
            dv = delta_v(plan.v, prev.v, self._cfg.v_deadband)
            sample = LongitudinalSample(stamp, sc_sample.sc, plan.v, dsc, dv, long_flag(dsc, dv))
        self._prev = sample

        event = None
        if sample.long_flag:
            if self._run_len == 0:
                self._run_start = stamp
            self._run_len += 1
            self._run_last = stamp
            if self._run_len == self._cfg.long_persistence:
                self._trigger = (stamp, abs(sample.delta_sc), sample.sc)
        else:
            event = self._close_run()
        return sample, event

    def flush(self) -> CornerCaseEvent | None:
        return self._close_run()

    def _close_run(self) -> CornerCaseEvent | None:
        event = None
        if self._trigger is not None:
            trigger_stamp, drop, sc = self._trigger
            event = CornerCaseEvent(
                kind=EventKind.LONGITUDINAL,
                stamp=trigger_stamp,
                score=float(drop),
                window=(self._run_start, self._run_last),
                trigger_sc=sc,
            )
        self._run_len = 0
        self._trigger = None
        return event


def detect_longitudinal(pairs, cfg: DetectorConfig) -> list[CornerCaseEvent]:
    """Run the longitudinal policy over time-ordered aligned
    (SpeedClassSample, PlanSample) pairs."""
    monitor = LongitudinalMonitor(cfg)
    events = []
    for sc_sample, plan in pairs:
        _, event = monitor.push(sc_sample, plan)
        if event is not None:
            events.append(event)
    tail = monitor.flush()
    if tail is not None:
        events.append(tail)
    return events
