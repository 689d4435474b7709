"""Lateral divergence scoring and run-based lateral event detection.

Per timestamp, the two systems' lateral profiles are reduced to three
numbers: the maximum absolute per-point difference, the mean absolute
difference (robust against single outliers), and their weighted sum, which
is the thresholded quantity. Detection then smooths the weighted score
with a trailing (causal) moving average and emits one event per maximal
run of smoothed scores at or above the threshold, so a single maneuver
does not produce an event storm.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .errors import ProfileMismatch, UnorderedInput
from .types import (
    CornerCaseEvent,
    DetectorConfig,
    EventKind,
    LateralProfile,
    LateralScore,
)

DEFAULT_STATION_TOLERANCE = 1e-6


def _check_pair(
    mod: LateralProfile, e2e: LateralProfile, station_tolerance: float | None
) -> None:
    if len(mod) != len(e2e):
        raise ProfileMismatch(f"profile lengths differ: {len(mod)} vs {len(e2e)}")
    if station_tolerance is not None:
        gap = float(np.max(np.abs(mod.arclengths_array - e2e.arclengths_array)))
        if gap > station_tolerance:
            raise ProfileMismatch(
                f"profile stations differ by up to {gap:.6g} m "
                f"(tolerance {station_tolerance:.6g} m)"
            )


def lat_max(
    mod: LateralProfile,
    e2e: LateralProfile,
    *,
    station_tolerance: float | None = DEFAULT_STATION_TOLERANCE,
) -> float:
    """Maximum absolute difference of lateral deviations over matched points."""
    _check_pair(mod, e2e, station_tolerance)
    return float(np.max(np.abs(mod.offsets_array - e2e.offsets_array)))


def lat_avg(
    mod: LateralProfile,
    e2e: LateralProfile,
    *,
    station_tolerance: float | None = DEFAULT_STATION_TOLERANCE,
) -> float:
    """Mean absolute difference of lateral deviations over matched points."""
    _check_pair(mod, e2e, station_tolerance)
    return float(np.mean(np.abs(mod.offsets_array - e2e.offsets_array)))


def lat_score(
    mod: LateralProfile,
    e2e: LateralProfile,
    cfg: DetectorConfig,
    *,
    station_tolerance: float | None = DEFAULT_STATION_TOLERANCE,
) -> LateralScore:
    """Weighted lateral divergence at one timestamp: w_m * max + w_avg * mean.

    The score carries the modular profile's stamp.
    """
    _check_pair(mod, e2e, station_tolerance)
    diffs = np.abs(mod.offsets_array - e2e.offsets_array)
    m = float(np.max(diffs))
    avg = float(np.mean(diffs))
    return LateralScore(mod.stamp, m, avg, cfg.w_m * m + cfg.w_avg * avg)


class LateralRunDetector:
    """Incremental run detector over a stream of lateral scores.

    Feeds one score at a time; smooths with a trailing moving average over
    cfg.smoothing_window seconds (closed window [t - W, t]); a completed
    event is returned when a run of smoothed scores >= cfg.lat_threshold
    ends. flush() closes and returns an open run at end of stream.

    Single writer per instance; independent instances are independent.
    """

    def __init__(self, cfg: DetectorConfig):
        self._cfg = cfg
        self._window: deque[tuple[float, float]] = deque()
        self._prev_stamp: float | None = None
        self._run_start: float | None = None
        self._run_last: float = 0.0
        self._run_peak: float = 0.0
        self.last_smoothed: float | None = None

    def push(self, score: LateralScore) -> CornerCaseEvent | None:
        if self._prev_stamp is not None and score.stamp <= self._prev_stamp:
            raise UnorderedInput(
                f"lateral score stamps must be strictly increasing "
                f"({score.stamp!r} after {self._prev_stamp!r})"
            )
        self._prev_stamp = score.stamp

        window = self._window
        window.append((score.stamp, score.lat))
        cutoff = score.stamp - self._cfg.smoothing_window
        while window[0][0] < cutoff:
            window.popleft()
        smoothed = math.fsum(v for _, v in window) / len(window)
        self.last_smoothed = smoothed

        if smoothed >= self._cfg.lat_threshold:
            if self._run_start is None:
                self._run_start = score.stamp
                self._run_peak = smoothed
            else:
                self._run_peak = max(self._run_peak, smoothed)
            self._run_last = score.stamp
            return None
        return self._close_run()

    def flush(self) -> CornerCaseEvent | None:
        """Close an open run at end of stream."""
        return self._close_run()

    def _close_run(self) -> CornerCaseEvent | None:
        if self._run_start is None:
            return None
        event = CornerCaseEvent(
            kind=EventKind.LATERAL,
            stamp=self._run_start,
            score=self._run_peak,
            window=(self._run_start, self._run_last),
        )
        self._run_start = None
        return event


def detect_lateral(scores, cfg: DetectorConfig) -> list[CornerCaseEvent]:
    """Run the lateral event policy over a time-ordered score sequence.

    One event per maximal contiguous run of smoothed scores at or above
    cfg.lat_threshold; event stamp is the first crossing, the window spans
    the run, and the score is the run's smoothed peak.
    """
    detector = LateralRunDetector(cfg)
    events = []
    for score in scores:
        event = detector.push(score)
        if event is not None:
            events.append(event)
    tail = detector.flush()
    if tail is not None:
        events.append(tail)
    return events
