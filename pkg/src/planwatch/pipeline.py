"""Stream alignment, combined detection, and graded response escalation.

The modular stream runs fast; the secondary stream is slower and is not
required to keep up, so each modular sample is paired with the latest
secondary sample that is not newer than it (zero-order hold), provided the
pair's stamps lie within the alignment tolerance. Modular samples with no
eligible partner are dropped and counted, never silently reused.

Detection consumes the aligned frames: per frame the two plans are reduced
to lateral profiles against the shared reference and scored, and the
(hazard class, first-point target speed) pair feeds the longitudinal
monitor. Events from both detectors are merged in stamp order and each is
annotated with a graded response.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import PathTooShort, ProfileMismatch, UnorderedInput
from .geometry import (
    PathFrame,
    path_frame,
    profile_offsets,
    profile_offsets_batch,
    resample_points,
)
from .lateral import LateralRunDetector
from .longitudinal import LongitudinalMonitor, LongitudinalSample
from .types import (
    CornerCaseEvent,
    DetectorConfig,
    EventKind,
    LateralProfile,
    LateralScore,
    PlanSample,
    ReferencePath,
    ResponseAction,
    SpeedClass,
    SpeedClassSample,
    Trajectory,
    TrajectorySource,
)

# Station slack beyond the zero-order-hold drift (speed x align_tolerance)
# tolerated between compared profile windows; catches profiles computed
# against different references or grossly different windows.
_STATION_GUARD_SLACK = 1.0


@dataclass(frozen=True)
class AlignedFrame:
    """One detection step: a modular plan with the held secondary outputs."""

    stamp: float  # modular sample time
    mod_traj: Trajectory
    e2e_traj: Trajectory
    e2e_sc: SpeedClassSample
    skew: float   # max pairwise stamp difference among the three sources

    def __post_init__(self):
        if self.stamp != self.mod_traj.stamp:
            raise ValueError("frame stamp must be the modular sample time")
        stamps = (self.mod_traj.stamp, self.e2e_traj.stamp, self.e2e_sc.stamp)
        worst = max(stamps) - min(stamps)
        if abs(self.skew - worst) > 1e-9:
            raise ValueError(f"skew {self.skew!r} does not match stamps {stamps}")


@dataclass(frozen=True)
class AlignmentResult:
    frames: tuple[AlignedFrame, ...]
    dropped: int         # modular samples with no eligible secondary partner
    modular_total: int   # paired + dropped

    def __post_init__(self):
        if len(self.frames) + self.dropped != self.modular_total:
            raise ValueError("frame accounting does not reconcile")


def _check_ordered(stamps, what: str) -> None:
    for a, b in zip(stamps, stamps[1:]):
        if b <= a:
            raise UnorderedInput(f"{what} stamps must be strictly increasing ({b!r} after {a!r})")


def align_streams(
    mod: Sequence[Trajectory],
    e2e: Sequence[tuple[Trajectory, SpeedClassSample]],
    cfg: DetectorConfig,
) -> AlignmentResult:
    """Pair each modular plan with the latest not-newer secondary output.

    Causality is strict: a modular sample never pairs with a secondary
    sample from its future. Eligibility additionally requires the frame's
    worst pairwise stamp skew to stay within cfg.align_tolerance.
    """
    _check_ordered([t.stamp for t in mod], "modular stream")
    _check_ordered([t.stamp for t, _ in e2e], "secondary stream")

    frames: list[AlignedFrame] = []
    dropped = 0
    j = -1
    for m in mod:
        while j + 1 < len(e2e) and e2e[j + 1][0].stamp <= m.stamp:
            j += 1
        if j < 0:
            dropped += 1
            continue
        traj, sc = e2e[j]
        stamps = (m.stamp, traj.stamp, sc.stamp)
        skew = max(stamps) - min(stamps)
        if skew > cfg.align_tolerance:
            dropped += 1
            continue
        frames.append(AlignedFrame(m.stamp, m, traj, sc, skew))
    return AlignmentResult(tuple(frames), dropped, len(mod))


def response_policy(event: CornerCaseEvent, cfg: DetectorConfig) -> ResponseAction:
    """Grade an event into a response.

    Longitudinal events escalate with the hazard drop: a drop of two or
    more classes, or any drop landing on the brake-immediately class,
    triggers the minimal risk maneuver; a single-class drop halves the
    speed. Lateral events reduce speed to 70%. Deterministic and monotone:
    a strictly worse score never yields a weaker action.

    The grading table is isolated here on purpose; cfg is accepted so a
    replacement policy can be configuration-driven.
    """
    del cfg
    if event.kind is EventKind.LONGITUDINAL:
        if event.score >= 2 or event.trigger_sc is SpeedClass.BRAKE:
            return ResponseAction.minimal_risk_maneuver()
        return ResponseAction.speed_reduction(0.5)
    return ResponseAction.speed_reduction(0.7)


@dataclass
class DetectionResult:
    """Outputs of one detection run over aligned frames."""

    lateral_scores: list[LateralScore] = field(default_factory=list)
    smoothed: list[float] = field(default_factory=list)
    longitudinal_samples: list[LongitudinalSample] = field(default_factory=list)
    events: list[CornerCaseEvent] = field(default_factory=list)
    frames_processed: int = 0
    frames_skipped: int = 0  # frames whose plans did not cover the horizon


ProfileOverrides = Mapping[tuple[TrajectorySource, float], LateralProfile]


class DetectionPipeline:
    """Incremental detection over the two plan streams.

    Drive it either with pre-aligned frames via process_frame(), or online
    with push_e2e()/push_modular(), which apply the same zero-order-hold
    pairing as align_streams. finish() flushes open runs and returns the
    final result with responses annotated. Single consumer; independent
    pipelines are fully independent.
    """

    def __init__(
        self,
        ref: ReferencePath,
        cfg: DetectorConfig,
        profile_overrides: ProfileOverrides | None = None,
    ):
        self._ref = ref
        self._ref_frame: PathFrame = path_frame(ref)
        self._cfg = cfg
        self._stations = np.linspace(0.0, cfg.horizon, cfg.n_points)
        self._overrides = profile_overrides or {}
        self._lateral = LateralRunDetector(cfg)
        self._long = LongitudinalMonitor(cfg)
        self.result = DetectionResult()
        self.dropped = 0
        self.modular_total = 0
        self._held_e2e: list[tuple[Trajectory, SpeedClassSample]] = []
        self._window_starts: deque[tuple[float, float]] = deque()
        self._prev_e2e_stamp: float | None = None
        self._prev_mod_stamp: float | None = None
        self._finished = False

    # -- online feeding ----------------------------------------------------

    def push_e2e(self, traj: Trajectory, sc: SpeedClassSample) -> None:
        if self._prev_e2e_stamp is not None and traj.stamp <= self._prev_e2e_stamp:
            raise UnorderedInput("secondary stream stamps must be strictly increasing")
        self._prev_e2e_stamp = traj.stamp
        self._held_e2e.append((traj, sc))

    def push_modular(self, traj: Trajectory) -> list[CornerCaseEvent]:
        """Pair a fresh modular plan with the latest not-newer secondary
        output and run one detection step. Returns events completed at this
        step. Pairing depends only on stamps, not on arrival interleaving."""
        if self._prev_mod_stamp is not None and traj.stamp <= self._prev_mod_stamp:
            raise UnorderedInput("modular stream stamps must be strictly increasing")
        self._prev_mod_stamp = traj.stamp
        self.modular_total += 1

        held = None
        for candidate in reversed(self._held_e2e):
            if candidate[0].stamp <= traj.stamp:
                held = candidate
                break
        # Older samples can never become the latest-not-newer pick again.
        if held is not None:
            while self._held_e2e[0] is not held:
                self._held_e2e.pop(0)
        if held is None:
            self.dropped += 1
            return []
        e2e_traj, sc = held
        stamps = (traj.stamp, e2e_traj.stamp, sc.stamp)
        skew = max(stamps) - min(stamps)
        if skew > self._cfg.align_tolerance:
            self.dropped += 1
            return []
        return self.process_frame(AlignedFrame(traj.stamp, traj, e2e_traj, sc, skew))

    # -- frame processing --------------------------------------------------

    def _offsets(self, traj: Trajectory) -> tuple[np.ndarray, float]:
        """Profile offsets and window-start station of one plan; same floats
        as geometry.lateral_profile."""
        override = self._overrides.get((traj.source, traj.stamp))
        if override is not None:
            return override.offsets_array, override.arclengths[0]
        pts = resample_points(traj.xy, traj.arclengths, self._stations, self._cfg.horizon)
        d, s = profile_offsets(self._ref_frame, pts)
        return d, float(s[0])

    def process_frame(self, frame: AlignedFrame) -> list[CornerCaseEvent]:
        try:
            d_mod, s0_mod = self._offsets(frame.mod_traj)
            d_e2e, s0_e2e = self._offsets(frame.e2e_traj)
        except PathTooShort:
            self.result.frames_skipped += 1
            return []
        return self._ingest(frame, (d_mod, s0_mod), (d_e2e, s0_e2e))

    def _ingest(self, frame, mod_offsets, e2e_offsets) -> list[CornerCaseEvent]:
        """Score one frame's precomputed profile offsets and step both
        detectors."""
        res = self.result
        d_mod, s0_mod = mod_offsets
        d_e2e, s0_e2e = e2e_offsets
        v = frame.mod_traj.first_target_speed
        # The held plan is at most align_tolerance old, so the two windows
        # may start apart by at most the distance the modular window start
        # moved over that span; anything above means the profiles were not
        # computed against comparable windows (e.g. different references).
        starts = self._window_starts
        starts.append((frame.stamp, s0_mod))
        edge = frame.stamp - self._cfg.align_tolerance
        while len(starts) > 1 and starts[1][0] <= edge:
            starts.popleft()
        drift = max(s0_mod - starts[0][1], 0.0)
        station_tol = drift + _STATION_GUARD_SLACK
        if abs(s0_mod - s0_e2e) > station_tol:
            raise ProfileMismatch(
                f"profile windows start {abs(s0_mod - s0_e2e):.3f} m apart "
                f"(tolerance {station_tol:.3f} m)"
            )
        diffs = np.abs(d_mod - d_e2e)
        m = float(diffs.max())
        avg = float(diffs.mean())
        score = LateralScore(frame.stamp, m, avg, self._cfg.w_m * m + self._cfg.w_avg * avg)
        res.lateral_scores.append(score)

        completed: list[CornerCaseEvent] = []
        lat_event = self._lateral.push(score)
        res.smoothed.append(self._lateral.last_smoothed)
        if lat_event is not None:
            completed.append(lat_event)

        sample, long_event = self._long.push(frame.e2e_sc, PlanSample(frame.stamp, v))
        res.longitudinal_samples.append(sample)
        if long_event is not None:
            completed.append(long_event)

        res.frames_processed += 1
        completed = [self._annotate(e) for e in completed]
        res.events.extend(completed)
        return completed

    def _annotate(self, event: CornerCaseEvent) -> CornerCaseEvent:
        return replace(event, response=response_policy(event, self._cfg))

    def finish(self) -> DetectionResult:
        """Flush open runs, order events by stamp, and return the result."""
        if not self._finished:
            self._finished = True
            for tail in (self._lateral.flush(), self._long.flush()):
                if tail is not None:
                    self.result.events.append(self._annotate(tail))
            self.result.events.sort(key=lambda e: (e.stamp, e.kind.value))
        return self.result


def run_detection(
    frames: Sequence[AlignedFrame],
    ref: ReferencePath,
    cfg: DetectorConfig,
    *,
    profile_overrides: ProfileOverrides | None = None,
) -> DetectionResult:
    """Run both detectors over aligned frames and merge their events.

    Frames whose plans do not cover the configured horizon are skipped and
    counted in the result, not fatal; other geometry errors propagate.

    Geometry is evaluated in chunks across frames (identical math to the
    per-frame path, batched to amortize array overhead); event logic stays
    strictly sequential.
    """
    pipeline = DetectionPipeline(ref, cfg, profile_overrides)
    pf = path_frame(ref)
    stations = pipeline._stations
    # Bound the footprint of batched projection temporaries.
    segs = max(len(ref.vertices) - 1, 1)
    chunk = int(min(1024, max(16, 2_000_000 // (cfg.n_points * segs))))

    for lo in range(0, len(frames), chunk):
        batch = frames[lo:lo + chunk]
        polylines = []
        slots: list[list] = []  # per frame: [mod payload or slot idx, e2e ...]
        for frame in batch:
            entry = []
            for traj in (frame.mod_traj, frame.e2e_traj):
                override = pipeline._overrides.get((traj.source, traj.stamp))
                if override is not None:
                    entry.append((override.offsets_array, override.arclengths[0]))
                else:
                    entry.append(len(polylines))
                    polylines.append((traj.xy, traj.arclengths))
            slots.append(entry)

        offsets, s0, covered = profile_offsets_batch(pf, polylines, stations, cfg.horizon)

        for frame, entry in zip(batch, slots):
            payloads = []
            short = False
            for part in entry:
                if isinstance(part, int):
                    if not covered[part]:
                        short = True
                        break
                    payloads.append((offsets[part], float(s0[part])))
                else:
                    payloads.append(part)
            if short:
                pipeline.result.frames_skipped += 1
                continue
            pipeline._ingest(frame, payloads[0], payloads[1])
    return pipeline.finish()
