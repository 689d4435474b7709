import numpy as np
import pytest

from planwatch import (
    AlignedFrame,
    CornerCaseEvent,
    DetectionPipeline,
    DetectorConfig,
    EventKind,
    LateralProfile,
    Pose2D,
    ProfileMismatch,
    ResponseLevel,
    SpeedClass,
    SpeedClassSample,
    Trajectory,
    TrajectorySource,
    UnorderedInput,
    align_streams,
    response_policy,
    run_detection,
)

from conftest import poses_from_xy


def mod_plan(stamp, s0=None, length=41, offset=0.0, speed=5.0):
    s0 = 5.0 * stamp if s0 is None else s0
    xs = s0 + np.arange(float(length))
    poses = poses_from_xy([(x, offset) for x in xs])
    return Trajectory.modular(stamp, poses, [speed] * length)


def e2e_plan(stamp, s0=None, length=41, offset=0.0):
    s0 = 5.0 * stamp if s0 is None else s0
    xs = s0 + np.arange(float(length))
    return Trajectory.end_to_end(stamp, poses_from_xy([(x, offset) for x in xs]))


def e2e_pair(stamp, sc=SpeedClass.OK, **kwargs):
    return (e2e_plan(stamp, **kwargs), SpeedClassSample(stamp, sc))


def brute_align(mod_stamps, e2e_stamps, tolerance):
    """Enumeration oracle: latest not-newer partner within tolerance."""
    paired = {}
    for m in mod_stamps:
        eligible = [e for e in e2e_stamps if e <= m and m - e <= tolerance]
        if eligible:
            paired[m] = max(eligible)
    return paired


class TestAlignStreams:
    def test_fast_slow_rates_all_paired(self, cfg):
        mod = [mod_plan(round(k * 0.1, 6)) for k in range(50)]
        e2e = [e2e_pair(round(k * 0.5, 6)) for k in range(10)]
        result = align_streams(mod, e2e, cfg)
        oracle = brute_align([t.stamp for t in mod], [t.stamp for t, _ in e2e], 0.6)
        assert len(result.frames) == len(mod) == len(oracle)
        assert result.dropped == 0
        reuse = {}
        for frame in result.frames:
            assert frame.e2e_traj.stamp == oracle[frame.stamp]
            reuse[frame.e2e_traj.stamp] = reuse.get(frame.e2e_traj.stamp, 0) + 1
        assert max(reuse.values()) <= 5

    def test_gap_drops_stale_frames(self, cfg):
        # secondary silent for 2 s between t=1.0 and t=3.0
        e2e_stamps = [0.0, 0.5, 1.0, 3.0, 3.5]
        mod_stamps = [round(k * 0.1, 6) for k in range(40)]
        mod = [mod_plan(t) for t in mod_stamps]
        e2e = [e2e_pair(t) for t in e2e_stamps]
        result = align_streams(mod, e2e, cfg)
        oracle = brute_align(mod_stamps, e2e_stamps, cfg.align_tolerance)
        expected_dropped = [t for t in mod_stamps if t not in oracle]
        assert result.dropped == len(expected_dropped)
        # the samples in (gap_start + tolerance, gap_end) drop; the sample
        # exactly on the boundary goes either way by float rounding
        eps = 1e-9
        assert all(1.0 + 0.6 - eps < t < 3.0 for t in expected_dropped)
        for t in mod_stamps:
            if 1.0 + 0.6 + eps < t < 3.0:
                assert t in expected_dropped
        assert {f.stamp for f in result.frames} == set(oracle)

    def test_identical_stamps_zero_skew(self, cfg):
        stamps = [0.0, 0.5, 1.0]
        mod = [mod_plan(t) for t in stamps]
        e2e = [e2e_pair(t) for t in stamps]
        result = align_streams(mod, e2e, cfg)
        assert len(result.frames) == 3
        assert all(f.skew == 0.0 for f in result.frames)

    def test_causality_never_pairs_future(self, cfg):
        rng = np.random.default_rng(5)
        for _ in range(20):
            mod_stamps = np.cumsum(rng.uniform(0.05, 0.3, size=15))
            e2e_stamps = np.cumsum(rng.uniform(0.2, 1.0, size=6))
            mod = [mod_plan(float(t)) for t in mod_stamps]
            e2e = [e2e_pair(float(t)) for t in e2e_stamps]
            result = align_streams(mod, e2e, cfg)
            for frame in result.frames:
                assert frame.e2e_traj.stamp <= frame.stamp
            assert len(result.frames) + result.dropped == len(mod)

    def test_unordered_stream_rejected(self, cfg):
        mod = [mod_plan(1.0), mod_plan(0.5)]
        with pytest.raises(UnorderedInput):
            align_streams(mod, [e2e_pair(0.0)], cfg)


class TestResponsePolicy:
    def event(self, kind, score, trigger_sc=None):
        return CornerCaseEvent(kind, 1.0, score, (1.0, 1.0), trigger_sc=trigger_sc)

    def test_two_class_drop_is_mrm(self, cfg):
        action = response_policy(
            self.event(EventKind.LONGITUDINAL, 3.0, SpeedClass.BRAKE), cfg
        )
        assert action.level is ResponseLevel.MINIMAL_RISK_MANEUVER

    def test_single_drop_halves_speed(self, cfg):
        action = response_policy(
            self.event(EventKind.LONGITUDINAL, 1.0, SpeedClass.WARNING), cfg
        )
        assert action.level is ResponseLevel.SPEED_REDUCTION
        assert action.factor == 0.5

    def test_drop_to_brake_class_is_mrm_even_for_score_one(self, cfg):
        action = response_policy(
            self.event(EventKind.LONGITUDINAL, 1.0, SpeedClass.BRAKE), cfg
        )
        assert action.level is ResponseLevel.MINIMAL_RISK_MANEUVER

    def test_lateral_reduces_to_seventy_percent(self, cfg):
        action = response_policy(self.event(EventKind.LATERAL, 4.2), cfg)
        assert action.level is ResponseLevel.SPEED_REDUCTION
        assert action.factor == 0.7

    def test_monotone_in_severity(self, cfg):
        strengths = [
            response_policy(
                self.event(EventKind.LONGITUDINAL, score, SpeedClass.WARNING), cfg
            ).strength
            for score in (1.0, 2.0, 3.0)
        ]
        assert strengths == sorted(strengths)


class TestRunDetection:
    def frames(self, n, offset_fn=lambda t: 0.0, sc_fn=lambda t: SpeedClass.OK,
               speed_fn=lambda t: 5.0):
        out = []
        e2e_t, e2e = None, None
        for k in range(n):
            t = round(k * 0.1, 6)
            if e2e_t is None or t - e2e_t >= 0.5:
                e2e_t = t
                e2e = e2e_pair(t, sc_fn(t))
            mod = mod_plan(t, offset=offset_fn(t), speed=speed_fn(t))
            skew = max(t - e2e[0].stamp, t - e2e[1].stamp)
            out.append(AlignedFrame(t, mod, e2e[0], e2e[1], skew))
        return out

    def test_agreeing_streams_stay_quiet(self, straight_ref, cfg):
        result = run_detection(self.frames(60), straight_ref, cfg)
        assert result.events == []
        assert result.frames_processed == 60

    def test_sustained_offset_raises_lateral_event(self, straight_ref, cfg):
        result = run_detection(
            self.frames(60, offset_fn=lambda t: 1.5 if t >= 2.0 else 0.0),
            straight_ref, cfg,
        )
        kinds = [e.kind for e in result.events]
        assert EventKind.LATERAL in kinds
        lateral = next(e for e in result.events if e.kind is EventKind.LATERAL)
        assert lateral.response.level is ResponseLevel.SPEED_REDUCTION
        assert lateral.response.factor == 0.7

    def test_class_drop_raises_longitudinal_event(self, straight_ref, cfg):
        result = run_detection(
            self.frames(60, sc_fn=lambda t: SpeedClass.OK if t < 3.0 else SpeedClass.PEDESTRIAN),
            straight_ref, cfg,
        )
        longitudinal = [e for e in result.events if e.kind is EventKind.LONGITUDINAL]
        assert len(longitudinal) == 1
        assert longitudinal[0].score == 2.0
        assert longitudinal[0].response.level is ResponseLevel.MINIMAL_RISK_MANEUVER

    def test_events_sorted_by_stamp(self, straight_ref, cfg):
        result = run_detection(
            self.frames(
                80,
                offset_fn=lambda t: 2.0 if 4.0 <= t else 0.0,
                sc_fn=lambda t: SpeedClass.OK if t < 2.0 else SpeedClass.WARNING,
            ),
            straight_ref, cfg,
        )
        stamps = [e.stamp for e in result.events]
        assert stamps == sorted(stamps)
        assert len(result.events) >= 2

    def test_short_plan_skipped_not_fatal(self, straight_ref, cfg):
        frames = self.frames(10)
        stubby = Trajectory.modular(
            frames[4].stamp, poses_from_xy([(0, 0), (5, 0)]), [5.0, 5.0]
        )
        frames[4] = AlignedFrame(
            frames[4].stamp, stubby, frames[4].e2e_traj, frames[4].e2e_sc, frames[4].skew
        )
        result = run_detection(frames, straight_ref, cfg)
        assert result.frames_skipped == 1
        assert result.frames_processed == 9

    def test_window_mismatch_detected(self, straight_ref, cfg):
        # secondary plan computed 100 m further along the route than the
        # modular one: not comparable, must raise rather than mis-score
        t = 0.0
        frame = AlignedFrame(
            t, mod_plan(t, s0=0.0), e2e_plan(t, s0=100.0),
            SpeedClassSample(t, SpeedClass.OK), 0.0,
        )
        with pytest.raises(ProfileMismatch):
            run_detection([frame], straight_ref, cfg)

    def test_incremental_pipeline_matches_batch(self, straight_ref, cfg):
        frames = self.frames(
            90,
            offset_fn=lambda t: 1.8 if 3.0 <= t <= 6.0 else 0.0,
            sc_fn=lambda t: SpeedClass.OK if t < 5.0 else SpeedClass.WARNING,
        )
        batch = run_detection(frames, straight_ref, cfg)
        pipeline = DetectionPipeline(straight_ref, cfg)
        for frame in frames:
            pipeline.process_frame(frame)
        incremental = pipeline.finish()
        assert batch.lateral_scores == incremental.lateral_scores
        assert batch.smoothed == incremental.smoothed
        assert batch.longitudinal_samples == incremental.longitudinal_samples
        assert batch.events == incremental.events

    def test_online_push_interface_matches_prealigned(self, straight_ref, cfg):
        frames = self.frames(40, sc_fn=lambda t: SpeedClass.OK if t < 2.0 else SpeedClass.BRAKE)
        batch = run_detection(frames, straight_ref, cfg)
        online = DetectionPipeline(straight_ref, cfg)
        seen = set()
        for frame in frames:
            if frame.e2e_traj.stamp not in seen:
                seen.add(frame.e2e_traj.stamp)
                online.push_e2e(frame.e2e_traj, frame.e2e_sc)
            online.push_modular(frame.mod_traj)
        result = online.finish()
        assert result.events == batch.events
        assert online.modular_total == len(frames)
        assert online.dropped == 0

    def test_profile_overrides_bypass_geometry(self, straight_ref, cfg):
        frames = self.frames(3)
        overrides = {}
        stations = tuple(np.linspace(0.0, cfg.horizon, cfg.n_points))
        for frame in frames:
            overrides[(TrajectorySource.MODULAR, frame.stamp)] = LateralProfile(
                frame.stamp, (4.0,) * cfg.n_points, stations
            )
            overrides[(TrajectorySource.END_TO_END, frame.e2e_traj.stamp)] = LateralProfile(
                frame.e2e_traj.stamp, (0.0,) * cfg.n_points, stations
            )
        result = run_detection(frames, straight_ref, cfg, profile_overrides=overrides)
        assert all(s.lat_m == 4.0 for s in result.lateral_scores)
