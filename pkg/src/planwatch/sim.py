"""Deterministic scenario simulator producing the paired plan streams.

A kinematic bicycle ego follows the modular planner stub's latest plan.
The modular stub plans along the global reference, swerves around static
obstacles with a smooth lateral bump, and brakes for pedestrians it can
see (its perception range is a scripted scenario parameter, which is how
the bundled pedestrian scenario injects its fault). The end-to-end stub
follows the lane center through target points generated from the
reference and classifies the scene into a hazard class; it sees
pedestrians regardless of the modular stub's visibility limit but never
plans around obstacles. The two stubs run at different rates, which is
what exercises the zero-order-hold alignment downstream.

Everything is deterministic: identical scenario + config + seed gives a
bit-identical run log.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import PathTooShort
from .geometry import PathFrame, path_frame, point_at, project_point
from .pipeline import DetectionPipeline
from .runlog import (
    E2ePlanRecord,
    EventRecord,
    InterventionRecord,
    LogHeader,
    ModularPlanRecord,
    RunLog,
    SpeedClassRecord,
    WorldRecord,
    quantize_stamp,
)
from .scenarios import ObstacleRect, PedestrianScript, Scenario, scenario_to_dict
from .types import (
    DetectorConfig,
    Pose2D,
    ReferencePath,
    ResponseLevel,
    SpeedClass,
    SpeedClassSample,
    Trajectory,
    wrap_angle,
)

_EPS = 1e-9


@dataclass(frozen=True)
class SimParams:
    """Fixed physical and stub parameters of the desk-scale simulator."""

    wheelbase: float = 2.7            # m, bicycle model
    max_accel: float = 3.0            # m/s^2, tracking limit
    max_steer: float = 0.5            # rad, tracking limit
    lookahead: float = 4.0            # m, pure-pursuit target distance
    vehicle_halfwidth: float = 0.9    # m

    corridor_halfwidth: float = 1.0   # m, driving corridor around the route
    plan_spacing: float = 1.0         # m between stub plan points
    plan_margin: float = 10.0         # m planned beyond the detection horizon

    avoid_peak: float = 2.0           # m, default lateral bump peak
    avoid_clearance: float = 0.5      # m beyond the obstacle edge
    avoid_plateau_margin: float = 5.0 # m of full offset before/after the obstacle
    avoid_ramp: float = 15.0          # m of cosine ramp on each side

    brake_distance: float = 15.0      # m of linear speed ramp-down
    stop_margin: float = 2.0          # m short of the pedestrian
    predict_horizon: float = 3.0      # s of pedestrian forward prediction

    pedestrian_range: float = 15.0    # m -> class PEDESTRIAN
    warning_range: float = 20.0       # m -> class WARNING
    emergency_range: float = 5.0      # m -> class BRAKE
    ped_corridor_margin: float = 2.0  # m, "approaching the corridor" slack
    ped_radius: float = 0.3           # m

    target_spacing: float = 10.0      # m between target points
    target_count: int = 4


DEFAULT_SIM_PARAMS = SimParams()


@dataclass(frozen=True)
class PedestrianState:
    pose: Pose2D
    velocity: tuple[float, float]
    visibility_range: float


@dataclass(frozen=True)
class WorldState:
    time: float
    ego_pose: Pose2D
    ego_speed: float
    obstacles: tuple[ObstacleRect, ...] = ()
    pedestrian: PedestrianState | None = None

    def __post_init__(self):
        if self.ego_speed < 0.0:
            raise ValueError("ego speed must be >= 0")


def pedestrian_state(script: PedestrianScript | None, t: float) -> PedestrianState | None:
    if script is None:
        return None
    pos = script.position(t)
    if pos is None:
        return None
    heading = wrap_angle(math.atan2(script.vy, script.vx)) if (script.vx or script.vy) else 0.0
    return PedestrianState(
        Pose2D(pos[0], pos[1], heading), (script.vx, script.vy), script.visibility_range
    )


# ---------------------------------------------------------------------------
# vehicle model


def step_bicycle(
    state: tuple[Pose2D, float],
    control: tuple[float, float],
    dt: float,
    wheelbase: float = DEFAULT_SIM_PARAMS.wheelbase,
) -> tuple[Pose2D, float]:
    """One kinematic bicycle step: (pose, speed) under (accel, steer).

    x += v cos(h) dt; y += v sin(h) dt; h += (v / L) tan(steer) dt;
    v = max(0, v + accel dt). Speed never goes negative.
    """
    pose, speed = state
    accel, steer = control
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if not abs(steer) < math.pi / 2:
        raise ValueError("|steer| must be < pi/2")
    if wheelbase <= 0.0:
        raise ValueError("wheelbase must be > 0")
    x = pose.x + speed * math.cos(pose.heading) * dt
    y = pose.y + speed * math.sin(pose.heading) * dt
    heading = wrap_angle(pose.heading + speed / wheelbase * math.tan(steer) * dt)
    return Pose2D(x, y, heading), max(0.0, speed + accel * dt)


# ---------------------------------------------------------------------------
# target points


def target_points(
    ref: ReferencePath, ego: Pose2D, spacing: float, count: int
) -> list[Pose2D]:
    """Points on the reference at arc lengths s_ego + k * spacing, k=1..count,
    measured from the ego's projection onto the route."""
    if spacing <= 0.0 or count < 1:
        raise ValueError("spacing must be > 0 and count >= 1")
    s_ego = project_point(ref, ego).s
    if s_ego + count * spacing > ref.length + _EPS:
        raise PathTooShort(
            f"reference ends {ref.length - s_ego:.1f} m ahead of the ego; "
            f"{count * spacing:.1f} m of target points requested"
        )
    return [point_at(ref, s_ego + k * spacing) for k in range(1, count + 1)]


# ---------------------------------------------------------------------------
# corridor bookkeeping shared by the stubs


def _project_with_behind_guard(pf: PathFrame, xy: np.ndarray):
    """Project points and mark those lying behind the polyline start.

    A point behind the start clamps to s=0 with a possibly tiny |d|, which
    must not read as "on the corridor ahead"; such points are flagged.
    """
    s, d, _ = pf.project(xy)
    start = pf.xy[0]
    along0 = (xy[:, 0] - start[0]) * pf.dx[0] + (xy[:, 1] - start[1]) * pf.dy[0]
    behind = (s <= _EPS) & (along0 < 0.0)
    return s, d, behind


def _obstacle_span(pf: PathFrame, obstacle: ObstacleRect):
    """(s_interval, d_interval) of an obstacle's corners along a corridor,
    or None if the whole obstacle lies behind the corridor start."""
    s, d, behind = _project_with_behind_guard(pf, obstacle.corners())
    if behind.all():
        return None
    return (float(s.min()), float(s.max())), (float(d.min()), float(d.max()))


# ---------------------------------------------------------------------------
# modular planner stub


def _avoidance_offsets(
    stations: np.ndarray,
    ref_frame: PathFrame,
    obstacles: tuple[ObstacleRect, ...],
    params: SimParams,
) -> np.ndarray:
    offsets = np.zeros_like(stations)
    for obstacle in obstacles:
        span = _obstacle_span(ref_frame, obstacle)
        if span is None:
            continue
        (s_min, s_max), (d_min, d_max) = span
        if d_min > params.corridor_halfwidth or d_max < -params.corridor_halfwidth:
            continue  # does not intrude on the corridor
        # Pass on the side away from the obstacle's bulk, far enough to
        # clear its near edge by the configured margin.
        if (d_min + d_max) / 2.0 >= 0.0:
            side = -1.0
            required = -d_min + params.vehicle_halfwidth + params.avoid_clearance
        else:
            side = 1.0
            required = d_max + params.vehicle_halfwidth + params.avoid_clearance
        peak = max(params.avoid_peak, required)
        lo = s_min - params.avoid_plateau_margin
        hi = s_max + params.avoid_plateau_margin
        ramp = params.avoid_ramp
        shape = np.zeros_like(stations)
        inside = (stations >= lo) & (stations <= hi)
        shape[inside] = 1.0
        rising = (stations >= lo - ramp) & (stations < lo)
        shape[rising] = 0.5 * (1.0 + np.cos(np.pi * (lo - stations[rising]) / ramp))
        falling = (stations > hi) & (stations <= hi + ramp)
        shape[falling] = 0.5 * (1.0 + np.cos(np.pi * (stations[falling] - hi) / ramp))
        candidate = side * peak * shape
        offsets = np.where(np.abs(candidate) > np.abs(offsets), candidate, offsets)
    return offsets


def _pedestrian_hazard(
    ref_frame: PathFrame,
    ped: PedestrianState,
    ego_pose: Pose2D,
    s_ego: float,
    params: SimParams,
) -> float | None:
    """Station where the modular planner must stop for a visible pedestrian
    about to cross its corridor, or None."""
    dist = math.hypot(ped.pose.x - ego_pose.x, ped.pose.y - ego_pose.y)
    if dist > ped.visibility_range:
        return None  # out of perception range: planner is blind to it
    steps = np.linspace(0.0, params.predict_horizon, 7)
    xy = np.array(
        [[ped.pose.x + ped.velocity[0] * t, ped.pose.y + ped.velocity[1] * t] for t in steps]
    )
    s, d, behind = _project_with_behind_guard(ref_frame, xy)
    crossing = (
        ~behind
        & (np.abs(d) <= params.corridor_halfwidth + params.ped_radius + 0.2)
        & (s >= s_ego - 1.0)
    )
    if not crossing.any():
        return None
    s_now = float(s[0])
    return s_now - params.stop_margin


def modular_planner_stub(
    world: WorldState,
    ref: ReferencePath,
    cfg: DetectorConfig,
    params: SimParams = DEFAULT_SIM_PARAMS,
    cruise_speed: float = 5.0,
) -> Trajectory:
    """Plan of the primary system: follows the route, swerves around
    obstacles that intrude on the corridor, and ramps the target speed
    linearly to zero ahead of a visible crossing pedestrian.

    The plan covers cfg.horizon plus a margin of the route ahead of the
    ego's projection. Raises PathTooShort near the end of the route.
    """
    ref_frame = path_frame(ref)
    s_ego = project_point(ref, world.ego_pose).s
    span = cfg.horizon + params.plan_margin
    if s_ego + span > ref.length + _EPS:
        raise PathTooShort(
            f"route ends {ref.length - s_ego:.1f} m ahead; need {span:.1f} m to plan"
        )
    stations = s_ego + np.arange(0.0, span + params.plan_spacing / 2, params.plan_spacing)

    idx = ref_frame.cum.searchsorted(stations, side="right") - 1
    np.clip(idx, 0, len(ref_frame.seg_len) - 1, out=idx)
    frac = (stations - ref_frame.cum[idx]) / ref_frame.seg_len[idx]
    base_x = ref_frame.starts[idx, 0] + frac * ref_frame.dx[idx]
    base_y = ref_frame.starts[idx, 1] + frac * ref_frame.dy[idx]
    inv_len = 1.0 / np.sqrt(ref_frame.dx[idx] ** 2 + ref_frame.dy[idx] ** 2)
    tx = ref_frame.dx[idx] * inv_len
    ty = ref_frame.dy[idx] * inv_len

    offsets = _avoidance_offsets(stations, ref_frame, world.obstacles, params)
    # left normal of the tangent
    xs = base_x - offsets * ty
    ys = base_y + offsets * tx
    headings = np.arctan2(ty, tx)

    speeds = np.full_like(stations, cruise_speed)
    if world.pedestrian is not None:
        s_stop = _pedestrian_hazard(ref_frame, world.pedestrian, world.ego_pose, s_ego, params)
        if s_stop is not None:
            ramp = np.clip((s_stop - stations) / params.brake_distance, 0.0, 1.0)
            speeds = cruise_speed * ramp

    poses = [
        Pose2D(float(x), float(y), wrap_angle(float(h)))
        for x, y, h in zip(xs, ys, headings)
    ]
    return Trajectory.modular(world.time, poses, speeds.tolist())


# ---------------------------------------------------------------------------
# end-to-end stub


def e2e_stub(
    world: WorldState,
    targets: list[Pose2D],
    cfg: DetectorConfig,
    params: SimParams = DEFAULT_SIM_PARAMS,
) -> tuple[Trajectory, SpeedClassSample]:
    """Secondary system stub: centerline-hugging waypoints plus a hazard
    class.

    Waypoints densify the polyline through the given target points (which
    the harness derives from the route), so the output never swerves
    around obstacles. Hazards are assessed along the waypoint corridor:
    BRAKE for anything on the corridor within the emergency range,
    PEDESTRIAN for a pedestrian near the corridor within pedestrian range
    (regardless of the modular stub's visibility limit), WARNING for an
    intruding obstacle within warning range, OK otherwise.
    """
    del cfg
    xy = np.array([[p.x, p.y] for p in targets], dtype=float)
    if len(xy) < 2:
        raise ValueError("need at least 2 target points")
    steps = np.diff(xy, axis=0)
    cum = np.concatenate(([0.0], np.cumsum(np.hypot(steps[:, 0], steps[:, 1]))))
    corridor = PathFrame(xy, cum)
    stations = np.arange(0.0, cum[-1] + params.plan_spacing / 2, params.plan_spacing)
    stations[-1] = min(stations[-1], cum[-1])

    idx = cum.searchsorted(stations, side="right") - 1
    np.clip(idx, 0, len(cum) - 2, out=idx)
    frac = (stations - cum[idx]) / (cum[idx + 1] - cum[idx])
    pts = xy[idx] + frac[:, None] * (xy[idx + 1] - xy[idx])
    deltas = xy[idx + 1] - xy[idx]
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    poses = [
        Pose2D(float(x), float(y), wrap_angle(float(h)))
        for (x, y), h in zip(pts, headings)
    ]
    waypoints = Trajectory.end_to_end(world.time, poses)

    level = SpeedClass.OK
    for obstacle in world.obstacles:
        span = _obstacle_span(corridor, obstacle)
        if span is None:
            continue
        (s_min, _), (d_min, d_max) = span
        if d_min > params.corridor_halfwidth or d_max < -params.corridor_halfwidth:
            continue
        ahead = max(s_min, 0.0)
        if ahead <= params.emergency_range:
            level = min(level, SpeedClass.BRAKE)
        elif ahead <= params.warning_range:
            level = min(level, SpeedClass.WARNING)
    ped = world.pedestrian
    if ped is not None:
        s, d, behind = _project_with_behind_guard(
            corridor, np.array([[ped.pose.x, ped.pose.y]])
        )
        if not behind[0]:
            ahead, lateral = float(s[0]), abs(float(d[0]))
            on_corridor = lateral <= params.corridor_halfwidth + params.ped_radius
            near_corridor = lateral <= params.corridor_halfwidth + params.ped_corridor_margin
            if on_corridor and ahead <= params.emergency_range:
                level = min(level, SpeedClass.BRAKE)
            elif near_corridor and ahead <= params.pedestrian_range:
                level = min(level, SpeedClass.PEDESTRIAN)
    return waypoints, SpeedClassSample(world.time, SpeedClass(level))


# ---------------------------------------------------------------------------
# scenario loop


def _jittered(
    traj: Trajectory, rng: np.random.Generator, lat_amp: float, speed_amp: float
) -> Trajectory:
    """Zero-mean uniform jitter on stub outputs (positions, target speeds)."""
    if lat_amp <= 0.0 and speed_amp <= 0.0:
        return traj
    n = len(traj.points)
    xy = traj.xy.copy()
    if lat_amp > 0.0:
        xy += rng.uniform(-lat_amp, lat_amp, size=(n, 2))
    poses = [
        Pose2D(float(x), float(y), p.pose.heading)
        for (x, y), p in zip(xy, traj.points)
    ]
    if traj.source.value == "modular":
        speeds = np.array([p.target_speed for p in traj.points])
        if speed_amp > 0.0:
            speeds = np.maximum(speeds + rng.uniform(-speed_amp, speed_amp, size=n), 0.0)
        return Trajectory.modular(traj.stamp, poses, speeds.tolist())
    return Trajectory.end_to_end(traj.stamp, poses)


def _track_plan(
    plan: Trajectory | None,
    ego_pose: Pose2D,
    ego_speed: float,
    dt: float,
    params: SimParams,
    speed_scale: float,
) -> tuple[float, float]:
    """Pure-pursuit steering toward the plan plus speed tracking of the
    plan's first-point target speed."""
    if plan is None:
        return 0.0, 0.0
    idx = int(plan.arclengths.searchsorted(params.lookahead))
    idx = min(idx, len(plan.points) - 1)
    tx, ty = plan.xy[idx]
    dx, dy = tx - ego_pose.x, ty - ego_pose.y
    dist = math.hypot(dx, dy)
    v_cmd = plan.first_target_speed * speed_scale
    accel = max(-params.max_accel, min(params.max_accel, (v_cmd - ego_speed) / dt))
    if dist < 1e-6:
        return accel, 0.0
    alpha = wrap_angle(math.atan2(dy, dx) - ego_pose.heading)
    steer = math.atan2(2.0 * params.wheelbase * math.sin(alpha), dist)
    steer = max(-params.max_steer, min(params.max_steer, steer))
    return accel, steer


def run_scenario(
    sc: Scenario,
    cfg: DetectorConfig,
    params: SimParams = DEFAULT_SIM_PARAMS,
    *,
    closed_loop: bool = False,
) -> RunLog:
    """Run a scenario to a complete, deterministic run log.

    The loop is fixed-step: the world advances every sc.dt seconds, the
    modular stub replans at sc.mod_rate, the secondary stub at sc.e2e_rate,
    and the ego tracks the latest modular plan. Detection normally happens
    offline on the log (shadow mode); with closed_loop=True the detection
    pipeline runs inline and any event's response throttles the ego's
    commanded speed (events are then also logged as they are emitted).
    """
    rng = np.random.default_rng(sc.seed)
    ref = sc.reference
    records: list = []
    ego_pose, ego_speed = sc.initial_pose, sc.initial_speed
    plan: Trajectory | None = None
    pipeline = DetectionPipeline(ref, cfg) if closed_loop else None
    speed_scale = 1.0
    intervention_logged = False
    next_mod = 0.0
    next_e2e = 0.0
    steps = round(sc.duration / sc.dt)

    for k in range(steps):
        t = quantize_stamp(k * sc.dt)
        ped = pedestrian_state(sc.pedestrian, t)
        world = WorldState(t, ego_pose, ego_speed, sc.obstacles, ped)

        if t >= next_e2e - _EPS:
            s_ego = project_point(ref, ego_pose).s
            anchor = point_at(ref, s_ego)
            tps = [anchor] + target_points(ref, ego_pose, params.target_spacing,
                                           params.target_count)
            e2e_traj, sc_sample = e2e_stub(world, tps, cfg, params)
            e2e_traj = _jittered(e2e_traj, rng, sc.jitter_lat, 0.0)
            records.append(E2ePlanRecord(t, e2e_traj))
            records.append(SpeedClassRecord(t, sc_sample.sc))
            next_e2e += 1.0 / sc.e2e_rate
            if pipeline is not None:
                pipeline.push_e2e(e2e_traj, sc_sample)

        if t >= next_mod - _EPS:
            mod_traj = modular_planner_stub(world, ref, cfg, params, sc.cruise_speed)
            mod_traj = _jittered(mod_traj, rng, sc.jitter_lat, sc.jitter_speed)
            records.append(ModularPlanRecord(t, mod_traj))
            plan = mod_traj
            next_mod += 1.0 / sc.mod_rate
            if pipeline is not None:
                for event in pipeline.push_modular(mod_traj):
                    records.append(EventRecord(t, event))
                    if event.response.level is ResponseLevel.MINIMAL_RISK_MANEUVER:
                        speed_scale = 0.0
                    elif event.response.level is ResponseLevel.SPEED_REDUCTION:
                        speed_scale = min(speed_scale, event.response.factor)

        if (
            sc.intervention_time is not None
            and not intervention_logged
            and t >= sc.intervention_time - _EPS
        ):
            records.append(InterventionRecord(t))
            intervention_logged = True

        records.append(
            WorldRecord(
                t, ego_pose, ego_speed,
                (ped.pose.x, ped.pose.y) if ped is not None else None,
            )
        )

        control = _track_plan(plan, ego_pose, ego_speed, sc.dt, params, speed_scale)
        ego_pose, ego_speed = step_bicycle(
            (ego_pose, ego_speed), control, sc.dt, params.wheelbase
        )

    header = LogHeader(
        scenario=sc.name,
        config={
            "scenario": scenario_to_dict(sc),
            "detector": asdict(cfg),
            "sim": asdict(params),
            "closed_loop": closed_loop,
        },
    )
    return RunLog(header, tuple(records))
