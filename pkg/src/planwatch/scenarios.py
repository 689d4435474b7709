"""Scenario definitions and their declarative text format.

A scenario fixes everything a simulation run needs: the global reference
route, the initial ego state, static obstacles, an optional scripted
pedestrian, stream rates, and the seed for the optional output jitter.
Four scenarios are bundled; arbitrary ones load from a simple line-based
`key = value` text format (lists use commas, polylines use semicolons).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .types import Pose2D, ReferencePath, path_from_xy, wrap_angle


@dataclass(frozen=True)
class ObstacleRect:
    """Static rectangular obstacle: center, full side lengths, heading."""

    x: float
    y: float
    length: float
    width: float
    heading: float = 0.0

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0):
            raise ValueError("obstacle extents must be positive")

    def corners(self) -> np.ndarray:
        """(4, 2) corner coordinates in world frame."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        half_l, half_w = self.length / 2.0, self.width / 2.0
        local = np.array(
            [[half_l, half_w], [half_l, -half_w], [-half_l, -half_w], [-half_l, half_w]]
        )
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])


@dataclass(frozen=True)
class PedestrianScript:
    """Scripted pedestrian: spawns at spawn_time, then moves at constant
    velocity. The modular planner stub only perceives it within
    visibility_range of the ego (the secondary stub has no such limit)."""

    x: float
    y: float
    vx: float
    vy: float
    spawn_time: float
    visibility_range: float

    def __post_init__(self):
        if self.visibility_range <= 0.0:
            raise ValueError("visibility_range must be positive")

    def position(self, t: float) -> tuple[float, float] | None:
        """World position at time t, or None before spawn."""
        if t < self.spawn_time:
            return None
        dt = t - self.spawn_time
        return (self.x + self.vx * dt, self.y + self.vy * dt)


@dataclass(frozen=True)
class Scenario:
    name: str
    reference: ReferencePath
    initial_pose: Pose2D
    initial_speed: float
    cruise_speed: float
    duration: float
    obstacles: tuple[ObstacleRect, ...] = ()
    pedestrian: PedestrianScript | None = None
    dt: float = 0.05
    mod_rate: float = 10.0
    e2e_rate: float = 2.0
    seed: int = 0
    jitter_lat: float = 0.0    # uniform position jitter on stub waypoints, meters
    jitter_speed: float = 0.0  # uniform jitter on modular target speeds, m/s
    hazard_interval: tuple[float, float] | None = None
    intervention_time: float | None = None

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.dt <= 0.0 or self.mod_rate <= 0.0 or self.e2e_rate <= 0.0:
            raise ValueError("dt and stream rates must be positive")
        if self.jitter_lat < 0.0 or self.jitter_speed < 0.0:
            raise ValueError("jitter amplitudes must be >= 0")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.hazard_interval is not None:
            a, b = self.hazard_interval
            if b < a:
                raise ValueError("hazard_interval end must not precede its start")
            object.__setattr__(self, "hazard_interval", (float(a), float(b)))


# ---------------------------------------------------------------------------
# declarative text format


def _fmt(value: float) -> str:
    return repr(float(value))


def scenario_to_text(sc: Scenario) -> str:
    lines = [
        "# planwatch scenario",
        f"name = {sc.name}",
        f"duration = {_fmt(sc.duration)}",
        f"dt = {_fmt(sc.dt)}",
        f"mod_rate = {_fmt(sc.mod_rate)}",
        f"e2e_rate = {_fmt(sc.e2e_rate)}",
        f"seed = {sc.seed}",
        f"jitter_lat = {_fmt(sc.jitter_lat)}",
        f"jitter_speed = {_fmt(sc.jitter_speed)}",
        f"cruise_speed = {_fmt(sc.cruise_speed)}",
        "initial_ego = " + ",".join(
            _fmt(v) for v in (sc.initial_pose.x, sc.initial_pose.y,
                              sc.initial_pose.heading, sc.initial_speed)
        ),
        "reference = " + "; ".join(
            f"{_fmt(p.x)},{_fmt(p.y)}" for p in sc.reference.vertices
        ),
    ]
    for ob in sc.obstacles:
        lines.append(
            "obstacle = " + ",".join(_fmt(v) for v in (ob.x, ob.y, ob.length, ob.width, ob.heading))
        )
    if sc.pedestrian is not None:
        ped = sc.pedestrian
        lines.append(
            "pedestrian = " + ",".join(
                _fmt(v) for v in (ped.x, ped.y, ped.vx, ped.vy, ped.spawn_time, ped.visibility_range)
            )
        )
    if sc.hazard_interval is not None:
        lines.append("hazard_interval = " + ",".join(_fmt(v) for v in sc.hazard_interval))
    if sc.intervention_time is not None:
        lines.append(f"intervention_time = {_fmt(sc.intervention_time)}")
    return "\n".join(lines) + "\n"


def _floats(raw: str, expect: int, line_no: int, what: str) -> list[float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != expect:
        raise ParseError(f"{what} needs {expect} comma-separated values", line_no)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"{what}: {exc}", line_no) from None


def parse_scenario_text(text: str) -> Scenario:
    fields: dict = {"obstacles": []}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line_no)
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key == "name":
            fields["name"] = raw
        elif key in ("duration", "dt", "mod_rate", "e2e_rate", "cruise_speed",
                     "jitter_lat", "jitter_speed", "intervention_time"):
            fields[key] = _floats(raw, 1, line_no, key)[0]
        elif key == "seed":
            try:
                fields["seed"] = int(raw)
            except ValueError:
                raise ParseError(f"seed must be an integer, got {raw!r}", line_no) from None
        elif key == "initial_ego":
            x, y, heading, speed = _floats(raw, 4, line_no, "initial_ego")
            fields["initial_pose"] = Pose2D(x, y, wrap_angle(heading))
            fields["initial_speed"] = speed
        elif key == "reference":
            pts = []
            for chunk in raw.split(";"):
                pts.append(tuple(_floats(chunk, 2, line_no, "reference vertex")))
            if len(pts) < 2:
                raise ParseError("reference needs at least 2 vertices", line_no)
            fields["reference"] = path_from_xy(pts)
        elif key == "obstacle":
            fields["obstacles"].append(ObstacleRect(*_floats(raw, 5, line_no, "obstacle")))
        elif key == "pedestrian":
            fields["pedestrian"] = PedestrianScript(*_floats(raw, 6, line_no, "pedestrian"))
        elif key == "hazard_interval":
            a, b = _floats(raw, 2, line_no, "hazard_interval")
            fields["hazard_interval"] = (a, b)
        else:
            raise ParseError(f"unknown scenario key {key!r}", line_no)

    for required in ("name", "reference", "initial_pose", "duration", "cruise_speed"):
        if required not in fields:
            raise ParseError(f"missing required scenario key {required!r}")
    fields["obstacles"] = tuple(fields["obstacles"])
    try:
        return Scenario(**fields)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"invalid scenario: {exc}") from None


def scenario_to_dict(sc: Scenario) -> dict:
    """JSON-able snapshot of a scenario (used in log headers)."""
    out = {
        "name": sc.name,
        "reference": [[p.x, p.y] for p in sc.reference.vertices],
        "initial_ego": [sc.initial_pose.x, sc.initial_pose.y,
                        sc.initial_pose.heading, sc.initial_speed],
        "cruise_speed": sc.cruise_speed,
        "duration": sc.duration,
        "dt": sc.dt,
        "mod_rate": sc.mod_rate,
        "e2e_rate": sc.e2e_rate,
        "seed": sc.seed,
        "jitter_lat": sc.jitter_lat,
        "jitter_speed": sc.jitter_speed,
        "obstacles": [[o.x, o.y, o.length, o.width, o.heading] for o in sc.obstacles],
    }
    if sc.pedestrian is not None:
        ped = sc.pedestrian
        out["pedestrian"] = [ped.x, ped.y, ped.vx, ped.vy, ped.spawn_time, ped.visibility_range]
    if sc.hazard_interval is not None:
        out["hazard_interval"] = list(sc.hazard_interval)
    if sc.intervention_time is not None:
        out["intervention_time"] = sc.intervention_time
    return out


# ---------------------------------------------------------------------------
# bundled scenarios
#
# The bundled runs carry a little seeded output jitter so nominal logs show
# realistic nonzero divergence; identical seeds still give bit-identical
# logs.


def _straight_reference(length: float = 300.0) -> ReferencePath:
    return path_from_xy([(0.0, 0.0), (length, 0.0)])


def _curve_reference() -> ReferencePath:
    """Straight lead-in, a 50 degree left arc of radius 150 m, straight exit."""
    pts = [(0.0, 0.0), (60.0, 0.0)]
    radius = 150.0
    for deg in range(1, 51):
        a = math.radians(deg)
        pts.append((60.0 + radius * math.sin(a), radius * (1.0 - math.cos(a))))
    exit_heading = math.radians(50.0)
    tail_x, tail_y = pts[-1]
    for step in (20.0, 40.0, 60.0):
        pts.append((tail_x + step * math.cos(exit_heading),
                    tail_y + step * math.sin(exit_heading)))
    return path_from_xy(pts)


def nominal_straight() -> Scenario:
    return Scenario(
        name="nominal_straight",
        reference=_straight_reference(),
        initial_pose=Pose2D(0.0, 0.0, 0.0),
        initial_speed=5.0,
        cruise_speed=5.0,
        duration=20.0,
        seed=1,
        jitter_lat=0.03,
        jitter_speed=0.02,
    )


def nominal_curve() -> Scenario:
    return Scenario(
        name="nominal_curve",
        reference=_curve_reference(),
        initial_pose=Pose2D(0.0, 0.0, 0.0),
        initial_speed=5.0,
        cruise_speed=5.0,
        duration=20.0,
        seed=2,
        jitter_lat=0.03,
        jitter_speed=0.02,
    )


def overtake_parked_vehicle() -> Scenario:
    """A parked vehicle intrudes on the route; the modular planner swerves
    around it while the secondary stub keeps to the middle of the lane."""
    return Scenario(
        name="overtake_parked_vehicle",
        reference=_straight_reference(),
        initial_pose=Pose2D(0.0, 0.0, 0.0),
        initial_speed=5.0,
        cruise_speed=5.0,
        duration=24.0,
        obstacles=(ObstacleRect(80.0, -0.6, 4.5, 1.8, 0.0),),
        seed=3,
        jitter_lat=0.03,
        jitter_speed=0.02,
        hazard_interval=(11.0, 17.0),
    )


def pedestrian_crossing() -> Scenario:
    """A pedestrian crosses from a barely visible angle; the modular planner
    cannot see it in time while the secondary stub flags the hazard."""
    return Scenario(
        name="pedestrian_crossing",
        reference=_straight_reference(),
        initial_pose=Pose2D(0.0, 0.0, 0.0),
        initial_speed=5.0,
        cruise_speed=5.0,
        duration=20.0,
        pedestrian=PedestrianScript(
            x=50.0, y=-6.0, vx=0.0, vy=1.2, spawn_time=4.0, visibility_range=4.0
        ),
        seed=4,
        jitter_lat=0.03,
        jitter_speed=0.0,
        hazard_interval=(6.5, 11.0),
        intervention_time=9.5,
    )


BUNDLED = {
    "nominal_straight": nominal_straight,
    "nominal_curve": nominal_curve,
    "overtake_parked_vehicle": overtake_parked_vehicle,
    "pedestrian_crossing": pedestrian_crossing,
}


def bundled_names() -> list[str]:
    return sorted(BUNDLED)


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario by bundled name or from a scenario file."""
    name = str(source)
    if name in BUNDLED:
        return BUNDLED[name]()
    path = Path(source)
    if not path.exists():
        raise ParseError(
            f"{name!r} is neither a bundled scenario ({', '.join(bundled_names())}) "
            f"nor an existing file"
        )
    return parse_scenario_text(path.read_text(encoding="utf-8"))
