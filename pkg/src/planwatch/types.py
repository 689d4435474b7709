"""Core domain types: poses, trajectories, plan samples, speed classes, events, config.

Units are SI throughout: meters, seconds, m/s, radians. Timestamps are
seconds from an arbitrary monotonic epoch (logs declare their epoch in
the header). All types are immutable values after construction and
constructors reject invariant violations instead of clamping.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError

_TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the canonical heading range (-pi, pi]."""
    wrapped = math.remainder(theta, _TWO_PI)
    if wrapped <= -math.pi:
        wrapped += _TWO_PI
    return wrapped


def _require_finite(owner: str, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{owner}.{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Pose2D:
    """Planar pose. Heading is radians in (-pi, pi], measured from +x."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        _require_finite("Pose2D", x=self.x, y=self.y, heading=self.heading)
        if not (-math.pi < self.heading <= math.pi):
            raise ValueError(
                f"Pose2D.heading must lie in (-pi, pi], got {self.heading!r}"
            )


class TrajectorySource(enum.Enum):
    MODULAR = "modular"
    END_TO_END = "e2e"


@dataclass(frozen=True)
class TrajectoryPoint:
    """One planned point: a pose plus an optional target speed."""

    pose: Pose2D
    target_speed: float | None = None

    def __post_init__(self):
        if self.target_speed is not None:
            _require_finite("TrajectoryPoint", target_speed=self.target_speed)
            if self.target_speed < 0.0:
                raise ValueError(
                    f"target_speed must be >= 0, got {self.target_speed!r}"
                )


@dataclass(frozen=True)
class Trajectory:
    """A timestamped plan: an ordered polyline of points.

    Modular plans carry a target speed on every point; end-to-end plans
    never do (the longitudinal intent of the secondary system arrives
    separately as a `SpeedClassSample`).
    """

    stamp: float
    points: tuple[TrajectoryPoint, ...]
    source: TrajectorySource

    def __post_init__(self):
        _require_finite("Trajectory", stamp=self.stamp)
        points = tuple(self.points)
        object.__setattr__(self, "points", points)
        if len(points) < 2:
            raise ValueError("Trajectory needs at least 2 points")
        has_speed = [p.target_speed is not None for p in points]
        if self.source is TrajectorySource.MODULAR and not all(has_speed):
            raise ValueError("modular trajectories must carry target_speed on every point")
        if self.source is TrajectorySource.END_TO_END and any(has_speed):
            raise ValueError("end-to-end trajectories must not carry target speeds")
        # Validation needs the arrays anyway; seed the cached properties so
        # downstream geometry never rebuilds them.
        xy = np.array([[p.pose.x, p.pose.y] for p in points], dtype=float)
        xy.setflags(write=False)
        steps = np.diff(xy, axis=0)
        lengths = np.hypot(steps[:, 0], steps[:, 1])
        if not (lengths > 0.0).all():
            raise ValueError("consecutive trajectory points must not coincide")
        cum = np.concatenate(([0.0], np.cumsum(lengths)))
        cum.setflags(write=False)
        self.__dict__["xy"] = xy
        self.__dict__["arclengths"] = cum

    @classmethod
    def modular(cls, stamp: float, poses, speeds) -> "Trajectory":
        points = tuple(
            TrajectoryPoint(p, float(v)) for p, v in zip(poses, speeds, strict=True)
        )
        return cls(stamp, points, TrajectorySource.MODULAR)

    @classmethod
    def end_to_end(cls, stamp: float, poses) -> "Trajectory":
        return cls(stamp, tuple(TrajectoryPoint(p) for p in poses), TrajectorySource.END_TO_END)

    @cached_property
    def xy(self) -> np.ndarray:
        """(N, 2) array of point positions; read-only."""
        arr = np.array([[p.pose.x, p.pose.y] for p in self.points], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def arclengths(self) -> np.ndarray:
        """Cumulative arc length per point, starting at 0; read-only."""
        steps = np.diff(self.xy, axis=0)
        cum = np.concatenate(([0.0], np.cumsum(np.hypot(steps[:, 0], steps[:, 1]))))
        cum.setflags(write=False)
        return cum

    @property
    def first_target_speed(self) -> float | None:
        return self.points[0].target_speed


@dataclass(frozen=True)
class ReferencePath:
    """The shared global route both systems plan against.

    A polyline of at least two non-coincident vertices. Cumulative arc
    length starts at 0 and is strictly increasing.
    """

    vertices: tuple[Pose2D, ...]

    def __post_init__(self):
        vertices = tuple(self.vertices)
        object.__setattr__(self, "vertices", vertices)
        if len(vertices) < 2:
            raise ValueError("ReferencePath needs at least 2 vertices")
        steps = np.diff(self.xy, axis=0)
        if not (np.hypot(steps[:, 0], steps[:, 1]) > 0.0).all():
            raise ValueError("consecutive reference vertices must not coincide")

    @cached_property
    def xy(self) -> np.ndarray:
        arr = np.array([[p.x, p.y] for p in self.vertices], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def cumulative_arclength(self) -> np.ndarray:
        steps = np.diff(self.xy, axis=0)
        cum = np.concatenate(([0.0], np.cumsum(np.hypot(steps[:, 0], steps[:, 1]))))
        cum.setflags(write=False)
        return cum

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])


def path_from_xy(points) -> ReferencePath:
    """Build a ReferencePath from (x, y) pairs, deriving vertex headings
    from the outgoing segment (incoming for the last vertex)."""
    xy = np.asarray(points, dtype=float)
    if xy.ndim != 2 or xy.shape[0] < 2 or xy.shape[1] != 2:
        raise ValueError("need at least 2 (x, y) pairs")
    deltas = np.diff(xy, axis=0)
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    headings = np.append(headings, headings[-1])
    return ReferencePath(
        tuple(
            Pose2D(float(x), float(y), wrap_angle(float(h)))
            for (x, y), h in zip(xy, headings)
        )
    )


@dataclass(frozen=True)
class LateralProfile:
    """Signed lateral offsets of one trajectory from the reference path.

    `offsets[i]` is the Frenet offset (meters, positive left of the path
    direction) of trajectory point i; `arclengths[i]` is the matched
    arc-length station on the reference where the comparison sits.
    """

    stamp: float
    offsets: tuple[float, ...]
    arclengths: tuple[float, ...]

    def __post_init__(self):
        _require_finite("LateralProfile", stamp=self.stamp)
        offsets = tuple(float(v) for v in self.offsets)
        stations = tuple(float(v) for v in self.arclengths)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "arclengths", stations)
        if len(offsets) != len(stations) or not offsets:
            raise ValueError("offsets and arclengths must have equal length n >= 1")
        if not all(math.isfinite(v) for v in offsets + stations):
            raise ValueError("profile values must be finite")
        if any(b <= a for a, b in zip(stations, stations[1:])):
            raise ValueError("arclengths must be strictly increasing")

    def __len__(self) -> int:
        return len(self.offsets)

    @cached_property
    def offsets_array(self) -> np.ndarray:
        arr = np.array(self.offsets, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def arclengths_array(self) -> np.ndarray:
        arr = np.array(self.arclengths, dtype=float)
        arr.setflags(write=False)
        return arr


class SpeedClass(enum.IntEnum):
    """Ordinal hazard class of the secondary system; lower value = higher hazard."""

    BRAKE = 0       # brake immediately
    PEDESTRIAN = 1  # braking required, pedestrian nearby
    WARNING = 2     # braking may be needed soon
    OK = 3          # no immediate danger

    @property
    def hazard_rank(self) -> int:
        """Higher rank means more hazardous (total order, inverse of value)."""
        return 3 - int(self)


@dataclass(frozen=True)
class SpeedClassSample:
    stamp: float
    sc: SpeedClass

    def __post_init__(self):
        _require_finite("SpeedClassSample", stamp=self.stamp)
        if not isinstance(self.sc, SpeedClass):
            object.__setattr__(self, "sc", SpeedClass(self.sc))


@dataclass(frozen=True)
class PlanSample:
    """Target speed of the modular plan at one timestamp."""

    stamp: float
    v: float

    def __post_init__(self):
        _require_finite("PlanSample", stamp=self.stamp, v=self.v)
        if self.v < 0.0:
            raise ValueError(f"PlanSample.v must be >= 0, got {self.v!r}")


@dataclass(frozen=True)
class LateralScore:
    """Lateral disagreement at one timestamp: max, mean, and weighted sum."""

    stamp: float
    lat_m: float
    lat_avg: float
    lat: float

    def __post_init__(self):
        _require_finite(
            "LateralScore", stamp=self.stamp, lat_m=self.lat_m,
            lat_avg=self.lat_avg, lat=self.lat,
        )
        if self.lat_avg < 0.0 or self.lat < 0.0:
            raise ValueError("lateral scores must be nonnegative")
        # 1e-12 slack: a float mean of equal values can exceed the max by an ulp.
        if self.lat_avg > self.lat_m * (1.0 + 1e-12) + 1e-12:
            raise ValueError("lat_m must be >= lat_avg")


class EventKind(enum.Enum):
    LATERAL = "lateral"
    LONGITUDINAL = "longitudinal"


class ResponseLevel(enum.Enum):
    NONE = "none"
    SPEED_REDUCTION = "speed_reduction"
    MINIMAL_RISK_MANEUVER = "minimal_risk_maneuver"


@dataclass(frozen=True)
class ResponseAction:
    """Graded response: nothing, a speed reduction by a factor, or a
    minimal risk maneuver."""

    level: ResponseLevel = ResponseLevel.NONE
    factor: float | None = None

    def __post_init__(self):
        if self.level is ResponseLevel.SPEED_REDUCTION:
            if self.factor is None or not (0.0 < self.factor < 1.0):
                raise ValueError("speed reduction factor must be strictly in (0, 1)")
        elif self.factor is not None:
            raise ValueError(f"factor only applies to speed reductions, got {self.level}")

    @classmethod
    def none(cls) -> "ResponseAction":
        return cls(ResponseLevel.NONE)

    @classmethod
    def speed_reduction(cls, factor: float) -> "ResponseAction":
        return cls(ResponseLevel.SPEED_REDUCTION, factor)

    @classmethod
    def minimal_risk_maneuver(cls) -> "ResponseAction":
        return cls(ResponseLevel.MINIMAL_RISK_MANEUVER)

    @property
    def strength(self) -> float:
        """Scalar severity for monotonicity checks: NONE < any speed
        reduction (smaller factor = stronger) < minimal risk maneuver."""
        if self.level is ResponseLevel.NONE:
            return 0.0
        if self.level is ResponseLevel.SPEED_REDUCTION:
            return 2.0 - self.factor
        return 3.0


@dataclass(frozen=True)
class CornerCaseEvent:
    """One detected disagreement between the two systems.

    `score` is meters for lateral events (peak smoothed divergence) and
    the magnitude of the class drop for longitudinal events.
    `trigger_sc` records the hazard class in force at the trigger step of
    longitudinal events (None for lateral ones).
    """

    kind: EventKind
    stamp: float
    score: float
    window: tuple[float, float]
    response: ResponseAction = field(default_factory=ResponseAction.none)
    trigger_sc: SpeedClass | None = None

    def __post_init__(self):
        start, end = self.window
        _require_finite(
            "CornerCaseEvent", stamp=self.stamp, score=self.score, start=start, end=end
        )
        object.__setattr__(self, "window", (float(start), float(end)))
        if not (start <= self.stamp <= end):
            raise ValueError("event window must contain the event stamp")
        if self.score < 0.0:
            raise ValueError("event score must be >= 0")


@dataclass(frozen=True)
class DetectorConfig:
    """Tunables of the disagreement detectors.

    The defaults are deliberately conservative and, apart from the unit
    weights, are not calibrated against any particular vehicle: use the
    calibrate tool on a nominal recording to pick `lat_threshold` and
    `v_deadband` for a deployment.
    """

    n_points: int = 20            # compared points per profile
    w_m: float = 1.0              # weight of the max lateral difference
    w_avg: float = 1.0            # weight of the mean lateral difference
    lat_threshold: float = 1.0    # meters of smoothed weighted divergence
    long_persistence: int = 1     # consecutive flagged samples before an event
    v_deadband: float = 0.05      # m/s of target-speed change treated as zero
    align_tolerance: float = 0.6  # max seconds between paired stream samples
    smoothing_window: float = 0.5 # trailing moving-average window, seconds
    horizon: float = 30.0         # compared arc length of each plan, meters

    def __post_init__(self):
        _validate(self)


def _validate(cfg: DetectorConfig) -> None:
    if not isinstance(cfg.n_points, int) or cfg.n_points < 2:
        raise ConfigError("n_points", f"must be an integer >= 2, got {cfg.n_points!r}")
    for name in ("w_m", "w_avg", "lat_threshold", "v_deadband",
                 "align_tolerance", "smoothing_window", "horizon"):
        value = getattr(cfg, name)
        if not math.isfinite(value):
            raise ConfigError(name, f"must be finite, got {value!r}")
    if cfg.w_m < 0.0:
        raise ConfigError("w_m", f"must be >= 0, got {cfg.w_m!r}")
    if cfg.w_avg < 0.0:
        raise ConfigError("w_avg", f"must be >= 0, got {cfg.w_avg!r}")
    if cfg.w_m == 0.0 and cfg.w_avg == 0.0:
        raise ConfigError("weights", "w_m and w_avg must not both be zero")
    if cfg.lat_threshold <= 0.0:
        raise ConfigError("lat_threshold", f"must be > 0, got {cfg.lat_threshold!r}")
    if not isinstance(cfg.long_persistence, int) or cfg.long_persistence < 1:
        raise ConfigError(
            "long_persistence", f"must be an integer >= 1, got {cfg.long_persistence!r}"
        )
    if cfg.v_deadband < 0.0:
        raise ConfigError("v_deadband", f"must be >= 0, got {cfg.v_deadband!r}")
    if cfg.align_tolerance <= 0.0:
        raise ConfigError("align_tolerance", f"must be > 0, got {cfg.align_tolerance!r}")
    if cfg.smoothing_window < 0.0:
        raise ConfigError("smoothing_window", f"must be >= 0, got {cfg.smoothing_window!r}")
    if cfg.horizon <= 0.0:
        raise ConfigError("horizon", f"must be > 0, got {cfg.horizon!r}")


def validate_config(cfg: DetectorConfig) -> DetectorConfig:
    """Return cfg unchanged if every invariant holds, else raise ConfigError
    naming the violated field."""
    _validate(cfg)
    return cfg
