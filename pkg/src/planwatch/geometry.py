"""Path geometry: arc-length resampling, point-to-polyline projection, and
extraction of matched lateral profiles.

Conventions:

- A polyline is walked by arc length; interpolation is linear (splines are
  deliberately avoided so every value is checkable against a hand walk).
- Projection returns the global minimum-distance foot point, clamped to the
  polyline endpoints. Ties between equidistant segments resolve to the
  smallest arc length.
- The signed offset `d` is positive to the left of the local path direction
  (cross product of segment direction and the foot-to-point vector).

The module keeps two layers: typed functions over Pose2D/Trajectory values,
and array kernels (`PathFrame`, `profile_offsets`) that the detection
pipeline uses on its hot path. Both compute the same floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonMonotonicProjection, PathTooShort
from .types import (
    DetectorConfig,
    LateralProfile,
    Pose2D,
    ReferencePath,
    Trajectory,
    wrap_angle,
)

# Slack for "arc length >= horizon" checks; absorbs accumulation error when a
# polyline is built from many short segments.
_ARC_EPS = 1e-9


class PathFrame:
    """Precomputed segment arrays of a polyline, reused across projections."""

    __slots__ = ("xy", "cum", "starts", "dx", "dy", "inv_len2", "seg_len", "length")

    def __init__(self, xy: np.ndarray, cum: np.ndarray):
        self.xy = xy
        self.cum = cum
        deltas = xy[1:] - xy[:-1]
        self.starts = xy[:-1]
        self.dx = np.ascontiguousarray(deltas[:, 0])
        self.dy = np.ascontiguousarray(deltas[:, 1])
        len2 = self.dx * self.dx + self.dy * self.dy
        self.inv_len2 = 1.0 / len2
        self.seg_len = np.diff(cum)
        self.length = float(cum[-1])

    def project(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project pts (N, 2) onto the polyline; returns (s, d, segment).

        np.argmin keeps the first (smallest-s) segment on exact distance
        ties; foot points clamp into segments, so projections beyond the
        ends clamp to s=0 or s=L.
        """
        px = pts[:, 0:1]
        py = pts[:, 1:2]
        relx = px - self.starts[:, 0]            # (N, S)
        rely = py - self.starts[:, 1]
        t = (relx * self.dx + rely * self.dy) * self.inv_len2
        np.maximum(t, 0.0, out=t)
        np.minimum(t, 1.0, out=t)
        fx = relx - t * self.dx                  # point minus foot
        fy = rely - t * self.dy
        dist2 = fx * fx + fy * fy
        seg = dist2.argmin(axis=1)
        rows = np.arange(pts.shape[0])
        t_best = t[rows, seg]
        fx_best = fx[rows, seg]
        fy_best = fy[rows, seg]
        s = self.cum[seg] + t_best * self.seg_len[seg]
        dist = np.sqrt(dist2[rows, seg])
        cross = self.dx[seg] * fy_best - self.dy[seg] * fx_best
        d = np.sign(cross) * dist
        return s, d, seg


def path_frame(ref: ReferencePath) -> PathFrame:
    """Segment cache of a reference path, memoized on the instance."""
    frame = ref.__dict__.get("_path_frame")
    if frame is None:
        frame = PathFrame(ref.xy, ref.cumulative_arclength)
        ref.__dict__["_path_frame"] = frame
    return frame


def _polyline_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    """(xy, cumulative arc length) for a ReferencePath, Trajectory, or a
    plain sequence of Pose2D."""
    if isinstance(path, ReferencePath):
        return path.xy, path.cumulative_arclength
    if isinstance(path, Trajectory):
        return path.xy, path.arclengths
    xy = np.array([[p.x, p.y] for p in path], dtype=float)
    if xy.shape[0] < 2:
        raise ValueError("polyline needs at least 2 points")
    steps = np.diff(xy, axis=0)
    cum = np.concatenate(([0.0], np.cumsum(np.hypot(steps[:, 0], steps[:, 1]))))
    return xy, cum


def _interp_on_polyline(xy: np.ndarray, cum: np.ndarray, stations: np.ndarray):
    """Positions and segment indices at the given arc-length stations.

    A station exactly on an interior vertex belongs to the outgoing segment.
    """
    idx = cum.searchsorted(stations, side="right") - 1
    np.clip(idx, 0, len(cum) - 2, out=idx)
    frac = (stations - cum[idx]) / (cum[idx + 1] - cum[idx])
    pts = xy[idx] + frac[:, None] * (xy[idx + 1] - xy[idx])
    return pts, idx


def point_at(path, s: float) -> Pose2D:
    """Pose on the polyline at arc length s (clamped to [0, length]),
    heading taken from the containing segment."""
    xy, cum = _polyline_arrays(path)
    station = np.array([min(max(s, 0.0), cum[-1])])
    pts, idx = _interp_on_polyline(xy, cum, station)
    delta = xy[idx[0] + 1] - xy[idx[0]]
    heading = wrap_angle(float(np.arctan2(delta[1], delta[0])))
    return Pose2D(float(pts[0, 0]), float(pts[0, 1]), heading)


def resample_uniform(path, n: int, horizon: float) -> list[Pose2D]:
    """Resample the first `horizon` meters of a polyline to n points at
    uniform arc-length spacing.

    Positions interpolate linearly within segments; headings are the
    containing segment's direction. Raises PathTooShort if the polyline's
    arc length is below the horizon.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not horizon > 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    xy, cum = _polyline_arrays(path)
    total = float(cum[-1])
    if total + _ARC_EPS < horizon:
        raise PathTooShort(f"polyline arc length {total:.6f} m < horizon {horizon:.6f} m")
    stations = np.minimum(np.linspace(0.0, horizon, n), total)
    pts, idx = _interp_on_polyline(xy, cum, stations)
    deltas = xy[idx + 1] - xy[idx]
    headings = np.arctan2(deltas[:, 1], deltas[:, 0])
    return [
        Pose2D(float(x), float(y), wrap_angle(float(h)))
        for (x, y), h in zip(pts, headings)
    ]


@dataclass(frozen=True)
class Projection:
    """Result of projecting a point onto the reference path."""

    s: float              # arc length along the reference, meters
    d: float              # signed lateral offset, positive left of path direction
    segment_index: int


def project_point(ref: ReferencePath, p: Pose2D) -> Projection:
    """Global minimum-distance projection of p onto the reference polyline."""
    s, d, seg = path_frame(ref).project(np.array([[p.x, p.y]]))
    return Projection(float(s[0]), float(d[0]), int(seg[0]))


def project_points(ref: ReferencePath, points: Sequence[Pose2D] | np.ndarray):
    """Vectorized projection; returns (s, d, segment_index) arrays."""
    if isinstance(points, np.ndarray):
        pts = np.asarray(points, dtype=float)
    else:
        pts = np.array([[p.x, p.y] for p in points], dtype=float)
    return path_frame(ref).project(pts)


def resample_points(
    xy: np.ndarray, cum: np.ndarray, stations: np.ndarray, horizon: float
) -> np.ndarray:
    """Array core of resample_uniform: positions at precomputed stations."""
    total = float(cum[-1])
    if total + _ARC_EPS < horizon:
        raise PathTooShort(f"polyline arc length {total:.6f} m < horizon {horizon:.6f} m")
    pts, _ = _interp_on_polyline(xy, cum, np.minimum(stations, total))
    return pts


def profile_offsets(
    frame: PathFrame, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Signed offsets and projected arc lengths of resampled plan points.

    Raises NonMonotonicProjection when the projected arc lengths double
    back along the reference (reported, never silently reordered).
    """
    s, d, _ = frame.project(pts)
    if not (np.diff(s) > 0.0).all():
        raise NonMonotonicProjection(
            "projected arc lengths are not strictly increasing; the trajectory "
            "doubles back relative to the reference"
        )
    return d, s


def profile_offsets_batch(
    pf: PathFrame,
    polylines: Sequence[tuple[np.ndarray, np.ndarray]],
    stations: np.ndarray,
    horizon: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """profile_offsets for many plans at once (replay hot path).

    `polylines` holds (xy, cum) pairs. Returns (offsets (K, n), s0 (K,),
    covered (K,) bool); rows whose plan does not cover the horizon are
    flagged False and left as zeros. Computes the same floats as the
    per-plan kernels: grouped interpolation uses identical expressions.
    """
    n = len(stations)
    count = len(polylines)
    pts_all = np.empty((count, n, 2))
    covered = np.zeros(count, dtype=bool)

    by_vertices: dict[int, list[int]] = {}
    for i, (xy, cum) in enumerate(polylines):
        if float(cum[-1]) + _ARC_EPS < horizon:
            continue
        covered[i] = True
        by_vertices.setdefault(len(cum), []).append(i)

    for _, rows in by_vertices.items():
        cums = np.stack([polylines[i][1] for i in rows])   # (G, P)
        xys = np.stack([polylines[i][0] for i in rows])    # (G, P, 2)
        st = np.minimum(stations[None, :], cums[:, -1:])   # (G, n)
        # count of cum values <= station, minus 1 == searchsorted(side="right") - 1
        idx = (cums[:, None, :] <= st[:, :, None]).sum(axis=-1) - 1
        np.clip(idx, 0, cums.shape[1] - 2, out=idx)
        c0 = np.take_along_axis(cums, idx, axis=1)
        c1 = np.take_along_axis(cums, idx + 1, axis=1)
        frac = (st - c0) / (c1 - c0)
        x0 = np.take_along_axis(xys[:, :, 0], idx, axis=1)
        x1 = np.take_along_axis(xys[:, :, 0], idx + 1, axis=1)
        y0 = np.take_along_axis(xys[:, :, 1], idx, axis=1)
        y1 = np.take_along_axis(xys[:, :, 1], idx + 1, axis=1)
        pts_all[rows, :, 0] = x0 + frac * (x1 - x0)
        pts_all[rows, :, 1] = y0 + frac * (y1 - y0)

    offsets = np.zeros((count, n))
    s0 = np.zeros(count)
    if covered.any():
        live = np.flatnonzero(covered)
        s, d, _ = pf.project(pts_all[live].reshape(-1, 2))
        s = s.reshape(len(live), n)
        if not (np.diff(s, axis=1) > 0.0).all():
            raise NonMonotonicProjection(
                "projected arc lengths are not strictly increasing; a trajectory "
                "doubles back relative to the reference"
            )
        offsets[live] = d.reshape(len(live), n)
        s0[live] = s[:, 0]
    return offsets, s0, covered


def lateral_profile(
    ref: ReferencePath, traj: Trajectory, cfg: DetectorConfig
) -> LateralProfile:
    """Matched lateral profile of a trajectory against the shared reference.

    The trajectory is resampled to cfg.n_points over the first cfg.horizon
    meters of its own arc length and each resampled point is projected onto
    the reference; offsets[i] is the signed offset of point i. The stored
    stations are the matched window stations s0 + i * horizon / (n - 1),
    where s0 is the projection of the trajectory's first point, so point i
    of two trajectories planned from the same spot corresponds by station.
    """
    stations = np.linspace(0.0, cfg.horizon, cfg.n_points)
    pts = resample_points(traj.xy, traj.arclengths, stations, cfg.horizon)
    d, s = profile_offsets(path_frame(ref), pts)
    return LateralProfile(
        traj.stamp, tuple(map(float, d)), tuple(map(float, s[0] + stations))
    )
