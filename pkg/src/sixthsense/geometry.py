"""SE(2) poses, angle arithmetic, and frame transforms.

Everything downstream (scan fusion, reprojection, labeling, simulation)
goes through this module, so the conventions are pinned here once:

* angles are radians wrapped to the half-open interval [-pi, pi);
  +pi is not representable and maps to -pi, giving every orientation a
  unique float representation,
* poses are (x, y, heading) with x, y in meters,
* all arithmetic is double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi).

    Uses IEEE remainder, which is exact, so values already inside the
    interval are returned bit-for-bit unchanged (the wrap is idempotent).

    Raises ValueError for non-finite input.
    """
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    r = math.remainder(a, TWO_PI)  # exact, in [-pi, pi]
    if r >= math.pi:
        r -= TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to [-pi, pi) for arrays (used on hot paths)."""
    return np.mod(np.asarray(a, dtype=np.float64) + math.pi, TWO_PI) - math.pi


@dataclass(frozen=True)
class Point2D:
    """A point in the plane, meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x!r}, {self.y!r})")


@dataclass(frozen=True)
class Pose2D:
    """An SE(2) pose: position in meters, heading in radians.

    The heading is wrapped to [-pi, pi) on construction, so two poses
    representing the same orientation always compare equal.
    """

    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def position(self) -> Point2D:
        return Point2D(self.x, self.y)


IDENTITY = Pose2D(0.0, 0.0, 0.0)


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """SE(2) composition a*b: b's translation rotated into a's frame, headings summed."""
    c, s = math.cos(a.heading), math.sin(a.heading)
    return Pose2D(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.heading + b.heading,
    )


def inverse(p: Pose2D) -> Pose2D:
    """The pose q with compose(p, q) == identity."""
    c, s = math.cos(p.heading), math.sin(p.heading)
    return Pose2D(-(c * p.x + s * p.y), s * p.x - c * p.y, -p.heading)


def relative_pose(frm: Pose2D, to: Pose2D) -> Pose2D:
    """Express `to` in the frame of `frm`: inverse(frm) * to."""
    return compose(inverse(frm), to)


def transform_point(frame: Pose2D, p: Point2D) -> Point2D:
    """Express a point given in `frame` coordinates in the parent frame."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    return Point2D(frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y)


def transform_points(frame: Pose2D, xy: np.ndarray) -> np.ndarray:
    """Vectorized transform_point for an (N, 2) array."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    xy = np.asarray(xy, dtype=np.float64)
    out = np.empty_like(xy)
    out[:, 0] = frame.x + c * xy[:, 0] - s * xy[:, 1]
    out[:, 1] = frame.y + s * xy[:, 0] + c * xy[:, 1]
    return out


def interpolate_pose(t: float, t0: float, p0: Pose2D, t1: float, p1: Pose2D) -> Pose2D:
    """Linear interpolation of translation and shortest-arc interpolation of heading."""
    if t1 == t0:
        return p0
    u = (t - t0) / (t1 - t0)
    dh = wrap_angle(p1.heading - p0.heading)
    return Pose2D(
        p0.x + u * (p1.x - p0.x),
        p0.y + u * (p1.y - p0.y),
        p0.heading + u * dh,
    )
