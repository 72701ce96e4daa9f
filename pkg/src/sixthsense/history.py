"""Scan windows: the current virtual scan stacked with reprojected history.

Channel 0 is the newest scan; channel k holds the scan k ticks older,
reprojected into the newest robot frame using the odometry attached to
each scan.  Static structure then overlaps across channels while moving
people leave angular trails, which is the cue the detector learns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose2D, relative_pose, transform_points
from .lidar import DEFAULT_D_MAX, DEFAULT_D_MIN, VIRTUAL_BINS, VirtualScan, bin_index


@dataclass(frozen=True)
class HistoryConfig:
    n: int = 30  # channels; 1 = current scan only
    rate: float = 10.0  # Hz tick rate of the window

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"history length must be >= 1, got {self.n}")
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def to_dict(self) -> dict:
        return {"n": self.n, "rate": self.rate}


@dataclass
class ScanWindow:
    channels: np.ndarray  # (n, VIRTUAL_BINS) ranges in [d_min, d_max]
    timestamp: float
    robot_pose: Pose2D  # odometry of the newest scan


def reproject(past: VirtualScan, current_pose: Pose2D,
              d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX) -> np.ndarray:
    """Re-express a past scan as if captured from the current pose.

    Bins at d_max are treated as empty and dropped; so are points that
    land outside [d_min, d_max] after the transform.  Re-binning keeps
    the closest point per bin; empty bins hold d_max.
    """
    rel = relative_pose(current_pose, past.robot_pose)
    r = np.asarray(past.ranges, dtype=float)
    keep = r < d_max
    out = np.full(VIRTUAL_BINS, d_max)
    if keep.any():
        angles = np.radians(np.flatnonzero(keep).astype(float))
        r = r[keep]
        pts = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        pts = transform_points(rel, pts)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        ok = (rho >= d_min) & (rho <= d_max)
        pts, rho = pts[ok], rho[ok]
        if pts.shape[0]:
            bins = bin_index(np.arctan2(pts[:, 1], pts[:, 0]))
            np.minimum.at(out, bins, rho)
    return out


def build_window(buffer, config: HistoryConfig,
                 d_min: float = DEFAULT_D_MIN,
                 d_max: float = DEFAULT_D_MAX) -> ScanWindow | None:
    """Assemble a window from the last n virtual scans (newest last).

    Returns None while warming up (fewer than n scans buffered).
    """
    scans = list(buffer)
    if len(scans) < config.n:
        return None
    scans = scans[-config.n:]
    newest = scans[-1]
    channels = np.empty((config.n, VIRTUAL_BINS))
    channels[0] = newest.ranges
    for k in range(1, config.n):
        channels[k] = reproject(scans[-1 - k], newest.robot_pose, d_min, d_max)
    return ScanWindow(
        channels=channels, timestamp=newest.timestamp, robot_pose=newest.robot_pose
    )
