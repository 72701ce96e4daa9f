"""Fusion of two planar LiDARs into one 360-bin virtual scanner.

Each physical beam becomes a 2D point in the robot base frame via its
sensor mount pose, is assigned to the 1-degree bin containing its base
frame bearing, and every bin keeps the range of its closest member.
Bins with no member hold exactly d_max.  A synchronizer pairs the two
sensor streams on a fixed 10 Hz tick grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2D, transform_points, wrap_angles
from .util import get_logger

log = get_logger("lidar")

VIRTUAL_BINS = 360
DEFAULT_D_MIN = 0.05  # meters
DEFAULT_D_MAX = 10.0  # meters
SYNC_TOLERANCE = 0.1  # seconds, one 10 Hz period

FRONT_MOUNT = Pose2D(0.15, 0.0, 0.0)
BACK_MOUNT = Pose2D(-0.15, 0.0, math.pi)


@dataclass(frozen=True)
class SensorConfig:
    mount_pose: Pose2D
    fov: float  # radians
    angular_resolution: float  # radians between beams
    rate: float  # Hz
    d_min: float = DEFAULT_D_MIN
    d_max: float = DEFAULT_D_MAX

    def __post_init__(self):
        if not 0 < self.fov <= 2 * math.pi + 1e-12:
            raise ValueError(f"fov must be in (0, 2*pi], got {self.fov}")
        if self.angular_resolution <= 0:
            raise ValueError("angular_resolution must be positive")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if not 0 < self.d_min < self.d_max:
            raise ValueError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")

    @property
    def beam_count(self) -> int:
        return int(round(self.fov / self.angular_resolution)) + 1

    def beam_angles(self) -> np.ndarray:
        """Beam bearings in the sensor frame, symmetric about its +x axis."""
        return -0.5 * self.fov + self.angular_resolution * np.arange(self.beam_count)

    def to_dict(self) -> dict:
        return {
            "mount_pose": {
                "x": self.mount_pose.x,
                "y": self.mount_pose.y,
                "heading": self.mount_pose.heading,
            },
            "fov": self.fov,
            "angular_resolution": self.angular_resolution,
            "rate": self.rate,
            "d_min": self.d_min,
            "d_max": self.d_max,
        }


def front_sensor(mount_pose: Pose2D = FRONT_MOUNT) -> SensorConfig:
    """Forward scanner: 190-degree FOV at 15 Hz."""
    return SensorConfig(
        mount_pose=mount_pose,
        fov=math.radians(190.0),
        angular_resolution=math.radians(1.0),
        rate=15.0,
    )


def back_sensor(mount_pose: Pose2D = BACK_MOUNT) -> SensorConfig:
    """Rear scanner: 255-degree FOV at 10 Hz."""
    return SensorConfig(
        mount_pose=mount_pose,
        fov=math.radians(255.0),
        angular_resolution=math.radians(1.0),
        rate=10.0,
    )


@dataclass
class RawScan:
    sensor_id: str  # "front" or "back"
    timestamp: float  # seconds
    ranges: np.ndarray  # meters per beam, NaN marks no-return


@dataclass
class VirtualScan:
    timestamp: float
    ranges: np.ndarray  # exactly VIRTUAL_BINS values in [d_min, d_max]
    robot_pose: Pose2D  # odometry at timestamp


def bin_index(angles: np.ndarray, bins: int = VIRTUAL_BINS) -> np.ndarray:
    """1-degree bin of a base-frame bearing: round to the nearest degree."""
    deg = np.degrees(wrap_angles(np.asarray(angles, dtype=float)))
    return np.round(deg).astype(int) % bins


def _scan_points(scan: RawScan, config: SensorConfig) -> np.ndarray:
    """Valid beams as base-frame points, (N, 2)."""
    r = np.asarray(scan.ranges, dtype=float)
    if r.shape != (config.beam_count,):
        raise ValueError(
            f"{scan.sensor_id} scan has {r.shape[0] if r.ndim == 1 else r.shape} beams,"
            f" config expects {config.beam_count}"
        )
    keep = np.isfinite(r) & (r >= config.d_min) & (r <= config.d_max)
    angles = config.beam_angles()[keep]
    r = r[keep]
    local = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
    return transform_points(config.mount_pose, local)


def fuse(front: RawScan, back: RawScan, front_config: SensorConfig,
         back_config: SensorConfig, odometry_pose: Pose2D,
         sync_tolerance: float = SYNC_TOLERANCE) -> VirtualScan:
    """Merge one scan from each sensor into a 360-bin virtual scan.

    Beams outside the sensor's [d_min, d_max] are discarded, as are
    points whose base-frame range leaves that band after the mount
    transform.  The result is symmetric in its two scans.
    """
    if abs(front.timestamp - back.timestamp) > sync_tolerance:
        raise ValueError(
            f"scan timestamps differ by {abs(front.timestamp - back.timestamp):.3f} s,"
            f" beyond the {sync_tolerance} s sync tolerance"
        )
    if (front_config.d_min, front_config.d_max) != (back_config.d_min, back_config.d_max):
        raise ValueError("sensors disagree on [d_min, d_max]")
    d_min, d_max = front_config.d_min, front_config.d_max

    points = np.concatenate(
        [_scan_points(front, front_config), _scan_points(back, back_config)]
    )
    out = np.full(VIRTUAL_BINS, d_max)
    if points.shape[0]:
        rho = np.hypot(points[:, 0], points[:, 1])
        keep = (rho >= d_min) & (rho <= d_max)
        points, rho = points[keep], rho[keep]
        bins = bin_index(np.arctan2(points[:, 1], points[:, 0]))
        np.minimum.at(out, bins, rho)
    return VirtualScan(
        timestamp=max(front.timestamp, back.timestamp),
        ranges=out,
        robot_pose=odometry_pose,
    )


@dataclass
class SyncResult:
    pairs: list  # (tick_time, front RawScan, back RawScan)
    skipped: int  # ticks lacking a fresh scan from either sensor


def synchronize(front_scans, back_scans, rate: float = 10.0,
                sync_tolerance: float = SYNC_TOLERANCE) -> SyncResult:
    """Pair the two streams on the tick grid k/rate.

    At each tick the most recent scan from each sensor no older than
    sync_tolerance is taken; ticks lacking either are skipped silently
    and counted.  Inputs must be timestamp-ordered.
    """
    front = list(front_scans)
    back = list(back_scans)
    if not front and not back:
        return SyncResult(pairs=[], skipped=0)
    stamps = [s.timestamp for s in front] + [s.timestamp for s in back]
    first, last = min(stamps), max(stamps)
    k0 = math.floor(first * rate + 1e-9)
    k1 = math.floor(last * rate + 1e-9)

    pairs = []
    skipped = 0
    fi = bi = 0
    for k in range(k0, k1 + 1):
        tick = k / rate
        while fi + 1 < len(front) and front[fi + 1].timestamp <= tick + 1e-9:
            fi += 1
        while bi + 1 < len(back) and back[bi + 1].timestamp <= tick + 1e-9:
            bi += 1
        f = front[fi] if front and front[fi].timestamp <= tick + 1e-9 else None
        b = back[bi] if back and back[bi].timestamp <= tick + 1e-9 else None
        if (
            f is not None
            and b is not None
            and tick - f.timestamp <= sync_tolerance + 1e-9
            and tick - b.timestamp <= sync_tolerance + 1e-9
        ):
            pairs.append((tick, f, b))
        else:
            skipped += 1
    if skipped:
        log.debug("synchronize: skipped %d of %d ticks", skipped, k1 - k0 + 1)
    return SyncResult(pairs=pairs, skipped=skipped)
