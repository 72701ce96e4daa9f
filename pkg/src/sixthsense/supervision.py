"""Per-ray training labels from camera person detections.

A detected person is modeled as a 0.25 m radius disc at the pelvis
ground projection.  Every ray inside the camera wedge whose center line
crosses the disc is labeled present, with the pelvis center range as the
distance label and the person's bearing (heading relative to the ray,
zero meaning facing the robot) encoded as sine/cosine.  Rays outside the
pan-adjusted camera FOV are masked out of the loss entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2D, wrap_angle, wrap_angles
from .lidar import DEFAULT_D_MAX, DEFAULT_D_MIN, VIRTUAL_BINS
from .util import get_logger

log = get_logger("supervision")

PERSON_RADIUS = 0.25  # meters, disc footprint of a person
PAN_LIMIT = math.radians(75.0)

# simulated camera detector noise; recorded here because labels inherit it
CAMERA_POSITION_SIGMA = 0.03  # meters
CAMERA_HEADING_SIGMA = math.radians(5.0)
CAMERA_DROPOUT = 0.05  # per-frame miss probability


@dataclass(frozen=True)
class CameraConfig:
    hfov: float = math.radians(65.0)
    max_range: float = 6.0  # meters, reliable person tracking limit
    pan: float = 0.0  # radians, current head pan

    def __post_init__(self):
        if not 0 < self.hfov <= 2 * math.pi:
            raise ValueError(f"hfov must be in (0, 2*pi], got {self.hfov}")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if abs(self.pan) > PAN_LIMIT + 1e-12:
            raise ValueError(
                f"pan {self.pan} exceeds the +-{PAN_LIMIT} rad head limit"
            )

    def to_dict(self) -> dict:
        return {"hfov": self.hfov, "max_range": self.max_range, "pan": self.pan}


@dataclass(frozen=True)
class PersonObservation:
    pose: Pose2D  # pelvis ground projection, robot base frame
    source: str  # "camera_detector" or "ground_truth"

    def __post_init__(self):
        if self.source not in ("camera_detector", "ground_truth"):
            raise ValueError(f"unknown observation source {self.source!r}")

    @property
    def range(self) -> float:
        return math.hypot(self.pose.x, self.pose.y)


@dataclass
class LabelTensor:
    presence: np.ndarray  # (bins,) in {0, 1}
    distance: np.ndarray  # meters, zero where presence is 0
    bearing_sin: np.ndarray
    bearing_cos: np.ndarray
    mask: np.ndarray  # (bins,) in {0, 1}, the camera wedge


def bin_angles(bins: int = VIRTUAL_BINS) -> np.ndarray:
    """Center bearing of each ray in radians."""
    return np.radians(np.arange(bins, dtype=float))


def fov_mask(cam: CameraConfig, bins: int = VIRTUAL_BINS) -> np.ndarray:
    """1.0 on rays inside the pan-adjusted camera wedge."""
    rel = wrap_angles(bin_angles(bins) - cam.pan)
    return (np.abs(rel) <= cam.hfov / 2 + 1e-12).astype(float)


def relative_bearing(person: Pose2D) -> float:
    """Person heading relative to its ray, zero when facing the robot."""
    if person.x == 0.0 and person.y == 0.0:
        raise ValueError("person at the origin has no ray direction")
    theta = math.atan2(person.y, person.x)
    return wrap_angle(person.heading - theta - math.pi)


def make_labels(people, cam: CameraConfig,
                d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX,
                person_radius: float = PERSON_RADIUS,
                bins: int = VIRTUAL_BINS) -> LabelTensor:
    """Label every masked ray from a list of PersonObservation.

    Overlapping people: the nearer person wins each ray.  People closer
    than d_min or farther than d_max are skipped (their center range
    could not be a valid distance label).
    """
    mask = fov_mask(cam, bins)
    presence = np.zeros(bins)
    distance = np.zeros(bins)
    bearing_sin = np.zeros(bins)
    bearing_cos = np.zeros(bins)

    angles = bin_angles(bins)
    # write farther people first so nearer ones overwrite shared rays
    for person in sorted(people, key=lambda p: -p.range):
        rho = person.range
        if rho < d_min or rho > d_max:
            log.debug("skipping person at range %.3f m outside [%s, %s]",
                      rho, d_min, d_max)
            continue
        if rho <= person_radius:
            half = math.pi  # disc swallows the origin; every ray crosses it
        else:
            half = math.asin(person_radius / rho)
        center = math.atan2(person.pose.y, person.pose.x)
        covered = np.abs(wrap_angles(angles - center)) <= half + 1e-12
        covered &= mask > 0.5
        if not covered.any():
            continue
        bearing = relative_bearing(person.pose)
        presence[covered] = 1.0
        distance[covered] = rho
        bearing_sin[covered] = math.sin(bearing)
        bearing_cos[covered] = math.cos(bearing)
    return LabelTensor(
        presence=presence,
        distance=distance,
        bearing_sin=bearing_sin,
        bearing_cos=bearing_cos,
        mask=mask,
    )
