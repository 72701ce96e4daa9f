"""Thresholding plus circular non-maximum suppression over ray predictions.

Candidate rays are those whose presence score clears the threshold;
scanning them by descending score (ties to the lower ray) each emitted
detection suppresses every candidate within the angular window on the
ring.  A detection's position projects the predicted range along its
ray; its orientation inverts the label bearing convention, so a perfect
prediction round-trips back to the person pose that generated it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Point2D, wrap_angle

DEFAULT_THRESHOLD = 0.9
DEFAULT_WINDOW_DEG = 15.0  # suppression half-width, degrees


@dataclass(frozen=True)
class Detection:
    ray_index: int  # 0..359
    confidence: float  # presence score in (0, 1)
    position: Point2D  # robot base frame
    orientation: float  # radians, person heading in the robot frame

    @property
    def range(self) -> float:
        return math.hypot(self.position.x, self.position.y)


def ray_distance(a, b, bins: int = 360):
    """Circular distance between ray indices, in bins."""
    d = (np.asarray(a) - np.asarray(b)) % bins
    return np.minimum(d, bins - d)


def detection_from_ray(ray: int, confidence: float, distance: float,
                       bearing_sin: float, bearing_cos: float) -> Detection:
    theta = math.radians(ray)
    heading = wrap_angle(theta + math.pi + math.atan2(bearing_sin, bearing_cos))
    return Detection(
        ray_index=int(ray),
        confidence=float(confidence),
        position=Point2D(distance * math.cos(theta), distance * math.sin(theta)),
        orientation=heading,
    )


def nms(pred, threshold: float = DEFAULT_THRESHOLD,
        window_deg: float = DEFAULT_WINDOW_DEG) -> list[Detection]:
    """Suppress a PredictionTensor with (bins,) fields into detections."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if window_deg < 1:
        raise ValueError(f"window_deg must be >= 1, got {window_deg}")
    presence = np.asarray(pred.presence)
    bins = presence.shape[0]
    candidates = np.flatnonzero(presence >= threshold)
    if candidates.size == 0:
        return []
    # descending score, ties broken by the lower ray index
    order = candidates[np.lexsort((candidates, -presence[candidates]))]
    suppressed = np.zeros(bins, dtype=bool)
    out = []
    for ray in order:
        if suppressed[ray]:
            continue
        out.append(
            detection_from_ray(
                ray,
                presence[ray],
                pred.distance[ray],
                pred.bearing_sin[ray],
                pred.bearing_cos[ray],
            )
        )
        suppressed[candidates[ray_distance(candidates, ray, bins) <= window_deg]] = True
    return out
