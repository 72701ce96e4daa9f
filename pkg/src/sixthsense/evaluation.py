"""Detection metrics: P-R curve, P80, orientation/distance errors, Dummy.

Detections are matched to ground truth greedily in confidence order
within a 0.5 m radius; orientation never influences matching.  The P-R
curve reruns suppression and matching at every threshold drawn from the
observed candidate confidences.  Pose errors are reported at the chosen
operating point, and the Dummy baseline replays the test-set average
heading (circular mean) and range against every ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detection import DEFAULT_WINDOW_DEG, Detection, detection_from_ray, ray_distance
from .geometry import wrap_angle
from .util import format_float

MATCH_RADIUS = 0.5  # meters
RECALL_TARGET = 0.8
BASE_THRESHOLD = 0.01  # candidate floor for the threshold sweep
MAX_THRESHOLDS = 96


@dataclass
class FrameEval:
    true_positives: list  # (Detection, PersonObservation) pairs
    false_positives: list  # Detection
    false_negatives: list  # PersonObservation


def match_frame(dets, gts, match_radius: float = MATCH_RADIUS) -> FrameEval:
    """Greedy one-to-one matching by descending detection confidence.

    Each detection takes the nearest still-unmatched ground truth with
    Euclidean distance strictly below match_radius.
    """
    order = sorted(dets, key=lambda d: (-d.confidence, d.ray_index))
    taken = [False] * len(gts)
    tps, fps = [], []
    for det in order:
        best, best_dist = None, match_radius
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            dist = math.hypot(det.position.x - gt.pose.x, det.position.y - gt.pose.y)
            if dist < best_dist:
                best, best_dist = j, dist
        if best is None:
            fps.append(det)
        else:
            taken[best] = True
            tps.append((det, gts[best]))
    fns = [gt for j, gt in enumerate(gts) if not taken[j]]
    return FrameEval(true_positives=tps, false_positives=fps, false_negatives=fns)


@dataclass
class FrameCandidates:
    """Per-frame NMS candidates above the base threshold.

    Arrays are parallel and pre-sorted by (confidence desc, ray asc), so
    the candidate set at any higher threshold is a prefix.  Rerunning
    suppression on a prefix reproduces full NMS at that threshold.
    """

    rays: np.ndarray
    confidence: np.ndarray
    distance: np.ndarray
    bearing_sin: np.ndarray
    bearing_cos: np.ndarray


def frame_candidates(pred, base_threshold: float = BASE_THRESHOLD) -> FrameCandidates:
    """Extract sorted candidates from a (bins,) PredictionTensor."""
    presence = np.asarray(pred.presence, dtype=float)
    idx = np.flatnonzero(presence >= base_threshold)
    order = idx[np.lexsort((idx, -presence[idx]))]
    return FrameCandidates(
        rays=order.astype(np.int32),
        confidence=presence[order],
        distance=np.asarray(pred.distance, dtype=float)[order],
        bearing_sin=np.asarray(pred.bearing_sin, dtype=float)[order],
        bearing_cos=np.asarray(pred.bearing_cos, dtype=float)[order],
    )


def nms_from_candidates(cands: FrameCandidates, threshold: float,
                        window_deg: float = DEFAULT_WINDOW_DEG) -> list[Detection]:
    """NMS at any threshold above the candidate base threshold."""
    count = int(np.searchsorted(-cands.confidence, -threshold, side="right"))
    if count == 0:
        return []
    rays = cands.rays[:count]
    out = []
    suppressed = np.zeros(count, dtype=bool)
    for i in range(count):
        if suppressed[i]:
            continue
        out.append(
            detection_from_ray(
                int(rays[i]),
                cands.confidence[i],
                cands.distance[i],
                cands.bearing_sin[i],
                cands.bearing_cos[i],
            )
        )
        suppressed |= ray_distance(rays, rays[i]) <= window_deg
    return out


def sweep_thresholds(frames: list[FrameCandidates],
                     max_thresholds: int = MAX_THRESHOLDS) -> np.ndarray:
    """Ascending threshold grid from the observed candidate confidences."""
    if not frames:
        return np.array([])
    values = np.unique(np.concatenate([f.confidence for f in frames]))
    if values.size == 0:
        return values
    if values.size > max_thresholds:
        pick = np.linspace(0, values.size - 1, max_thresholds).round().astype(int)
        values = values[np.unique(pick)]
    return values


@dataclass
class PRPoint:
    threshold: float
    precision: float
    recall: float


def pr_curve(frames: list[FrameCandidates], gts_frames: list,
             window_deg: float = DEFAULT_WINDOW_DEG,
             match_radius: float = MATCH_RADIUS,
             max_thresholds: int = MAX_THRESHOLDS):
    """P-R over the whole set per threshold.

    Returns (points, no_ground_truth flag).  With an empty ground truth
    the recall is undefined; by convention it is reported as 1 and the
    flag is set.
    """
    if len(frames) != len(gts_frames):
        raise ValueError(f"{len(frames)} frames but {len(gts_frames)} ground truths")
    total_gt = sum(len(g) for g in gts_frames)
    no_gt = total_gt == 0
    points = []
    for thr in sweep_thresholds(frames, max_thresholds):
        tp = fp = 0
        for cands, gts in zip(frames, gts_frames):
            dets = nms_from_candidates(cands, thr, window_deg)
            if not dets:
                continue
            ev = match_frame(dets, gts, match_radius)
            tp += len(ev.true_positives)
            fp += len(ev.false_positives)
        precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
        recall = 1.0 if no_gt else tp / total_gt
        points.append(PRPoint(float(thr), precision, recall))
    return points, no_gt


def p80(points: list[PRPoint], target: float = RECALL_TARGET):
    """Precision (percent) at the largest threshold with recall >= target.

    Returns (percent, threshold), or (None, None) when the target recall
    is never attained.
    """
    best = None
    for pt in points:  # ascending thresholds; keep the last that qualifies
        if pt.recall >= target:
            best = pt
    if best is None:
        return None, None
    return 100.0 * best.precision, best.threshold


def pose_errors(tps) -> tuple[float, float]:
    """(mean abs orientation error deg, mean abs range error cm) over TPs.

    Empty input yields NaNs.
    """
    if not tps:
        return float("nan"), float("nan")
    e_o = 0.0
    e_d = 0.0
    for det, gt in tps:
        e_o += abs(wrap_angle(det.orientation - gt.pose.heading))
        e_d += abs(det.range - gt.range)
    n = len(tps)
    return math.degrees(e_o / n), 100.0 * e_d / n


def orientation_errors_deg(tps) -> list[float]:
    return [
        math.degrees(abs(wrap_angle(det.orientation - gt.pose.heading)))
        for det, gt in tps
    ]


def dummy_baseline(gts) -> tuple[float, float]:
    """Errors of the constant predictor over every ground truth.

    The constant is the circular mean heading and arithmetic mean range
    of the ground truth itself, evaluated as if detection were ideal.
    """
    gts = list(gts)
    if not gts:
        raise ValueError("dummy baseline needs a non-empty ground truth")
    headings = np.array([g.pose.heading for g in gts])
    ranges = np.array([g.range for g in gts])
    mean_heading = math.atan2(np.sin(headings).sum(), np.cos(headings).sum())
    mean_range = float(ranges.mean())
    e_o = np.abs([wrap_angle(h - mean_heading) for h in headings]).mean()
    e_d = np.abs(ranges - mean_range).mean()
    return math.degrees(float(e_o)), 100.0 * float(e_d)


@dataclass
class MetricsReport:
    pr_points: list
    p80_percent: float | None
    p80_threshold: float | None
    operating_threshold: float
    e_o_deg: float
    e_d_cm: float
    true_positive_count: int
    detection_count: int
    ground_truth_count: int
    no_ground_truth: bool
    orientation_errors: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p80_percent": self.p80_percent,
            "p80_threshold": self.p80_threshold,
            "p80_attained": self.p80_percent is not None,
            "operating_threshold": self.operating_threshold,
            "mean_abs_orientation_error_deg": _nan_to_none(self.e_o_deg),
            "mean_abs_distance_error_cm": _nan_to_none(self.e_d_cm),
            "true_positives": self.true_positive_count,
            "detections": self.detection_count,
            "ground_truths": self.ground_truth_count,
            "no_ground_truth": self.no_ground_truth,
        }


def _nan_to_none(x: float):
    return None if (x != x) else x


def evaluate_detector(frames: list[FrameCandidates], gts_frames: list,
                      fallback_threshold: float = 0.9,
                      window_deg: float = DEFAULT_WINDOW_DEG,
                      match_radius: float = MATCH_RADIUS,
                      max_thresholds: int = MAX_THRESHOLDS) -> MetricsReport:
    """Full metric suite for one model over a test set.

    Pose errors are measured at the P80 operating threshold when the 80%
    recall target is attained, otherwise at fallback_threshold.
    """
    points, no_gt = pr_curve(frames, gts_frames, window_deg, match_radius,
                             max_thresholds)
    pct, thr = p80(points)
    operating = thr if thr is not None else fallback_threshold
    tps = []
    n_det = 0
    for cands, gts in zip(frames, gts_frames):
        dets = nms_from_candidates(cands, operating, window_deg)
        n_det += len(dets)
        if dets:
            tps.extend(match_frame(dets, gts, match_radius).true_positives)
    e_o, e_d = pose_errors(tps)
    return MetricsReport(
        pr_points=points,
        p80_percent=pct,
        p80_threshold=thr,
        operating_threshold=operating,
        e_o_deg=e_o,
        e_d_cm=e_d,
        true_positive_count=len(tps),
        detection_count=n_det,
        ground_truth_count=sum(len(g) for g in gts_frames),
        no_ground_truth=no_gt,
        orientation_errors=orientation_errors_deg(tps),
    )


def write_pr_csv(path, curves: dict) -> None:
    """pr_curve.csv: model, threshold, precision, recall per row."""
    lines = ["model,threshold,precision,recall"]
    for label, points in curves.items():
        for pt in points:
            lines.append(
                f"{label},{format_float(pt.threshold)},"
                f"{format_float(pt.precision)},{format_float(pt.recall)}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sixthsense"
    return plt


def plot_pr_curves(path, curves: dict) -> None:
    """Precision-recall plot, one line per model."""
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, points in curves.items():
        ax.plot([p.recall for p in points], [p.precision for p in points],
                marker=".", markersize=3, linewidth=1.2, label=label)
    ax.axvline(RECALL_TARGET, color="gray", linestyle=":", linewidth=0.8)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def plot_orientation_hist(path, errors_by_model: dict) -> None:
    """Histogram of per-TP absolute orientation errors (degrees)."""
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 4))
    bins = np.linspace(0, 180, 19)
    for label, errors in errors_by_model.items():
        if len(errors) == 0:  # density would divide by zero
            continue
        ax.hist(errors, bins=bins, histtype="step", linewidth=1.2,
                density=True, label=label)
    if not ax.has_data():
        ax.text(0.5, 0.5, "no matched detections", ha="center",
                transform=ax.transAxes)
    ax.set_xlabel("absolute orientation error (deg)")
    ax.set_ylabel("density")
    ax.grid(alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
