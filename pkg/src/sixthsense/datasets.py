"""Episode recordings and their conversion to training samples.

An episode is one JSON-lines file: a header line followed by one record
per sensor event, each with a timestamp and the odometry pose at that
instant.  Scan arrays store no-returns as null.  Records at tick times
additionally carry the head pan, the camera person detections, and the
simulator ground truth.

Sample assembly replays the record stream: scans are paired on the tick
grid, fused into virtual scans, stacked into history windows, and the
tick's camera detections become per-ray labels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .geometry import Pose2D
from .history import HistoryConfig, ScanWindow, build_window
from .lidar import RawScan, SensorConfig, fuse, synchronize
from .supervision import CameraConfig, LabelTensor, PersonObservation, make_labels
from .training import LabelBatch
from .util import canon_dumps, get_logger

log = get_logger("datasets")

EPISODE_FORMAT = "sixthsense-episode-v1"
_SCAN_KEYS = ("front_scan", "back_scan")


@dataclass
class Episode:
    header: dict
    records: list

    @property
    def environment_name(self) -> str:
        return self.header["environment_name"]


def write_episode(episode: Episode, path) -> None:
    """Write one episode as canonical JSON lines (header first)."""
    if episode.header.get("format") != EPISODE_FORMAT:
        raise ValueError(
            f"episode header format is {episode.header.get('format')!r},"
            f" expected {EPISODE_FORMAT!r}"
        )
    with open(path, "w") as fh:
        fh.write(canon_dumps(episode.header))
        fh.write("\n")
        for record in episode.records:
            fh.write(canon_dumps(record))
            fh.write("\n")


def _parse_line(path, lineno: int, line: str):
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc


def read_episode(path) -> Episode:
    """Parse an episode file; errors carry the offending line number."""
    path = Path(path)
    with open(path) as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: line 1: empty or missing header")
        header = _parse_line(path, 1, header_line)
        if not isinstance(header, dict) or header.get("format") != EPISODE_FORMAT:
            raise ValueError(
                f"{path}: line 1: not a {EPISODE_FORMAT!r} episode header"
            )
        records = []
        prev_t = -math.inf
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            record = _parse_line(path, lineno, line)
            if not isinstance(record, dict) or "timestamp" not in record:
                raise ValueError(f"{path}: line {lineno}: record lacks a timestamp")
            for key in _SCAN_KEYS:
                if key in record:
                    record[key] = np.array(
                        [np.nan if v is None else float(v) for v in record[key]]
                    )
            t = record["timestamp"]
            if t <= prev_t:
                raise ValueError(
                    f"{path}: line {lineno}: timestamp {t} does not increase"
                )
            prev_t = t
            records.append(record)
    return Episode(header=header, records=records)


def episode_sensor_configs(episode: Episode):
    """Sensor and camera configs recorded in the episode header."""
    cfgs = episode.header["configs"]

    def sensor(d: dict) -> SensorConfig:
        m = d["mount_pose"]
        return SensorConfig(
            mount_pose=Pose2D(m["x"], m["y"], m["heading"]),
            fov=d["fov"],
            angular_resolution=d["angular_resolution"],
            rate=d["rate"],
            d_min=d["d_min"],
            d_max=d["d_max"],
        )

    cam = cfgs["camera"]
    return (
        sensor(cfgs["front_sensor"]),
        sensor(cfgs["back_sensor"]),
        CameraConfig(hfov=cam["hfov"], max_range=cam["max_range"]),
    )


@dataclass
class Sample:
    window: ScanWindow
    labels: LabelTensor
    ground_truth: list  # PersonObservation, empty once stripped
    timestamp: float


def _pose_from(d: dict) -> Pose2D:
    return Pose2D(d["x"], d["y"], d["heading"])


def iter_samples(episode: Episode, history: HistoryConfig) -> Iterator[Sample]:
    """Replay an episode into labeled samples, one per warm tick.

    Generator, so long episodes can be consumed without holding every
    window in memory at once.  The first n-1 ticks warm up the history
    buffer and yield nothing.
    """
    front_cfg, back_cfg, cam = episode_sensor_configs(episode)
    front_scans, back_scans = [], []
    odometry = {}
    tick_meta = {}
    for record in episode.records:
        t = record["timestamp"]
        odometry[t] = _pose_from(record["odometry"])
        if "front_scan" in record:
            front_scans.append(RawScan("front", t, record["front_scan"]))
        if "back_scan" in record:
            back_scans.append(RawScan("back", t, record["back_scan"]))
        if "head_pan" in record:
            tick_meta[t] = record

    sync = synchronize(
        front_scans, back_scans, rate=episode.header.get("tick_rate", 10.0)
    )
    buffer: list = []
    for _, f, b in sync.pairs:
        stamp = max(f.timestamp, b.timestamp)
        vscan = fuse(f, b, front_cfg, back_cfg, odometry[stamp])
        buffer.append(vscan)
        if len(buffer) > history.n:
            del buffer[0]
        window = build_window(buffer, history, front_cfg.d_min, front_cfg.d_max)
        if window is None:
            continue
        meta = tick_meta.get(b.timestamp)
        if meta is None:
            raise ValueError(
                f"record at t={b.timestamp} has a back scan but no tick metadata"
            )
        tick_cam = replace(cam, pan=meta["head_pan"])
        people = [
            PersonObservation(pose=_pose_from(d), source="camera_detector")
            for d in meta["camera_detections"]
        ]
        labels = make_labels(people, tick_cam, front_cfg.d_min, front_cfg.d_max)
        gt = [
            PersonObservation(pose=_pose_from(d), source="ground_truth")
            for d in meta.get("ground_truth", [])
        ]
        yield Sample(window=window, labels=labels, ground_truth=gt,
                     timestamp=window.timestamp)


def build_samples(episode: Episode, history: HistoryConfig) -> list:
    return list(iter_samples(episode, history))


def episode_ground_truths(episode: Episode) -> list:
    """Every recorded ground-truth person over all ticks."""
    out = []
    for record in episode.records:
        for d in record.get("ground_truth", []):
            out.append(PersonObservation(pose=_pose_from(d), source="ground_truth"))
    return out


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list


def _strip_ground_truth(samples) -> list:
    return [replace(s, ground_truth=[]) for s in samples]


def split_samples(samples_by_env: dict, env_a: str, env_b: str,
                  env_c: str) -> DatasetSplit:
    """Fixed three-environment split.

    Environment A trains; B is cut chronologically, first half (rounded
    up) to train and the rest to validation; C is held out for test.
    Ground truth is stripped from train and val so nothing downstream
    can touch it by accident.
    """
    names = (env_a, env_b, env_c)
    if len(set(names)) != 3:
        raise ValueError(f"split environments must be three distinct names, got {names}")
    for name in names:
        if name not in samples_by_env:
            raise ValueError(
                f"no samples for environment {name!r}; have {sorted(samples_by_env)}"
            )
    b = sorted(samples_by_env[env_b], key=lambda s: s.timestamp)
    cut = (len(b) + 1) // 2
    train = _strip_ground_truth(list(samples_by_env[env_a]) + b[:cut])
    val = _strip_ground_truth(b[cut:])
    test = list(samples_by_env[env_c])
    log.info(
        "split: %d train, %d val, %d test samples", len(train), len(val), len(test)
    )
    return DatasetSplit(train=train, val=val, test=test)


def to_training_arrays(samples, dtype=np.float32):
    """Stack samples into (N, bins, C) inputs and a LabelBatch."""
    if not samples:
        raise ValueError("cannot build training arrays from zero samples")
    channels, bins = samples[0].window.channels.shape
    x = np.empty((len(samples), bins, channels), dtype=dtype)
    for i, sample in enumerate(samples):
        if sample.window.channels.shape != (channels, bins):
            raise ValueError("samples disagree on window shape")
        x[i] = sample.window.channels.T
    labels = LabelBatch.stack([s.labels for s in samples]).astype(dtype)
    return x, labels
