"""Streaming prediction over recorded episodes.

Bridges the dataset replay with the model and the detector: windows are
assembled tick by tick, run through the network in batches, and turned
into per-frame candidate sets or final detections.  Long episodes never
need all their windows in memory at once.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .datasets import Episode, iter_samples
from .detection import DEFAULT_THRESHOLD, DEFAULT_WINDOW_DEG, Detection, nms
from .evaluation import FrameCandidates, frame_candidates
from .history import HistoryConfig
from .model import ModelParams, PredictionTensor, forward_batch

PREDICT_BATCH = 256


def history_for(params: ModelParams) -> HistoryConfig:
    """The window length a checkpoint was trained for."""
    return HistoryConfig(n=params.config.in_channels)


def predict_episode(params: ModelParams, episode: Episode,
                    batch_size: int = PREDICT_BATCH) -> Iterator[tuple]:
    """Yield (timestamp, PredictionTensor with (bins,) fields, ground_truth).

    Ground truth is the tick's recorded list of PersonObservation (empty
    if the episode has none).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    history = history_for(params)
    pending = []

    def flush():
        x = np.stack([s.window.channels.T for s in pending])
        pred, _ = forward_batch(params, x)
        for i, sample in enumerate(pending):
            yield sample.timestamp, PredictionTensor(
                presence=pred.presence[i],
                distance=pred.distance[i],
                bearing_sin=pred.bearing_sin[i],
                bearing_cos=pred.bearing_cos[i],
            ), sample.ground_truth
        pending.clear()

    for sample in iter_samples(episode, history):
        pending.append(sample)
        if len(pending) >= batch_size:
            yield from flush()
    if pending:
        yield from flush()


def collect_frames(params: ModelParams, episode: Episode,
                   batch_size: int = PREDICT_BATCH):
    """(frames, gts_frames) for the metric suite, one entry per tick."""
    frames: list[FrameCandidates] = []
    gts_frames: list = []
    for _, pred, gt in predict_episode(params, episode, batch_size):
        frames.append(frame_candidates(pred))
        gts_frames.append(gt)
    return frames, gts_frames


def detect_episode(params: ModelParams, episode: Episode,
                   threshold: float = DEFAULT_THRESHOLD,
                   window_deg: float = DEFAULT_WINDOW_DEG,
                   batch_size: int = PREDICT_BATCH) -> Iterator[tuple]:
    """Yield (timestamp, list[Detection]) per tick."""
    for timestamp, pred, _ in predict_episode(params, episode, batch_size):
        yield timestamp, nms(pred, threshold, window_deg)
