"""Masked squared-error training of the ray detector.

The loss only reads rays inside the camera mask: presence error over all
masked rays, distance and bearing errors over masked rays whose label
says a person is present.  Each term is a per-sample mean over its ray
set (empty sets contribute zero), averaged over the batch.  Gradients
are exact reverse-mode derivations through the head, layer norm,
rectifier, and circular convolutions.  The loop is single-threaded and
deterministic: shuffling and augmentation draw from one named RNG
stream, and all reductions run in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import (
    ModelConfig,
    ModelParams,
    PredictionTensor,
    forward_batch,
    init_params,
)
from .util import format_float, get_logger, rng_stream

log = get_logger("training")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    noise_sigma: float = 0.02  # meters, additive range noise
    mirror_prob: float = 0.5
    batch_size: int = 32
    rng_seed: int = 0
    dtype: str = "float32"  # compute dtype; checkpoints stay float64

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 <= self.mirror_prob <= 1:
            raise ValueError(f"mirror_prob must be in [0,1], got {self.mirror_prob}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if np.dtype(self.dtype) not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "noise_sigma": self.noise_sigma,
            "mirror_prob": self.mirror_prob,
            "batch_size": self.batch_size,
            "rng_seed": self.rng_seed,
            "dtype": self.dtype,
        }


@dataclass(frozen=True)
class LossBreakdown:
    presence_loss: float
    distance_loss: float
    bearing_loss: float
    total: float

    @classmethod
    def from_terms(cls, presence, distance, bearing) -> "LossBreakdown":
        p, d, b = float(presence), float(distance), float(bearing)
        return cls(p, d, b, p + d + b)

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.total))


@dataclass
class LabelBatch:
    """Stacked per-ray labels, each array (batch, bins)."""

    presence: np.ndarray
    distance: np.ndarray  # meters, zero-filled where presence is 0
    bearing_sin: np.ndarray
    bearing_cos: np.ndarray
    mask: np.ndarray

    @classmethod
    def stack(cls, labels) -> "LabelBatch":
        """Stack an iterable of per-sample label objects with (bins,) fields."""
        return cls(
            presence=np.stack([l.presence for l in labels]),
            distance=np.stack([l.distance for l in labels]),
            bearing_sin=np.stack([l.bearing_sin for l in labels]),
            bearing_cos=np.stack([l.bearing_cos for l in labels]),
            mask=np.stack([l.mask for l in labels]),
        )

    def take(self, idx) -> "LabelBatch":
        return LabelBatch(
            presence=self.presence[idx],
            distance=self.distance[idx],
            bearing_sin=self.bearing_sin[idx],
            bearing_cos=self.bearing_cos[idx],
            mask=self.mask[idx],
        )

    def astype(self, dtype) -> "LabelBatch":
        return LabelBatch(
            presence=self.presence.astype(dtype),
            distance=self.distance.astype(dtype),
            bearing_sin=self.bearing_sin.astype(dtype),
            bearing_cos=self.bearing_cos.astype(dtype),
            mask=self.mask.astype(dtype),
        )

    def __len__(self) -> int:
        return self.presence.shape[0]


def _ray_sets(labels: LabelBatch):
    masked = labels.mask > 0.5
    present = masked & (labels.presence > 0.5)
    return masked, present


def masked_loss(pred: PredictionTensor, labels: LabelBatch, d_min: float,
                d_max: float) -> LossBreakdown:
    """Camera-masked squared error, averaged over the batch."""
    masked, present = _ray_sets(labels)
    n_masked = masked.sum(axis=1)
    n_present = present.sum(axis=1)

    dp = np.where(masked, pred.presence - labels.presence, 0.0)
    pres = (dp * dp).sum(axis=1, dtype=np.float64)
    pres = np.where(n_masked > 0, pres / np.maximum(n_masked, 1), 0.0)

    scale = d_max - d_min
    dd = np.where(present, (pred.distance - labels.distance) / scale, 0.0)
    dist = (dd * dd).sum(axis=1, dtype=np.float64)
    ds = np.where(present, pred.bearing_sin - labels.bearing_sin, 0.0)
    dc = np.where(present, pred.bearing_cos - labels.bearing_cos, 0.0)
    bear = (ds * ds + dc * dc).sum(axis=1, dtype=np.float64)
    denom = np.maximum(n_present, 1)
    dist = np.where(n_present > 0, dist / denom, 0.0)
    bear = np.where(n_present > 0, bear / denom, 0.0)

    return LossBreakdown.from_terms(pres.mean(), dist.mean(), bear.mean())


def backward(params: ModelParams, cache, labels: LabelBatch):
    """Gradients of masked_loss w.r.t. every parameter.

    `cache` comes from forward_batch(..., want_cache=True) on the same
    inputs.  Returns arrays in params.named_arrays() order.
    """
    cfg = params.config
    dtype = params.dtype
    batch = cache.raw.shape[0]
    masked, present = _ray_sets(labels)
    n_masked = masked.sum(axis=1)
    n_present = present.sum(axis=1)
    # per-sample term normalizers folded with the batch mean
    inv_m = np.where(n_masked > 0, 1.0 / (np.maximum(n_masked, 1) * batch), 0.0)
    inv_p = np.where(n_present > 0, 1.0 / (np.maximum(n_present, 1) * batch), 0.0)
    inv_m = inv_m[:, None].astype(dtype)
    inv_p = inv_p[:, None].astype(dtype)

    scale = dtype.type(cfg.d_max - cfg.d_min)
    p_hat = cache.presence
    s_dist = cache.dist_sig
    d_hat = cfg.d_min + s_dist * scale

    g_raw = np.empty_like(cache.raw)
    g_raw[:, :, 0] = np.where(
        masked, 2.0 * (p_hat - labels.presence) * p_hat * (1.0 - p_hat), 0.0
    ) * inv_m
    g_raw[:, :, 1] = np.where(
        present,
        2.0 * (d_hat - labels.distance) * s_dist * (1.0 - s_dist) / scale,
        0.0,
    ) * inv_p
    g_raw[:, :, 2] = np.where(
        present, 2.0 * (cache.raw[:, :, 2] - labels.bearing_sin), 0.0
    ) * inv_p
    g_raw[:, :, 3] = np.where(
        present, 2.0 * (cache.raw[:, :, 3] - labels.bearing_cos), 0.0
    ) * inv_p

    g_head_w = np.tensordot(g_raw, cache.trunk, axes=([0, 1], [0, 1]))
    g_head_b = g_raw.sum(axis=(0, 1))
    g_h = g_raw @ params.head_weights.astype(dtype)

    grads_rev = []
    for i in reversed(range(len(params.layers))):
        layer = params.layers[i]
        zhat = cache.zhats[i]
        g_a = np.where(cache.relu_masks[i], g_h, dtype.type(0))
        g_gain = (g_a * zhat).sum(axis=(0, 1))
        g_shift = g_a.sum(axis=(0, 1))
        g_zhat = g_a * layer.ln_gain
        g_z = cache.inv_stds[i] * (
            g_zhat
            - g_zhat.mean(axis=2, keepdims=True)
            - zhat * (g_zhat * zhat).mean(axis=2, keepdims=True)
        )
        g_w, g_b = kernels.conv_backward_weights(
            cache.inputs[i], g_z, cfg.kernel_sizes[i], cfg.dilations[i]
        )
        grads_rev.append((g_w, g_b, g_gain, g_shift))
        if i > 0:  # the data gradient below layer 0 is never used
            g_h = kernels.conv_backward_input(g_z, layer.weights, cfg.dilations[i])

    out: list[np.ndarray] = []
    for g_w, g_b, g_gain, g_shift in reversed(grads_rev):
        out.extend([g_w, g_b, g_gain, g_shift])
    out.extend([g_head_w, g_head_b])
    for g in out:
        if not np.isfinite(g).all():
            raise ArithmeticError("non-finite gradient")
    return out


def loss_and_gradients(params: ModelParams, x: np.ndarray, labels: LabelBatch):
    """Forward + loss + backward on one batch."""
    pred, cache = forward_batch(params, x, want_cache=True)
    loss = masked_loss(pred, labels, params.config.d_min, params.config.d_max)
    grads = backward(params, cache, labels)
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def init(cls, params: ModelParams) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
        )


def adam_step(params: ModelParams, grads, state: AdamState, t: int,
              config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place on params (t starts at 1)."""
    if t < 1:
        raise ValueError(f"Adam step index starts at 1, got {t}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    lr, eps = config.learning_rate, config.adam_eps
    for p, g, m, v in zip(params.arrays(), grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def mirror_index(bins: int = 360) -> np.ndarray:
    """Index map reflecting the ray ring about the forward axis."""
    return (bins - np.arange(bins)) % bins


def augment(window: np.ndarray, labels, rng: np.random.Generator,
            config: TrainConfig, d_min: float, d_max: float):
    """Mirror (with probability mirror_prob) then add clamped range noise.

    `window` is (channels, bins); `labels` is any object with per-ray
    arrays presence/distance/bearing_sin/bearing_cos/mask.  Label values
    are never noised; only the window ranges are.
    """
    idx = mirror_index(window.shape[1])
    w = window.copy()
    lab = labels.__class__(
        presence=labels.presence.copy(),
        distance=labels.distance.copy(),
        bearing_sin=labels.bearing_sin.copy(),
        bearing_cos=labels.bearing_cos.copy(),
        mask=labels.mask.copy(),
    )
    if rng.random() < config.mirror_prob:
        w = w[:, idx]
        lab.presence = lab.presence[idx]
        lab.distance = lab.distance[idx]
        lab.bearing_sin = -lab.bearing_sin[idx]
        lab.bearing_cos = lab.bearing_cos[idx]
        lab.mask = lab.mask[idx]
    noise = rng.normal(0.0, config.noise_sigma, size=w.shape)
    w = np.clip(w + noise, d_min, d_max)
    return w, lab


def _augment_batch(x: np.ndarray, labels: LabelBatch, rng: np.random.Generator,
                   config: TrainConfig, d_min: float, d_max: float) -> np.ndarray:
    """Vectorized augment over a (batch, bins, channels) copy, in place on
    labels; returns the augmented windows."""
    batch = x.shape[0]
    idx = mirror_index(x.shape[1])
    flip = rng.random(batch) < config.mirror_prob
    if flip.any():
        sel = np.flatnonzero(flip)
        x[sel] = x[sel][:, idx, :]
        labels.presence[sel] = labels.presence[sel][:, idx]
        labels.distance[sel] = labels.distance[sel][:, idx]
        labels.bearing_sin[sel] = -labels.bearing_sin[sel][:, idx]
        labels.bearing_cos[sel] = labels.bearing_cos[sel][:, idx]
        labels.mask[sel] = labels.mask[sel][:, idx]
    gen_dtype = np.float32 if x.dtype == np.float32 else np.float64
    noise = rng.standard_normal(x.shape, dtype=gen_dtype)
    x += config.noise_sigma * noise
    np.clip(x, d_min, d_max, out=x)
    return x


@dataclass
class EpochStats:
    epoch: int
    train: LossBreakdown
    val: LossBreakdown


@dataclass
class TrainResult:
    params: ModelParams  # lowest-validation-loss weights
    best_epoch: int
    best_val: float
    history: list[EpochStats] = field(default_factory=list)
    diverged: bool = False


def evaluate_loss(params: ModelParams, x: np.ndarray, labels: LabelBatch,
                  batch_size: int) -> LossBreakdown:
    """Unaugmented loss over a dataset, batched, sample-weighted."""
    total = np.zeros(3)
    count = 0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        lb = labels.take(slice(start, start + batch_size))
        pred, _ = forward_batch(params, xb)
        loss = masked_loss(pred, lb, params.config.d_min, params.config.d_max)
        n = xb.shape[0]
        total += n * np.array([loss.presence_loss, loss.distance_loss, loss.bearing_loss])
        count += n
    total /= max(count, 1)
    return LossBreakdown.from_terms(*total)


def train(x_train: np.ndarray, labels_train: LabelBatch, x_val: np.ndarray,
          labels_val: LabelBatch, model_config: ModelConfig,
          config: TrainConfig) -> TrainResult:
    """Full training loop with best-validation checkpoint selection.

    On divergence (non-finite training loss) the loop stops and the best
    checkpoint so far is returned with `diverged` set.
    """
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("train and validation datasets must be non-empty")
    dtype = np.dtype(config.dtype)
    x_train = np.ascontiguousarray(x_train, dtype=dtype)
    x_val = np.ascontiguousarray(x_val, dtype=dtype)
    labels_train = labels_train.astype(dtype)
    labels_val = labels_val.astype(dtype)

    params = init_params(model_config, config.rng_seed).astype(dtype)
    state = AdamState.init(params)
    rng = rng_stream(config.rng_seed, "train")
    n = x_train.shape[0]
    d_min, d_max = model_config.d_min, model_config.d_max

    result = TrainResult(params=params.copy(), best_epoch=0, best_val=np.inf)
    step = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        epoch_terms = np.zeros(3)
        seen = 0
        diverged = False
        for start in range(0, n, config.batch_size):
            bidx = perm[start:start + config.batch_size]
            xb = x_train[bidx]
            lb = labels_train.take(bidx)
            xb = _augment_batch(xb, lb, rng, config, d_min, d_max)
            loss, grads = loss_and_gradients(params, xb, lb)
            if not loss.finite:
                log.warning("non-finite loss at epoch %d step %d; stopping", epoch, step)
                diverged = True
                break
            step += 1
            adam_step(params, grads, state, step, config)
            nb = xb.shape[0]
            epoch_terms += nb * np.array(
                [loss.presence_loss, loss.distance_loss, loss.bearing_loss]
            )
            seen += nb
        if diverged:
            result.diverged = True
            break
        train_loss = LossBreakdown.from_terms(*(epoch_terms / max(seen, 1)))
        val_loss = evaluate_loss(params, x_val, labels_val, config.batch_size)
        result.history.append(EpochStats(epoch, train_loss, val_loss))
        if val_loss.total < result.best_val:
            result.best_val = val_loss.total
            result.best_epoch = epoch
            result.params = params.copy()
        log.info(
            "epoch %d/%d train %.6f val %.6f (best %.6f @ %d)",
            epoch, config.epochs, train_loss.total, val_loss.total,
            result.best_val, result.best_epoch,
        )
    return result


def write_loss_csv(path, history: list[EpochStats]) -> None:
    """Per-epoch loss log: three terms plus total for train and val."""
    cols = [
        "epoch",
        "train_presence", "train_distance", "train_bearing", "train_total",
        "val_presence", "val_distance", "val_bearing", "val_total",
    ]
    lines = [",".join(cols)]
    for row in history:
        cells = [str(row.epoch)]
        for loss in (row.train, row.val):
            cells.extend(
                format_float(v)
                for v in (loss.presence_loss, loss.distance_loss,
                          loss.bearing_loss, loss.total)
            )
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
