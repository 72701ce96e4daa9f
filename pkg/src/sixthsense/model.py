"""Dilated circular 1D fully-convolutional network over 360 LiDAR rays.

Seven hidden conv layers (32 channels each, kernels growing 3 to 7,
wrap-around padding) followed by layer normalization over the channel
axis at every ray and a rectifier.  A 1x1 head projects to four per-ray
outputs: presence logit, distance logit, bearing sine, bearing cosine.
Normalizing over channels per position (not over positions) keeps the
whole network exactly equivariant to rotations of the input ring.

Arrays are channels-last: activations (batch, bins, channels), conv
weights (out, in, kernel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .util import canon_dumps, rng_stream

LN_EPS = 1e-5
HEAD_CHANNELS = 4  # presence, distance, bearing sin, bearing cos
CHECKPOINT_FORMAT = "sixthsense-checkpoint-v1"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 30
    hidden_channels: int = 32
    kernel_sizes: tuple[int, ...] = (3, 3, 5, 5, 5, 7, 7)
    dilations: tuple[int, ...] = (1, 2, 2, 2, 2, 1, 1)
    bins: int = 360
    d_min: float = 0.05  # meters
    d_max: float = 10.0  # meters

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.hidden_channels < 1:
            raise ValueError("hidden_channels must be >= 1")
        if len(self.kernel_sizes) != len(self.dilations):
            raise ValueError(
                f"{len(self.kernel_sizes)} kernel sizes but {len(self.dilations)} dilations"
            )
        if not self.kernel_sizes:
            raise ValueError("need at least one layer")
        for k in self.kernel_sizes:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and positive, got {k}")
        for d in self.dilations:
            if d < 1:
                raise ValueError(f"dilations must be >= 1, got {d}")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not 0 < self.d_min < self.d_max:
            raise ValueError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "hidden_channels": self.hidden_channels,
            "kernel_sizes": list(self.kernel_sizes),
            "dilations": list(self.dilations),
            "bins": self.bins,
            "d_min": self.d_min,
            "d_max": self.d_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(
            in_channels=data["in_channels"],
            hidden_channels=data["hidden_channels"],
            kernel_sizes=tuple(data["kernel_sizes"]),
            dilations=tuple(data["dilations"]),
            bins=data["bins"],
            d_min=data["d_min"],
            d_max=data["d_max"],
        )


def receptive_field(config: ModelConfig) -> int:
    """Receptive field in bins (equals degrees at 1-degree bins)."""
    return 1 + sum((k - 1) * d for k, d in zip(config.kernel_sizes, config.dilations))


@dataclass
class LayerParams:
    weights: np.ndarray  # (out, in, kernel)
    bias: np.ndarray  # (out,)
    ln_gain: np.ndarray  # (out,)
    ln_shift: np.ndarray  # (out,)


@dataclass
class ModelParams:
    config: ModelConfig
    layers: list[LayerParams]
    head_weights: np.ndarray  # (HEAD_CHANNELS, hidden)
    head_bias: np.ndarray  # (HEAD_CHANNELS,)

    def named_arrays(self):
        """(name, array) pairs in the fixed serialization order."""
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}.weights", layer.weights
            yield f"layers.{i}.bias", layer.bias
            yield f"layers.{i}.ln_gain", layer.ln_gain
            yield f"layers.{i}.ln_shift", layer.ln_shift
        yield "head.weights", self.head_weights
        yield "head.bias", self.head_bias

    def arrays(self) -> list[np.ndarray]:
        return [arr for _, arr in self.named_arrays()]

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            config=self.config,
            layers=[
                LayerParams(
                    weights=l.weights.astype(dtype),
                    bias=l.bias.astype(dtype),
                    ln_gain=l.ln_gain.astype(dtype),
                    ln_shift=l.ln_shift.astype(dtype),
                )
                for l in self.layers
            ],
            head_weights=self.head_weights.astype(dtype),
            head_bias=self.head_bias.astype(dtype),
        )

    def copy(self) -> "ModelParams":
        return self.astype(self.head_weights.dtype)

    @property
    def dtype(self):
        return self.head_weights.dtype


def param_count(config: ModelConfig) -> int:
    total = 0
    ci = config.in_channels
    co = config.hidden_channels
    for k in config.kernel_sizes:
        total += co * ci * k + 3 * co  # weights + bias + ln gain/shift
        ci = co
    total += HEAD_CHANNELS * co + HEAD_CHANNELS
    return total


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform fan-in init (+-sqrt(6/fan_in)), zero biases, identity norm."""
    rng = rng_stream(seed, "model-init")
    layers = []
    ci = config.in_channels
    co = config.hidden_channels
    for k in config.kernel_sizes:
        bound = np.sqrt(6.0 / (ci * k))
        layers.append(
            LayerParams(
                weights=rng.uniform(-bound, bound, size=(co, ci, k)),
                bias=np.zeros(co),
                ln_gain=np.ones(co),
                ln_shift=np.zeros(co),
            )
        )
        ci = co
    bound = np.sqrt(6.0 / co)
    return ModelParams(
        config=config,
        layers=layers,
        head_weights=rng.uniform(-bound, bound, size=(HEAD_CHANNELS, co)),
        head_bias=np.zeros(HEAD_CHANNELS),
    )


@dataclass
class PredictionTensor:
    presence: np.ndarray  # sigmoid, in (0,1)
    distance: np.ndarray  # meters, in (d_min, d_max)
    bearing_sin: np.ndarray  # raw regression output
    bearing_cos: np.ndarray  # raw regression output


@dataclass
class ForwardCache:
    """Activations retained for the backward pass."""

    inputs: list = field(default_factory=list)  # input to each conv layer
    zhats: list = field(default_factory=list)  # normalized pre-activations
    inv_stds: list = field(default_factory=list)  # (B, T, 1) per layer
    relu_masks: list = field(default_factory=list)
    trunk: np.ndarray | None = None  # (B, T, hidden) final trunk output
    raw: np.ndarray | None = None  # (B, T, HEAD_CHANNELS)
    presence: np.ndarray | None = None
    dist_sig: np.ndarray | None = None


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    np.exp(-x, where=pos, out=out)
    out[pos] = 1.0 / (1.0 + out[pos])
    neg = ~pos
    ex = np.exp(x, where=neg, out=np.empty_like(x))
    out[neg] = ex[neg] / (1.0 + ex[neg])
    return out


def forward_batch(params: ModelParams, x: np.ndarray, want_cache: bool = False):
    """Run the network on a (batch, bins, in_channels) array.

    Returns (PredictionTensor with (batch, bins) fields, ForwardCache or
    None).  Raises ArithmeticError naming the first layer whose output is
    not finite.
    """
    cfg = params.config
    if x.ndim != 3:
        raise ValueError(f"expected (batch, bins, channels), got shape {x.shape}")
    if x.shape[1] != cfg.bins or x.shape[2] != cfg.in_channels:
        raise ValueError(
            f"expected bins={cfg.bins}, channels={cfg.in_channels}, got {x.shape}"
        )
    dtype = params.dtype
    h = np.ascontiguousarray(x, dtype=dtype)
    cache = ForwardCache() if want_cache else None

    for i, (layer, k, d) in enumerate(
        zip(params.layers, cfg.kernel_sizes, cfg.dilations)
    ):
        z = kernels.conv_forward(h, layer.weights, layer.bias, d)
        mu = z.mean(axis=2, keepdims=True)
        zc = z - mu
        var = np.mean(zc * zc, axis=2, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=dtype))
        zhat = zc * inv_std
        a = zhat * layer.ln_gain + layer.ln_shift
        mask = a > 0
        if not np.isfinite(a).all():
            raise ArithmeticError(f"non-finite activation in layer {i}")
        if cache is not None:
            cache.inputs.append(h)
            cache.zhats.append(zhat)
            cache.inv_stds.append(inv_std)
            cache.relu_masks.append(mask)
        h = np.where(mask, a, np.asarray(0, dtype=dtype))

    raw = h @ params.head_weights.T.astype(dtype) + params.head_bias.astype(dtype)
    if not np.isfinite(raw).all():
        raise ArithmeticError("non-finite activation in output head")
    presence = sigmoid(raw[:, :, 0])
    dist_sig = sigmoid(raw[:, :, 1])
    distance = cfg.d_min + dist_sig * (cfg.d_max - cfg.d_min)
    pred = PredictionTensor(
        presence=presence,
        distance=distance,
        bearing_sin=raw[:, :, 2],
        bearing_cos=raw[:, :, 3],
    )
    if cache is not None:
        cache.trunk = h
        cache.raw = raw
        cache.presence = presence
        cache.dist_sig = dist_sig
    return pred, cache


def forward(params: ModelParams, window: np.ndarray) -> PredictionTensor:
    """Run the network on one (channels, bins) scan window."""
    w = np.asarray(window)
    if w.ndim != 2:
        raise ValueError(f"expected (channels, bins), got shape {w.shape}")
    pred, _ = forward_batch(params, w.T[None, :, :])
    return PredictionTensor(
        presence=pred.presence[0],
        distance=pred.distance[0],
        bearing_sin=pred.bearing_sin[0],
        bearing_cos=pred.bearing_cos[0],
    )


def save_params(params: ModelParams, path) -> None:
    """Write a checkpoint: one JSON header line, then raw little-endian
    float64 tensor data at the offsets the header declares."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in params.named_arrays():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "format": CHECKPOINT_FORMAT,
        "dtype": "<f8",
        "config": params.config.to_dict(),
        "tensors": entries,
        "data_bytes": offset,
    }
    with open(path, "wb") as fh:
        fh.write(canon_dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_params(path) -> ModelParams:
    """Read a checkpoint written by save_params (float64 parameters)."""
    import json

    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValueError(f"{path}: missing checkpoint header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed checkpoint header: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    payload = raw[newline + 1 :]
    if len(payload) != header["data_bytes"]:
        raise ValueError(
            f"{path}: expected {header['data_bytes']} data bytes, found {len(payload)}"
        )
    config = ModelConfig.from_dict(header["config"])
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)

    layers = []
    for i in range(len(config.kernel_sizes)):
        layers.append(
            LayerParams(
                weights=arrays[f"layers.{i}.weights"],
                bias=arrays[f"layers.{i}.bias"],
                ln_gain=arrays[f"layers.{i}.ln_gain"],
                ln_shift=arrays[f"layers.{i}.ln_shift"],
            )
        )
    return ModelParams(
        config=config,
        layers=layers,
        head_weights=arrays["head.weights"],
        head_bias=arrays["head.bias"],
    )
