"""Convolution kernel backend selection.

Two interchangeable implementations of the circular dilated conv kernels
exist: a compiled Cython core (built at install time when a C compiler is
available) and a pure-numpy fallback.  Import time picks one; the
``SIXTHSENSE_KERNELS`` environment variable forces the choice:

    auto    compiled core if importable, else numpy (default)
    cython  compiled core, ImportError if the extension is missing
    numpy   pure-numpy fallback

All three entry points accept C-contiguous float32 or float64 arrays and
return arrays of the same dtype.  Shapes follow ``_kernels_np``:
activations are (batch, bins, channels), weights (out, in, kernel).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

_VALID_CHOICES = ("auto", "cython", "numpy")


def _select():
    choice = os.environ.get("SIXTHSENSE_KERNELS", "auto").strip().lower()
    if choice not in _VALID_CHOICES:
        raise ValueError(
            f"SIXTHSENSE_KERNELS must be one of {_VALID_CHOICES}, got {choice!r}"
        )
    if choice in ("auto", "cython"):
        try:
            from . import _convcore

            return "cython", _convcore
        except ImportError:
            if choice == "cython":
                raise
    return "numpy", _kernels_np


_BACKEND_NAME, _impl = _select()


def backend() -> str:
    """Name of the active backend, ``"cython"`` or ``"numpy"``."""
    return _BACKEND_NAME


def _as_compute(arr, name):
    a = np.ascontiguousarray(arr)
    if a.dtype not in (np.float32, np.float64):
        raise TypeError(f"{name} must be float32 or float64, got {a.dtype}")
    return a


def conv_forward(x, weights, bias, dilation):
    """Circular dilated convolution, y = conv(x, w) + b."""
    x = _as_compute(x, "x")
    weights = _as_compute(weights, "weights")
    bias = np.ascontiguousarray(bias, dtype=x.dtype)
    if weights.dtype != x.dtype:
        weights = weights.astype(x.dtype)
    if x.shape[2] != weights.shape[1]:
        raise ValueError(
            f"input has {x.shape[2]} channels, weights expect {weights.shape[1]}"
        )
    return _impl.conv_forward(x, weights, bias, int(dilation))


def conv_backward_input(gy, weights, dilation):
    """Gradient of the conv output w.r.t. its input."""
    gy = _as_compute(gy, "gy")
    weights = _as_compute(weights, "weights")
    if weights.dtype != gy.dtype:
        weights = weights.astype(gy.dtype)
    if gy.shape[2] != weights.shape[0]:
        raise ValueError(
            f"gradient has {gy.shape[2]} channels, weights produce {weights.shape[0]}"
        )
    return _impl.conv_backward_input(gy, weights, int(dilation))


def conv_backward_weights(x, gy, kernel_size, dilation):
    """Gradients of the conv output w.r.t. weights and bias."""
    x = _as_compute(x, "x")
    gy = _as_compute(gy, "gy")
    if gy.dtype != x.dtype:
        gy = gy.astype(x.dtype)
    if x.shape[:2] != gy.shape[:2]:
        raise ValueError(
            f"x and gy disagree on batch/bins: {x.shape[:2]} vs {gy.shape[:2]}"
        )
    return _impl.conv_backward_weights(x, gy, int(kernel_size), int(dilation))
