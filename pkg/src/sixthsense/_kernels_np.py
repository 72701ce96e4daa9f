"""Numpy fallback for the circular dilated convolution kernels.

All three operations are expressed as one large BLAS matmul over a
circularly padded buffer plus a handful of strided-view accumulations
("kn2row" layout), which keeps the fallback within a small factor of the
compiled core on machines with a decent BLAS.

Conventions shared with the compiled core:

* activations are channels-last arrays of shape (batch, bins, channels),
* weights are (out_channels, in_channels, kernel) with odd kernel sizes,
* tap j of a kernel of size K reads input bin (t + (j - K//2) * dilation)
  modulo the ring length, so outputs stay aligned with inputs,
* every accumulation has a fixed order, so results are bit-reproducible.
"""

from __future__ import annotations

import numpy as np


def _pad_ring(x: np.ndarray, pad: int) -> np.ndarray:
    """Circularly pad the bins axis of (B, T, C) by `pad` on both sides."""
    if pad == 0:
        return x
    b, t, c = x.shape
    out = np.empty((b, t + 2 * pad, c), dtype=x.dtype)
    out[:, pad:pad + t] = x
    out[:, :pad] = x[:, t - pad:]
    out[:, pad + t:] = x[:, :pad]
    return out


def conv_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray, dilation: int) -> np.ndarray:
    """Circular dilated convolution: (B, T, Ci) -> (B, T, Co)."""
    b, t, ci = x.shape
    co, ci_w, k = w.shape
    if ci_w != ci:
        raise ValueError(f"weight expects {ci_w} input channels, got {ci}")
    pad = (k // 2) * dilation
    xp = _pad_ring(x, pad)
    tp = t + 2 * pad
    # z[b, u, j, o] = sum_c xp[b, u, c] * w[o, c, j]
    wmat = np.ascontiguousarray(w.transpose(1, 2, 0).reshape(ci, k * co))
    z = (xp.reshape(b * tp, ci) @ wmat).reshape(b, tp, k, co)
    y = np.empty((b, t, co), dtype=x.dtype)
    y[:] = bias
    for j in range(k):
        off = j * dilation
        y += z[:, off:off + t, j, :]
    return y


def conv_backward_input(gy: np.ndarray, w: np.ndarray, dilation: int) -> np.ndarray:
    """Gradient of the loss w.r.t. the convolution input.

    This is itself a circular convolution of the output gradient with the
    channel-transposed, tap-flipped weights.
    """
    b, t, co = gy.shape
    co_w, ci, k = w.shape
    if co_w != co:
        raise ValueError(f"weight expects {co_w} output channels, got {co}")
    pad = (k // 2) * dilation
    gp = _pad_ring(gy, pad)
    tp = t + 2 * pad
    # flipped taps: gx[b, s, c] = sum_{o, j} gp[b, s + j*d, o] * w[o, c, K-1-j]
    wmat = np.ascontiguousarray(w[:, :, ::-1].transpose(0, 2, 1).reshape(co, k * ci))
    z = (gp.reshape(b * tp, co) @ wmat).reshape(b, tp, k, ci)
    gx = np.zeros((b, t, ci), dtype=gy.dtype)
    for j in range(k):
        off = j * dilation
        gx += z[:, off:off + t, j, :]
    return gx


def conv_backward_weights(x: np.ndarray, gy: np.ndarray, kernel_size: int,
                          dilation: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the loss w.r.t. weights and bias, summed over the batch."""
    b, t, ci = x.shape
    _, _, co = gy.shape
    k = kernel_size
    pad = (k // 2) * dilation
    xp = _pad_ring(x, pad)
    gw = np.empty((co, ci, k), dtype=x.dtype)
    for j in range(k):
        off = j * dilation
        # gw[o, c, j] = sum_{b, t} gy[b, t, o] * xp[b, t + j*d, c]
        gw[:, :, j] = np.tensordot(gy, xp[:, off:off + t, :], axes=([0, 1], [0, 1]))
    gb = gy.sum(axis=(0, 1))
    return gw, gb
