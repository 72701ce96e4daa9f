# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for circular dilated 1D convolution.

Same contract as ``_kernels_np``: channels-last (batch, bins, channels)
activations, (out, in, kernel) weights, centered taps on a ring.  The
32-channel case (every hidden layer of the detector) gets specialized
loops whose accumulators are compile-time sized, so the C compiler keeps
them in vector registers; other widths fall back to generic loops.
Everything runs sequentially with a fixed accumulation order, so results
are bit-reproducible run to run.
"""

import numpy as np

ctypedef fused real:
    float
    double


cdef inline real* _ptr(real[:, :, ::1] mv) noexcept nogil:
    return &mv[0, 0, 0]


def _padded(x_arr, Py_ssize_t pad):
    """Circularly pad (B, T, C) along the bin axis."""
    if pad == 0:
        return np.ascontiguousarray(x_arr)
    return np.ascontiguousarray(
        np.concatenate([x_arr[:, -pad:, :], x_arr, x_arr[:, :pad, :]], axis=1)
    )


# ---------------------------------------------------------------------------
# forward

cdef void _fwd_out32(real* xp, real* wt, real* bias, real* y,
                     Py_ssize_t B, Py_ssize_t T, Py_ssize_t Tp,
                     Py_ssize_t Ci, Py_ssize_t K, Py_ssize_t dil) noexcept nogil:
    # wt layout (K, Ci, 32); per output bin the 32 accumulators live in
    # registers across the whole tap/channel reduction
    cdef Py_ssize_t b, t, j, c, q
    cdef real xv
    cdef real acc[32]
    cdef real* row
    cdef real* wrow
    cdef real* yrow
    for b in range(B):
        for t in range(T):
            for q in range(32):
                acc[q] = bias[q]
            for j in range(K):
                row = xp + (b * Tp + t + j * dil) * Ci
                wrow = wt + j * Ci * 32
                for c in range(Ci):
                    xv = row[c]
                    for q in range(32):
                        acc[q] = acc[q] + xv * wrow[c * 32 + q]
            yrow = y + (b * T + t) * 32
            for q in range(32):
                yrow[q] = acc[q]


cdef void _fwd_any(real* xp, real* wt, real* bias, real* y,
                   Py_ssize_t B, Py_ssize_t T, Py_ssize_t Tp, Py_ssize_t Ci,
                   Py_ssize_t Co, Py_ssize_t K, Py_ssize_t dil) noexcept nogil:
    cdef Py_ssize_t b, t, j, c, q
    cdef real xv
    cdef real* row
    cdef real* wrow
    cdef real* yrow
    for b in range(B):
        for t in range(T):
            yrow = y + (b * T + t) * Co
            for q in range(Co):
                yrow[q] = bias[q]
            for j in range(K):
                row = xp + (b * Tp + t + j * dil) * Ci
                wrow = wt + j * Ci * Co
                for c in range(Ci):
                    xv = row[c]
                    for q in range(Co):
                        yrow[q] = yrow[q] + xv * wrow[c * Co + q]


def conv_forward(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] bias, int dilation):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Ci = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t pad = (K // 2) * dilation
    cdef Py_ssize_t Tp = T + 2 * pad

    dtype = np.float32 if real is float else np.float64
    xp_arr = _padded(np.asarray(x), pad)
    # taps-first, output-channel-last so the inner loop is contiguous
    wt_arr = np.ascontiguousarray(np.asarray(w).transpose(2, 1, 0))
    y_arr = np.empty((B, T, Co), dtype=dtype)

    cdef real[:, :, ::1] xp = xp_arr
    cdef real[:, :, ::1] wt = wt_arr
    cdef real[:, :, ::1] y = y_arr
    cdef real[::1] bv = bias

    with nogil:
        if Co == 32:
            _fwd_out32(_ptr(xp), _ptr(wt), &bv[0], _ptr(y), B, T, Tp, Ci, K, dilation)
        else:
            _fwd_any(_ptr(xp), _ptr(wt), &bv[0], _ptr(y), B, T, Tp, Ci, Co, K, dilation)
    return y_arr


# ---------------------------------------------------------------------------
# gradient w.r.t. input

cdef void _gin_in32(real* gp, real* wf, real* gx,
                    Py_ssize_t B, Py_ssize_t T, Py_ssize_t Tp,
                    Py_ssize_t Co, Py_ssize_t K, Py_ssize_t dil) noexcept nogil:
    # wf layout (K, Co, 32) with taps already flipped
    cdef Py_ssize_t b, s, j, o, q
    cdef real gv
    cdef real acc[32]
    cdef real* grow
    cdef real* wrow
    cdef real* out
    for b in range(B):
        for s in range(T):
            for q in range(32):
                acc[q] = 0
            for j in range(K):
                grow = gp + (b * Tp + s + j * dil) * Co
                wrow = wf + j * Co * 32
                for o in range(Co):
                    gv = grow[o]
                    for q in range(32):
                        acc[q] = acc[q] + gv * wrow[o * 32 + q]
            out = gx + (b * T + s) * 32
            for q in range(32):
                out[q] = acc[q]


cdef void _gin_any(real* gp, real* wf, real* gx,
                   Py_ssize_t B, Py_ssize_t T, Py_ssize_t Tp, Py_ssize_t Co,
                   Py_ssize_t Ci, Py_ssize_t K, Py_ssize_t dil) noexcept nogil:
    cdef Py_ssize_t b, s, j, o, q
    cdef real gv
    cdef real* grow
    cdef real* wrow
    cdef real* out
    for b in range(B):
        for s in range(T):
            out = gx + (b * T + s) * Ci
            for q in range(Ci):
                out[q] = 0
            for j in range(K):
                grow = gp + (b * Tp + s + j * dil) * Co
                wrow = wf + j * Co * Ci
                for o in range(Co):
                    gv = grow[o]
                    for q in range(Ci):
                        out[q] = out[q] + gv * wrow[o * Ci + q]


def conv_backward_input(real[:, :, ::1] gy, real[:, :, ::1] w, int dilation):
    cdef Py_ssize_t B = gy.shape[0], T = gy.shape[1], Co = gy.shape[2]
    cdef Py_ssize_t Ci = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t pad = (K // 2) * dilation
    cdef Py_ssize_t Tp = T + 2 * pad

    dtype = np.float32 if real is float else np.float64
    gp_arr = _padded(np.asarray(gy), pad)
    # tap-flipped weights, input-channel-last: wf[j, o, c] = w[o, c, K-1-j]
    wf_arr = np.ascontiguousarray(np.asarray(w)[:, :, ::-1].transpose(2, 0, 1))
    gx_arr = np.empty((B, T, Ci), dtype=dtype)

    cdef real[:, :, ::1] gp = gp_arr
    cdef real[:, :, ::1] wf = wf_arr
    cdef real[:, :, ::1] gx = gx_arr

    with nogil:
        if Ci == 32:
            _gin_in32(_ptr(gp), _ptr(wf), _ptr(gx), B, T, Tp, Co, K, dilation)
        else:
            _gin_any(_ptr(gp), _ptr(wf), _ptr(gx), B, T, Tp, Co, Ci, K, dilation)
    return gx_arr


# ---------------------------------------------------------------------------
# gradient w.r.t. weights

cdef void _gw_in32(real* xp, real* gy, real* gwt,
                   Py_ssize_t B, Py_ssize_t T, Py_ssize_t Tp,
                   Py_ssize_t Co, Py_ssize_t K, Py_ssize_t dil) noexcept nogil:
    # gwt layout (K, Co, 32); one pass over the batch per tap keeps the
    # whole tap slab hot in L1
    cdef Py_ssize_t b, t, j, o, q
    cdef real coef
    cdef real* row
    cdef real* grow
    cdef real* slab
    for j in range(K):
        slab = gwt + j * Co * 32
        for b in range(B):
            for t in range(T):
                row = xp + (b * Tp + t + j * dil) * 32
                grow = gy + (b * T + t) * Co
                for o in range(Co):
                    coef = grow[o]
                    for q in range(32):
                        slab[o * 32 + q] = slab[o * 32 + q] + coef * row[q]


cdef void _gw_any(real* xp, real* gy, real* gwt,
                  Py_ssize_t B, Py_ssize_t T, Py_ssize_t Tp, Py_ssize_t Ci,
                  Py_ssize_t Co, Py_ssize_t K, Py_ssize_t dil) noexcept nogil:
    cdef Py_ssize_t b, t, j, o, q
    cdef real coef
    cdef real* row
    cdef real* grow
    cdef real* slab
    for j in range(K):
        slab = gwt + j * Co * Ci
        for b in range(B):
            for t in range(T):
                row = xp + (b * Tp + t + j * dil) * Ci
                grow = gy + (b * T + t) * Co
                for o in range(Co):
                    coef = grow[o]
                    for q in range(Ci):
                        slab[o * Ci + q] = slab[o * Ci + q] + coef * row[q]


def conv_backward_weights(real[:, :, ::1] x, real[:, :, ::1] gy, int kernel_size,
                          int dilation):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Ci = x.shape[2]
    cdef Py_ssize_t Co = gy.shape[2], K = kernel_size
    cdef Py_ssize_t pad = (K // 2) * dilation
    cdef Py_ssize_t Tp = T + 2 * pad

    dtype = np.float32 if real is float else np.float64
    xp_arr = _padded(np.asarray(x), pad)
    gwt_arr = np.zeros((K, Co, Ci), dtype=dtype)

    cdef real[:, :, ::1] xp = xp_arr
    cdef real[:, :, ::1] gyv = gy
    cdef real[:, :, ::1] gwt = gwt_arr

    with nogil:
        if Ci == 32:
            _gw_in32(_ptr(xp), _ptr(gyv), _ptr(gwt), B, T, Tp, Co, K, dilation)
        else:
            _gw_any(_ptr(xp), _ptr(gyv), _ptr(gwt), B, T, Tp, Ci, Co, K, dilation)

    gw = np.ascontiguousarray(gwt_arr.transpose(1, 2, 0))
    gb = np.asarray(gy).sum(axis=(0, 1))
    return gw, gb
