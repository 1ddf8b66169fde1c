"""Pure-NumPy convolution kernels.

Drop-in replacement for the compiled extension. The grid and transposed
convolution forwards follow the same canonical accumulation order as the
native kernels (bias first, then ascending kernel-position/input-channel
order per output element) so both backends produce bit-identical results
there. The image convolution uses im2col + BLAS, which is much faster but
makes no bit-level ordering promise.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "fallback"


def _c64(a):
    return None if a is None else np.ascontiguousarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# Image convolution (NHWC, same padding)
# ---------------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int, stride: int) -> np.ndarray:
    b, _, _, ci = xp.shape
    s0, s1, s2, s3 = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, ho, wo, kh, kw, ci),
        strides=(s0, stride * s1, stride * s2, s1, s2, s3),
        writeable=False,
    )
    return np.ascontiguousarray(cols).reshape(b * ho * wo, kh * kw * ci)


def conv2d_forward(x, w, bias, stride):
    x = _c64(x); w = _c64(w); bias = _c64(bias)
    b, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    ph, pw = kh // 2, kw // 2
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (wd + 2 * pw - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    cols = _im2col(xp, kh, kw, ho, wo, stride)
    y = cols @ w.reshape(kh * kw * ci, co)
    y = y.reshape(b, ho, wo, co)
    if bias is not None:
        y += bias
    return y


def conv2d_backward(x, w, gy, stride):
    x = _c64(x); w = _c64(w)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    b, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    ph, pw = kh // 2, kw // 2
    _, ho, wo, _ = gy.shape
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    cols = _im2col(xp, kh, kw, ho, wo, stride)
    gmat = gy.reshape(b * ho * wo, co)

    gw = (cols.T @ gmat).reshape(kh, kw, ci, co)
    gb = gy.sum(axis=(0, 1, 2))

    gcols = (gmat @ w.reshape(kh * kw * ci, co).T).reshape(b, ho, wo, kh, kw, ci)
    gxp = np.zeros_like(xp)
    for ik in range(kh):
        for jk in range(kw):
            gxp[:, ik:ik + ho * stride:stride, jk:jk + wo * stride:stride, :] += gcols[:, :, :, ik, jk, :]
    gx = gxp[:, ph:ph + h, pw:pw + wd, :]
    return np.ascontiguousarray(gx), gw, gb


# ---------------------------------------------------------------------------
# Speaker x time grid convolution (same padding on both axes)
# ---------------------------------------------------------------------------


def conv_grid_forward(x, w, bias):
    x = _c64(x); w = _c64(w); bias = _c64(bias)
    b, s, t, ci = x.shape
    ks, kt, _, co = w.shape
    ps, pt = ks // 2, kt // 2
    y = np.zeros((b, s, t, co))
    if bias is not None:
        y += bias
    xp = np.pad(x, ((0, 0), (ps, ps), (pt, pt), (0, 0)))
    # Ordered accumulation: each += is elementwise, so every output element
    # receives its contributions in exact (ds, dt, c) order.
    for ds in range(ks):
        for dt in range(kt):
            xs = xp[:, ds:ds + s, dt:dt + t, :]
            for c in range(ci):
                y += xs[..., c:c + 1] * w[ds, dt, c, :]
    return y


def conv_grid_backward(x, w, gy):
    x = _c64(x); w = _c64(w)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    b, s, t, ci = x.shape
    ks, kt, _, co = w.shape
    ps, pt = ks // 2, kt // 2
    xp = np.pad(x, ((0, 0), (ps, ps), (pt, pt), (0, 0)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for ds in range(ks):
        for dt in range(kt):
            xs = xp[:, ds:ds + s, dt:dt + t, :]
            gw[ds, dt] = np.tensordot(xs, gy, axes=([0, 1, 2], [0, 1, 2]))
            gxp[:, ds:ds + s, dt:dt + t, :] += gy @ w[ds, dt].T
    gx = gxp[:, ps:ps + s, pt:pt + t, :]
    gb = gy.sum(axis=(0, 1, 2))
    return np.ascontiguousarray(gx), gw, gb


# ---------------------------------------------------------------------------
# Transposed temporal convolution
# ---------------------------------------------------------------------------


def _upconv_spans(tin: int, tout: int, k: int, stride: int):
    """Valid (input index, output index) ranges per kernel offset d."""
    pad = (k - stride) // 2
    spans = []
    for d in range(k):
        tins = np.arange(tin)
        touts = tins * stride + d - pad
        m = (touts >= 0) & (touts < tout)
        spans.append((tins[m], touts[m]))
    return spans


def upconv1d_forward(x, w, bias, stride):
    x = _c64(x); w = _c64(w); bias = _c64(bias)
    b, tin, ci = x.shape
    k, _, co = w.shape
    tout = tin * stride
    y = np.zeros((b, tout, co))
    if bias is not None:
        y += bias
    # Ordered accumulation: ascending (d, c) per output element; each output
    # index receives at most one contribution per d, so elementwise += keeps
    # the canonical order.
    for d, (tins, touts) in enumerate(_upconv_spans(tin, tout, k, stride)):
        if tins.size == 0:
            continue
        xs = x[:, tins, :]
        for c in range(ci):
            y[:, touts, :] += xs[:, :, c:c + 1] * w[d, c, :]
    return y


def upconv1d_backward(x, w, gy, stride):
    x = _c64(x); w = _c64(w)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    b, tin, ci = x.shape
    k, _, co = w.shape
    tout = tin * stride
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for d, (tins, touts) in enumerate(_upconv_spans(tin, tout, k, stride)):
        if tins.size == 0:
            continue
        gslice = gy[:, touts, :]
        gx[:, tins, :] += gslice @ w[d].T
        gw[d] = np.tensordot(x[:, tins, :], gslice, axes=([0, 1], [0, 1]))
    gb = gy.sum(axis=(0, 1))
    return gx, gw, gb
