# Compiled convolution kernels. Same contracts as fallback.py; the grid and
# transposed convolution forwards reproduce ordered scalar accumulation
# bit-for-bit (build uses -ffp-contract=off, and inner reductions are written
# so the compiler cannot legally reorder them).

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cnp.import_array()

BACKEND_NAME = "native"


def _c64(a):
    return None if a is None else np.ascontiguousarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# Image convolution (NHWC, same padding)
# ---------------------------------------------------------------------------


def conv2d_forward(x, w, bias, int stride):
    x = _c64(x); w = _c64(w); bias = _c64(bias)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef Py_ssize_t b = xv.shape[0], h = xv.shape[1], wd = xv.shape[2], ci = xv.shape[3]
    cdef Py_ssize_t kh = wv.shape[0], kw = wv.shape[1], co = wv.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t ho = (h + 2 * ph - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pw - kw) // stride + 1
    y = np.empty((b, ho, wo, co), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = y
    cdef double[::1] bv
    cdef const double *bptr = NULL
    if bias is not None:
        bv = bias
        bptr = &bv[0]
    cdef const double *xp0 = &xv[0, 0, 0, 0]
    cdef const double *wp0 = &wv[0, 0, 0, 0]
    cdef double *yp0 = &yv[0, 0, 0, 0]
    cdef Py_ssize_t xsb = h * wd * ci, xsh = wd * ci
    cdef Py_ssize_t wsk = kw * ci * co, wsj = ci * co
    cdef Py_ssize_t ib, oh, ow, ik, jk, c, o, ih, iw
    cdef double xval
    cdef const double *xrow
    cdef const double *wrow
    cdef double *acc
    cdef double *yrow
    with nogil:
        acc = <double *> malloc(co * sizeof(double))
        for ib in range(b):
            for oh in range(ho):
                for ow in range(wo):
                    if bptr != NULL:
                        for o in range(co):
                            acc[o] = bptr[o]
                    else:
                        memset(acc, 0, co * sizeof(double))
                    for ik in range(kh):
                        ih = oh * stride - ph + ik
                        if ih < 0 or ih >= h:
                            continue
                        for jk in range(kw):
                            iw = ow * stride - pw + jk
                            if iw < 0 or iw >= wd:
                                continue
                            xrow = xp0 + ib * xsb + ih * xsh + iw * ci
                            wrow = wp0 + ik * wsk + jk * wsj
                            for c in range(ci):
                                xval = xrow[c]
                                for o in range(co):
                                    acc[o] += xval * wrow[c * co + o]
                    yrow = yp0 + ((ib * ho + oh) * wo + ow) * co
                    for o in range(co):
                        yrow[o] = acc[o]
        free(acc)
    return y


def conv2d_backward(x, w, gy, int stride):
    x = _c64(x); w = _c64(w)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef double[:, :, :, ::1] gv = gy
    cdef Py_ssize_t b = xv.shape[0], h = xv.shape[1], wd = xv.shape[2], ci = xv.shape[3]
    cdef Py_ssize_t kh = wv.shape[0], kw = wv.shape[1], co = wv.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t ho = gv.shape[1], wo = gv.shape[2]
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.asarray(gy).sum(axis=(0, 1, 2))
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gwv = gw
    cdef const double *xp0 = &xv[0, 0, 0, 0]
    cdef const double *wp0 = &wv[0, 0, 0, 0]
    cdef const double *gp0 = &gv[0, 0, 0, 0]
    cdef double *gxp0 = &gxv[0, 0, 0, 0]
    cdef double *gwp0 = &gwv[0, 0, 0, 0]
    cdef Py_ssize_t xsb = h * wd * ci, xsh = wd * ci
    cdef Py_ssize_t wsk = kw * ci * co, wsj = ci * co
    cdef Py_ssize_t ib, oh, ow, ik, jk, c, o, ih, iw
    cdef double xval, gxacc
    cdef const double *grow
    cdef const double *wrow
    cdef double *gxrow
    cdef double *gwrow
    with nogil:
        for ib in range(b):
            for oh in range(ho):
                for ow in range(wo):
                    grow = gp0 + ((ib * ho + oh) * wo + ow) * co
                    for ik in range(kh):
                        ih = oh * stride - ph + ik
                        if ih < 0 or ih >= h:
                            continue
                        for jk in range(kw):
                            iw = ow * stride - pw + jk
                            if iw < 0 or iw >= wd:
                                continue
                            gxrow = gxp0 + ib * xsb + ih * xsh + iw * ci
                            wrow = wp0 + ik * wsk + jk * wsj
                            gwrow = gwp0 + ik * wsk + jk * wsj
                            for c in range(ci):
                                xval = (xp0 + ib * xsb + ih * xsh + iw * ci)[c]
                                gxacc = 0.0
                                for o in range(co):
                                    gwrow[c * co + o] += xval * grow[o]
                                    gxacc += wrow[c * co + o] * grow[o]
                                gxrow[c] += gxacc
    return gx, gw, gb


# ---------------------------------------------------------------------------
# Speaker x time grid convolution
# ---------------------------------------------------------------------------


def conv_grid_forward(x, w, bias):
    x = _c64(x); w = _c64(w); bias = _c64(bias)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef Py_ssize_t b = xv.shape[0], s = xv.shape[1], t = xv.shape[2], ci = xv.shape[3]
    cdef Py_ssize_t ks = wv.shape[0], kt = wv.shape[1], co = wv.shape[3]
    cdef Py_ssize_t ps = ks // 2, pt = kt // 2
    y = np.empty((b, s, t, co), dtype=np.float64)
    cdef double[:, :, :, ::1] yv = y
    cdef double[::1] bv
    cdef const double *bptr = NULL
    if bias is not None:
        bv = bias
        bptr = &bv[0]
    cdef const double *xp0 = &xv[0, 0, 0, 0]
    cdef const double *wp0 = &wv[0, 0, 0, 0]
    cdef double *yp0 = &yv[0, 0, 0, 0]
    cdef Py_ssize_t xsb = s * t * ci, xss = t * ci
    cdef Py_ssize_t wsd = kt * ci * co, wst = ci * co
    cdef Py_ssize_t ib, js, jt, ds, dt, c, o, ss, tt
    cdef double xval
    cdef const double *xrow
    cdef const double *wrow
    cdef double *acc
    cdef double *yrow
    # Canonical order: per output element, bias first, then ascending
    # (ds, dt, c). The o-loop touches independent accumulators, so this nest
    # realizes exactly that order for every output channel.
    with nogil:
        acc = <double *> malloc(co * sizeof(double))
        for ib in range(b):
            for js in range(s):
                for jt in range(t):
                    if bptr != NULL:
                        for o in range(co):
                            acc[o] = bptr[o]
                    else:
                        memset(acc, 0, co * sizeof(double))
                    for ds in range(ks):
                        ss = js - ps + ds
                        if ss < 0 or ss >= s:
                            continue
                        for dt in range(kt):
                            tt = jt - pt + dt
                            if tt < 0 or tt >= t:
                                continue
                            xrow = xp0 + ib * xsb + ss * xss + tt * ci
                            wrow = wp0 + ds * wsd + dt * wst
                            for c in range(ci):
                                xval = xrow[c]
                                for o in range(co):
                                    acc[o] += xval * wrow[c * co + o]
                    yrow = yp0 + ((ib * s + js) * t + jt) * co
                    for o in range(co):
                        yrow[o] = acc[o]
        free(acc)
    return y


def conv_grid_backward(x, w, gy):
    x = _c64(x); w = _c64(w)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = x
    cdef double[:, :, :, ::1] wv = w
    cdef double[:, :, :, ::1] gv = gy
    cdef Py_ssize_t b = xv.shape[0], s = xv.shape[1], t = xv.shape[2], ci = xv.shape[3]
    cdef Py_ssize_t ks = wv.shape[0], kt = wv.shape[1], co = wv.shape[3]
    cdef Py_ssize_t ps = ks // 2, pt = kt // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.asarray(gy).sum(axis=(0, 1, 2))
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, :, :, ::1] gwv = gw
    cdef const double *xp0 = &xv[0, 0, 0, 0]
    cdef const double *wp0 = &wv[0, 0, 0, 0]
    cdef const double *gp0 = &gv[0, 0, 0, 0]
    cdef double *gxp0 = &gxv[0, 0, 0, 0]
    cdef double *gwp0 = &gwv[0, 0, 0, 0]
    cdef Py_ssize_t xsb = s * t * ci, xss = t * ci
    cdef Py_ssize_t wsd = kt * ci * co, wst = ci * co
    cdef Py_ssize_t ib, js, jt, ds, dt, c, o, ss, tt
    cdef double xval, gxacc
    cdef const double *xrow
    cdef const double *wrow
    cdef const double *grow
    cdef double *gxrow
    cdef double *gwrow
    with nogil:
        for ib in range(b):
            for js in range(s):
                for jt in range(t):
                    grow = gp0 + ((ib * s + js) * t + jt) * co
                    for ds in range(ks):
                        ss = js - ps + ds
                        if ss < 0 or ss >= s:
                            continue
                        for dt in range(kt):
                            tt = jt - pt + dt
                            if tt < 0 or tt >= t:
                                continue
                            xrow = xp0 + ib * xsb + ss * xss + tt * ci
                            gxrow = gxp0 + ib * xsb + ss * xss + tt * ci
                            wrow = wp0 + ds * wsd + dt * wst
                            gwrow = gwp0 + ds * wsd + dt * wst
                            for c in range(ci):
                                xval = xrow[c]
                                gxacc = 0.0
                                for o in range(co):
                                    gwrow[c * co + o] += xval * grow[o]
                                    gxacc += wrow[c * co + o] * grow[o]
                                gxrow[c] += gxacc
    return gx, gw, gb


# ---------------------------------------------------------------------------
# Transposed temporal convolution
# ---------------------------------------------------------------------------


def upconv1d_forward(x, w, bias, int stride):
    x = _c64(x); w = _c64(w); bias = _c64(bias)
    cdef double[:, :, ::1] xv = x
    cdef double[:, :, ::1] wv = w
    cdef Py_ssize_t b = xv.shape[0], tin = xv.shape[1], ci = xv.shape[2]
    cdef Py_ssize_t k = wv.shape[0], co = wv.shape[2]
    cdef Py_ssize_t pad = (k - stride) // 2
    cdef Py_ssize_t tout = tin * stride
    y = np.zeros((b, tout, co), dtype=np.float64)
    if bias is not None:
        y += bias
    cdef double[:, :, ::1] yv = y
    cdef Py_ssize_t ib, d, it, ot, c, o
    cdef double xval
    # Canonical order per output element: bias, then ascending (d, c). Each
    # output index receives at most one contribution per d, so looping d
    # outermost realizes that order.
    with nogil:
        for ib in range(b):
            for d in range(k):
                for it in range(tin):
                    ot = it * stride + d - pad
                    if ot < 0 or ot >= tout:
                        continue
                    for c in range(ci):
                        xval = xv[ib, it, c]
                        for o in range(co):
                            yv[ib, ot, o] += xval * wv[d, c, o]
    return y


def upconv1d_backward(x, w, gy, int stride):
    x = _c64(x); w = _c64(w)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, ::1] xv = x
    cdef double[:, :, ::1] wv = w
    cdef double[:, :, ::1] gv = gy
    cdef Py_ssize_t b = xv.shape[0], tin = xv.shape[1], ci = xv.shape[2]
    cdef Py_ssize_t k = wv.shape[0], co = wv.shape[2]
    cdef Py_ssize_t pad = (k - stride) // 2
    cdef Py_ssize_t tout = tin * stride
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.asarray(gy).sum(axis=(0, 1))
    cdef double[:, :, ::1] gxv = gx
    cdef double[:, :, ::1] gwv = gw
    cdef Py_ssize_t ib, d, it, ot, c, o
    cdef double xval, gxacc, g
    with nogil:
        for ib in range(b):
            for d in range(k):
                for it in range(tin):
                    ot = it * stride + d - pad
                    if ot < 0 or ot >= tout:
                        continue
                    for c in range(ci):
                        xval = xv[ib, it, c]
                        gxacc = 0.0
                        for o in range(co):
                            g = gv[ib, ot, o]
                            gwv[d, c, o] += xval * g
                            gxacc += wv[d, c, o] * g
                        gxv[ib, it, c] += gxacc
    return gx, gw, gb
