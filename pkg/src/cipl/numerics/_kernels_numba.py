"""numba-compiled twins of ``_kernels_numpy``."""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(xp, kh, kw, stride, ho, wo):
    b, _, _, c = xp.shape
    cols = np.empty((b, ho, wo, kh * kw * c), dtype=xp.dtype)
    for n in range(b):
        for r in range(ho):
            for q in range(wo):
                for i in range(kh):
                    for j in range(kw):
                        o = (i * kw + j) * c
                        src = xp[n, r * stride + i, q * stride + j]
                        for ch in range(c):
                            cols[n, r, q, o + ch] = src[ch]
    return cols


@njit(cache=True)
def col2im(dcols, hp, wp, kh, kw, stride):
    b, ho, wo, kc = dcols.shape
    c = kc // (kh * kw)
    dxp = np.zeros((b, hp, wp, c), dtype=dcols.dtype)
    # offset-major loop order matches the numpy twin's accumulation order
    for i in range(kh):
        for j in range(kw):
            o = (i * kw + j) * c
            for n in range(b):
                for r in range(ho):
                    for q in range(wo):
                        for ch in range(c):
                            dxp[n, r * stride + i, q * stride + j, ch] += dcols[n, r, q, o + ch]
    return dxp


@njit(cache=True)
def maxpool_forward(x, k):
    b, h, w, c = x.shape
    ho, wo = h // k, w // k
    out = np.empty((b, ho, wo, c), dtype=x.dtype)
    idx = np.empty((b, ho, wo, c), dtype=np.int64)
    for n in range(b):
        for r in range(ho):
            for q in range(wo):
                for ch in range(c):
                    best = x[n, r * k, q * k, ch]
                    bi = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[n, r * k + i, q * k + j, ch]
                            if v > best:
                                best = v
                                bi = i * k + j
                    out[n, r, q, ch] = best
                    idx[n, r, q, ch] = bi
    return out, idx


@njit(cache=True)
def maxpool_backward(dout, idx, h, w, k):
    b, ho, wo, c = dout.shape
    dx = np.zeros((b, h, w, c), dtype=dout.dtype)
    for n in range(b):
        for r in range(ho):
            for q in range(wo):
                for ch in range(c):
                    t = idx[n, r, q, ch]
                    dx[n, r * k + t // k, q * k + t % k, ch] = dout[n, r, q, ch]
    return dx


@njit(cache=True)
def spatial_argmax(s):
    b, p, m = s.shape
    out = np.zeros((b, m), dtype=np.int64)
    for n in range(b):
        for j in range(m):
            best = s[n, 0, j]
            for i in range(1, p):
                if s[n, i, j] > best:
                    best = s[n, i, j]
                    out[n, j] = i
    return out


@njit(cache=True)
def _sqdist_shared(a, b):
    nb, p, d = a.shape
    q = b.shape[0]
    out = np.empty((nb, p, q), dtype=a.dtype)
    for n in range(nb):
        for i in range(p):
            for j in range(q):
                acc = 0.0
                for k in range(d):
                    t = a[n, i, k] - b[j, k]
                    acc += t * t
                out[n, i, j] = acc
    return out


@njit(cache=True)
def _sqdist_batched(a, b):
    nb, p, d = a.shape
    q = b.shape[1]
    out = np.empty((nb, p, q), dtype=a.dtype)
    for n in range(nb):
        for i in range(p):
            for j in range(q):
                acc = 0.0
                for k in range(d):
                    t = a[n, i, k] - b[n, j, k]
                    acc += t * t
                out[n, i, j] = acc
    return out


def sqdist(a, b):
    if b.ndim == 2:
        return _sqdist_shared(a, b)
    return _sqdist_batched(a, b)


@njit(cache=True)
def _reflect(v, n):
    if n == 1:
        return 0.0
    period = 2.0 * (n - 1)
    v = abs(v) % period
    if v > n - 1:
        v = period - v
    return v


@njit(cache=True)
def _warp_affine(img, m, out_h, out_w):
    h, w, c = img.shape
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for r in range(out_h):
        for q in range(out_w):
            sx = _reflect(m[0, 0] * q + m[0, 1] * r + m[0, 2], w)
            sy = _reflect(m[1, 0] * q + m[1, 1] * r + m[1, 2], h)
            x0 = min(int(np.floor(sx)), w - 1)
            y0 = min(int(np.floor(sy)), h - 1)
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = sx - x0
            fy = sy - y0
            for ch in range(c):
                top = img[y0, x0, ch] * (1.0 - fx) + img[y0, x1, ch] * fx
                bot = img[y1, x0, ch] * (1.0 - fx) + img[y1, x1, ch] * fx
                out[r, q, ch] = top * (1.0 - fy) + bot * fy
    return out


def warp_affine(img, m, out_h, out_w):
    return _warp_affine(img, np.ascontiguousarray(m, dtype=np.float64), out_h, out_w).astype(img.dtype)
