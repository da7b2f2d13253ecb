"""Pure-numpy reference kernels.

Every function here has a twin in ``_kernels_numba`` with the same signature
and the same result up to floating-point summation order.
"""

import numpy as np


def im2col(xp, kh, kw, stride, ho, wo):
    """Unfold padded ``xp`` [B,Hp,Wp,C] into patches [B,ho,wo,kh*kw*C]."""
    b, _, _, c = xp.shape
    cols = np.empty((b, ho, wo, kh * kw * c), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            o = (i * kw + j) * c
            cols[..., o:o + c] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
    return cols


def col2im(dcols, hp, wp, kh, kw, stride):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to [B,Hp,Wp,C]."""
    b, ho, wo, kc = dcols.shape
    c = kc // (kh * kw)
    dxp = np.zeros((b, hp, wp, c), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            o = (i * kw + j) * c
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[..., o:o + c]
    return dxp


def maxpool_forward(x, k):
    """Non-overlapping k×k max-pool on [B,H,W,C]; returns (out, window argmax)."""
    b, h, w, c = x.shape
    ho, wo = h // k, w // k
    win = x[:, :ho * k, :wo * k, :].reshape(b, ho, k, wo, k, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, k * k)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int64)


def maxpool_backward(dout, idx, h, w, k):
    b, ho, wo, c = dout.shape
    dwin = np.zeros((b, ho, wo, c, k * k), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(b, ho, wo, c, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(b, ho * k, wo * k, c)
    dx = np.zeros((b, h, w, c), dtype=dout.dtype)
    dx[:, :ho * k, :wo * k, :] = dwin
    return dx


def spatial_argmax(s):
    """First row-major argmax over axis 1 of [B,P,N]."""
    return np.argmax(s, axis=1).astype(np.int64)


def sqdist(a, b):
    """Squared distances by direct differencing.

    ``a`` is [B,P,D]; ``b`` is [Q,D] (shared) or [B,Q,D]. Returns [B,P,Q]. Equal
    vectors give exactly zero.
    """
    if b.ndim == 2:
        diff = a[:, :, None, :] - b[None, None, :, :]
    else:
        diff = a[:, :, None, :] - b[:, None, :, :]
    return np.einsum("bpqd,bpqd->bpq", diff, diff)


def _reflect(coord, n):
    # Half-sample symmetric reflection into [0, n-1].
    if n == 1:
        return np.zeros_like(coord)
    period = 2.0 * (n - 1)
    coord = np.abs(coord) % period
    return np.where(coord > n - 1, period - coord, coord)


def warp_affine(img, m, out_h, out_w):
    """Bilinear inverse warp of [H,W,C]; output pixel (r,c) samples ``m @ (c, r, 1)``."""
    h, w, _ = img.shape
    rr, cc = np.meshgrid(np.arange(out_h, dtype=np.float64), np.arange(out_w, dtype=np.float64), indexing="ij")
    sx = m[0, 0] * cc + m[0, 1] * rr + m[0, 2]
    sy = m[1, 0] * cc + m[1, 1] * rr + m[1, 2]
    sx = _reflect(sx, w)
    sy = _reflect(sy, h)
    x0 = np.minimum(np.floor(sx).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(sy).astype(np.int64), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return (top * (1.0 - fy) + bot * fy).astype(img.dtype)
