"""Differentiable kernels.

Each op computes its forward value with numpy (or a dispatched hot kernel) and
registers a closure mapping the output gradient to one gradient per parent.
Broadcasting is limited to scalar <-> tensor.
"""

import numpy as np

from . import kernels
from .tensor import DomainError, ShapeError, Tensor, record

COSINE_EPS = 1e-8


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _needs(t):
    return isinstance(t, Tensor) and t.requires_grad


def _binary_dims(a, b, op):
    if a.dims == b.dims or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: dims {a.dims} and {b.dims} differ (only scalar broadcast is supported)")


def _unbroadcast(g, t):
    if g.shape == t.dims:
        return g
    return np.asarray(g.sum(), dtype=t.dtype).reshape(t.dims)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _binary_dims(a, b, "add")
    out = Tensor(a.values + b.values)

    def backward(g):
        return (_unbroadcast(g, a) if _needs(a) else None, _unbroadcast(g, b) if _needs(b) else None)

    return record("add", out, (a, b), backward)


def sub(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _binary_dims(a, b, "sub")
    out = Tensor(a.values - b.values)

    def backward(g):
        return (_unbroadcast(g, a) if _needs(a) else None, _unbroadcast(-g, b) if _needs(b) else None)

    return record("sub", out, (a, b), backward)


def mul(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _binary_dims(a, b, "mul")
    out = Tensor(a.values * b.values)

    def backward(g):
        ga = _unbroadcast(g * b.values, a) if _needs(a) else None
        gb = _unbroadcast(g * a.values, b) if _needs(b) else None
        return ga, gb

    return record("mul", out, (a, b), backward)


def scale(a, c):
    c = float(c)
    out = Tensor(a.values * a.dtype.type(c))
    return record("scale", out, (a,), lambda g: (g * a.dtype.type(c),))


def neg(a):
    out = Tensor(-a.values)
    return record("neg", out, (a,), lambda g: (-g,))


def exp(a):
    out = Tensor(np.exp(a.values))
    return record("exp", out, (a,), lambda g: (g * out.values,))


def log(a):
    if np.any(a.values <= 0):
        raise DomainError("log of non-positive value")
    out = Tensor(np.log(a.values))
    return record("log", out, (a,), lambda g: (g / a.values,))


def relu(a):
    y = np.maximum(a.values, a.dtype.type(0))
    out = Tensor(y)
    return record("relu", out, (a,), lambda g: (g * (y > 0),))


def sigmoid(a):
    half = a.dtype.type(0.5)
    y = half * (np.tanh(half * a.values) + 1)
    out = Tensor(y)
    return record("sigmoid", out, (a,), lambda g: (g * y * (1 - y),))


def square(a):
    out = Tensor(a.values * a.values)
    return record("square", out, (a,), lambda g: (g * 2 * a.values,))


def clip(a, lo, hi):
    """Clamp into [lo, hi]; gradient is zero where the clamp is active."""
    inside = (a.values > lo) & (a.values < hi)
    out = Tensor(np.clip(a.values, lo, hi).astype(a.dtype))
    return record("clip", out, (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# reductions


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    out = Tensor(np.asarray(a.values.sum(axis=axis, keepdims=keepdims), dtype=a.dtype))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.dims).astype(a.dtype),)

    return record("sum", out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.size if axis is None else np.prod([a.dims[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def _extremum(a, axis, kind):
    arg = np.argmax(a.values, axis=axis) if kind == "max" else np.argmin(a.values, axis=axis)
    arg = np.expand_dims(arg, axis)
    out = Tensor(np.take_along_axis(a.values, arg, axis=axis).squeeze(axis))

    def backward(g):
        ga = np.zeros_like(a.values)
        np.put_along_axis(ga, arg, np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return record(kind, out, (a,), backward)


def max(a, axis):  # noqa: A001
    """Max along one axis; gradient routes to the first maximal entry."""
    return _extremum(a, axis, "max")


def min(a, axis):  # noqa: A001
    """Min along one axis; gradient routes to the first minimal entry."""
    return _extremum(a, axis, "min")


def reduce_max_spatial(s):
    """Per-channel spatial max of [H,W,N] or [B,H,W,N].

    Returns ``(scores, positions)`` where positions holds integer (i, j) of the
    first row-major maximum for every channel.
    """
    single = s.values.ndim == 3
    v = s.values[None] if single else s.values
    b, h, w, n = v.shape
    flat = np.ascontiguousarray(v.reshape(b, h * w, n))
    arg = kernels.spatial_argmax(flat)
    scores = np.take_along_axis(flat, arg[:, None, :], axis=1)[:, 0, :]
    pos = np.stack([arg // w, arg % w], axis=-1)

    def backward(g):
        gb = g[None] if single else g
        gf = np.zeros_like(flat)
        np.put_along_axis(gf, arg[:, None, :], gb[:, None, :], axis=1)
        gf = gf.reshape(v.shape)
        return (gf[0] if single else gf,)

    out = Tensor(scores[0] if single else scores)
    out = record("reduce_max_spatial", out, (s,), backward)
    return out, (pos[0] if single else pos)


# ---------------------------------------------------------------------------
# structural


def reshape(a, dims):
    out = Tensor(a.values.reshape(dims))
    return record("reshape", out, (a,), lambda g: (g.reshape(a.dims),))


def transpose(a, axes=None):
    axes = tuple(reversed(range(a.values.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes)
    out = Tensor(np.ascontiguousarray(a.values.transpose(axes)))
    return record("transpose", out, (a,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def _is_basic(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)


def getitem(a, idx):
    out = Tensor(np.array(a.values[idx], copy=True))
    basic = _is_basic(idx)

    def backward(g):
        ga = np.zeros_like(a.values)
        if basic:
            ga[idx] = g  # basic indexing never repeats an element
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return record("getitem", out, (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    splits = np.cumsum([t.dims[axis] for t in tensors])[:-1]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis))

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return record("concat", out, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """[m,k]@[k,n], batched [B,m,k]@[B,k,n], or [B,m,k]@[k,n] (shared right operand)."""
    a = as_tensor(a)
    b = as_tensor(b, a)
    if a.values.ndim < 2 or b.values.ndim < 2 or a.dims[-1] != b.dims[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.dims} vs {b.dims}")
    if b.values.ndim == 3 and (a.values.ndim != 3 or a.dims[0] != b.dims[0]):
        raise ShapeError(f"matmul: batch dims differ, {a.dims} vs {b.dims}")
    out = Tensor(a.values @ b.values)

    def backward(g):
        ga = g @ np.swapaxes(b.values, -1, -2) if _needs(a) else None
        gb = None
        if _needs(b):
            if b.values.ndim == 2 and a.values.ndim == 3:
                gb = a.values.reshape(-1, a.dims[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(a.values, -1, -2) @ g
        return ga, gb

    return record("matmul", out, (a, b), backward)


def sqdist(a, b):
    """Squared Euclidean distances between the rows of ``a`` and ``b``.

    ``a`` is [..., P, D]; ``b`` is [Q, D] (shared) or shares ``a``'s leading dims.
    Output is [..., P, Q]. Equal rows give exactly zero.
    """
    a = as_tensor(a)
    b = as_tensor(b, a)
    if a.dims[-1] != b.dims[-1]:
        raise ShapeError(f"sqdist: feature depth {a.dims[-1]} != {b.dims[-1]}")
    lead = a.dims[:-2]
    p, d = a.dims[-2:]
    af = np.ascontiguousarray(a.values.reshape(-1, p, d))
    shared = b.values.ndim == 2
    if shared:
        bf = np.ascontiguousarray(b.values)
    else:
        if b.dims[:-2] != lead:
            raise ShapeError(f"sqdist: batch dims {a.dims} vs {b.dims}")
        bf = np.ascontiguousarray(b.values.reshape(-1, b.dims[-2], d))
    out = kernels.sqdist(af, bf)
    res = Tensor(out.reshape(lead + out.shape[1:]))

    def backward(g):
        gf = g.reshape(out.shape)
        ga = gb = None
        if _needs(a):
            ga = (2 * (af * gf.sum(-1, keepdims=True) - gf @ bf)).reshape(a.dims)
        if _needs(b):
            if shared:
                q = bf.shape[0]
                gb = 2 * (bf * gf.sum(axis=(0, 1))[:, None] - gf.reshape(-1, q).T @ af.reshape(-1, d))
            else:
                gt = np.swapaxes(gf, -1, -2)
                gb = (2 * (bf * gt.sum(-1, keepdims=True) - gt @ af)).reshape(b.dims)
        return ga, gb

    return record("sqdist", res, (a, b), backward)


def cosine(u, v, axis=-1, eps=COSINE_EPS):
    """<u,v> / (|u||v| + eps) along ``axis``."""
    if u.dims != v.dims:
        raise ShapeError(f"cosine: dims {u.dims} vs {v.dims}")
    uv, vv = u.values, v.values
    dot = (uv * vv).sum(axis=axis, keepdims=True)
    nu = np.sqrt((uv * uv).sum(axis=axis, keepdims=True))
    nv = np.sqrt((vv * vv).sum(axis=axis, keepdims=True))
    den = nu * nv + eps
    out = Tensor(np.squeeze(dot / den, axis=axis))

    def backward(g):
        g = np.expand_dims(g, axis)
        ga = gb = None
        if _needs(u):
            unit_u = np.divide(uv, nu, out=np.zeros_like(uv), where=nu > 0)
            ga = g * (vv / den - dot * nv * unit_u / den**2)
        if _needs(v):
            unit_v = np.divide(vv, nv, out=np.zeros_like(vv), where=nv > 0)
            gb = g * (uv / den - dot * nu * unit_v / den**2)
        return ga, gb

    return record("cosine", out, (u, v), backward)


def softmax_cols(a):
    """Softmax down each column of the trailing [m, n] matrix (max-shifted)."""
    if a.values.ndim < 2:
        raise ShapeError("softmax_cols needs a matrix")
    z = a.values - a.values.max(axis=-2, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-2, keepdims=True)
    out = Tensor(y)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-2, keepdims=True)),)

    return record("softmax_cols", out, (a,), backward)


# ---------------------------------------------------------------------------
# convolution and pooling


def conv2d(x, k, bias=None, stride=1, pad=0):
    """Cross-correlation of [H,W,Cin] or [B,H,W,Cin] with [kh,kw,Cin,Cout] (zero padding)."""
    single = x.values.ndim == 3
    xv = x.values[None] if single else x.values
    b, h, w, cin = xv.shape
    kh, kw, kcin, cout = k.dims
    if kcin != cin:
        raise ShapeError(f"conv2d: input channels {cin} != kernel channels {kcin}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} exceeds padded extent {hp}x{wp}")
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ShapeError(f"conv2d: output extent ({hp}-{kh})/{stride}+1 is not integral")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    xp = np.pad(xv, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else np.ascontiguousarray(xv)
    pointwise = kh == kw == stride == 1
    cols = xp if pointwise else kernels.im2col(xp, kh, kw, stride, ho, wo)
    kmat = k.values.reshape(kh * kw * cin, cout)
    y = cols.reshape(-1, kh * kw * cin) @ kmat
    if bias is not None:
        y += bias.values
    y = y.reshape(b, ho, wo, cout)
    out = Tensor(y[0] if single else y)

    def backward(g):
        gf = (g[None] if single else g).reshape(-1, cout)
        gx = gk = gbias = None
        if _needs(k):
            gk = (cols.reshape(-1, kh * kw * cin).T @ gf).reshape(k.dims)
        if bias is not None and _needs(bias):
            gbias = gf.sum(axis=0)
        if _needs(x):
            dcols = (gf @ kmat.T).reshape(b, ho, wo, kh * kw * cin)
            dxp = dcols if pointwise else kernels.col2im(dcols, hp, wp, kh, kw, stride)
            gx = dxp[:, pad:pad + h, pad:pad + w, :]
            gx = np.ascontiguousarray(gx[0] if single else gx)
        return gx, gk, gbias

    parents = (x, k, bias) if bias is not None else (x, k)
    fn = backward if bias is not None else (lambda g: backward(g)[:2])
    return record("conv2d", out, parents, fn)


def maxpool2d(x, size=2):
    """Non-overlapping size×size max-pool; ties go to the first row-major cell."""
    single = x.values.ndim == 3
    xv = np.ascontiguousarray(x.values[None] if single else x.values)
    b, h, w, c = xv.shape
    if h % size or w % size:
        raise ShapeError(f"maxpool2d: extent {h}x{w} not divisible by {size}")
    y, idx = kernels.maxpool_forward(xv, size)
    out = Tensor(y[0] if single else y)

    def backward(g):
        gb = np.ascontiguousarray(g[None] if single else g)
        dx = kernels.maxpool_backward(gb, idx, h, w, size)
        return (dx[0] if single else dx,)

    return record("maxpool2d", out, (x,), backward)
