"""Central finite-difference oracle for the reverse sweep."""

import numpy as np

from .tensor import Graph, Tensor


def numeric_grad(fn, arrays, wrt, eps=1e-6):
    """Central differences of scalar ``fn(*tensors)`` w.r.t. ``arrays[wrt]``.

    Evaluated in float64 without any graph, so it shares only forward code with
    the path it checks.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    x = base[wrt]
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = float(fn(*[Tensor(a) for a in base]).values.sum())
        x[i] = old - eps
        fm = float(fn(*[Tensor(a) for a in base]).values.sum())
        x[i] = old
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def analytic_grads(fn, arrays, dtype=np.float64):
    params = [Tensor(np.array(a, dtype=dtype), requires_grad=True) for a in arrays]
    for p in params:
        p.zero_grad()
    with Graph() as g:
        out = fn(*params)
        g.backward(out)
    return [p.grad for p in params]


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)


def check(fn, arrays, dtype=np.float64, eps=1e-6):
    """Max relative error between the reverse sweep (at ``dtype``) and float64 differences."""
    if dtype != np.float64:
        arrays = [np.asarray(a, dtype=dtype).astype(np.float64) for a in arrays]
    ana = analytic_grads(fn, arrays, dtype=dtype)
    errs = [rel_err(ana[i], numeric_grad(fn, arrays, i, eps)) for i in range(len(arrays))]
    return float(np.max(errs))
