"""Tensor values, gradient slots and the execution tape."""

import os

import numpy as np

DEBUG = os.environ.get("CIPL_DEBUG", "0") not in ("", "0")


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Tensor:
    """Dense array with an optional gradient slot.

    ``values`` is a numpy array whose shape is the tensor's dims. ``grad`` is
    ``None`` until something is accumulated into it.
    """

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad=False, dtype=None, name=None):
        if isinstance(values, Tensor):
            values = values.values
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.values = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def dims(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self):
        return self.values.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def numpy(self):
        return self.values

    def item(self):
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float(self.values)

    def detach(self):
        return Tensor(self.values)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(dims={self.dims}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; the real kernels live in ops
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        return ops.getitem(self, idx)


class _Node:
    __slots__ = ("out", "parents", "backward", "kernel")

    def __init__(self, out, parents, backward, kernel):
        self.out = out
        self.parents = parents
        self.backward = backward
        self.kernel = kernel


_ACTIVE = []


class Graph:
    """Ordered record of executed kernels for one reverse sweep.

    Kernels record themselves only while a graph is active (``with Graph() as g``)
    and at least one input requires a gradient. Outside a graph everything runs
    in inference mode.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss, seed_grad=None):
        """Propagate d(loss)/d(.) in exact reverse execution order.

        Leaf gradients accumulate additively; intermediate slots are freshly
        allocated by this sweep.
        """
        if seed_grad is None:
            seed_grad = np.ones_like(loss.values)
        _accumulate(loss, np.asarray(seed_grad, dtype=loss.dtype))
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            grads = node.backward(g)
            for parent, pg in zip(node.parents, grads):
                if pg is not None and isinstance(parent, Tensor) and parent.requires_grad:
                    _accumulate(parent, pg)

    def kernels(self):
        return [n.kernel for n in self.nodes]


def _accumulate(t, g):
    if g.shape != t.values.shape:
        raise ShapeError(f"gradient dims {g.shape} do not match tensor dims {t.values.shape}")
    if t.grad is None:
        t.grad = np.array(g, dtype=t.dtype, copy=True)
    else:
        t.grad += g


def active_graph():
    return _ACTIVE[-1] if _ACTIVE else None


def record(kernel, out, parents, backward):
    """Attach ``out`` to the active graph when any parent needs a gradient."""
    if DEBUG and not np.all(np.isfinite(out.values)):
        raise FloatingPointError(f"kernel {kernel} produced non-finite values")
    g = active_graph()
    if g is None:
        return out
    if any(isinstance(p, Tensor) and p.requires_grad for p in parents):
        out.requires_grad = True
        g.nodes.append(_Node(out, parents, backward, kernel))
    return out


from . import ops  # noqa: E402  (circular: ops needs Tensor)
