"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is deliberately small: affine maps (matmul + add), tanh / relu /
silu, elementwise add / sub / mul, square, exp, log, softplus, sum, mean,
concat and reshape. Everything the training objectives need is composed from
these (e.g. clipping is built from relu, sigmoid log-probabilities from
softplus).

Gradients accumulate additively into leaf tensors across backward passes
until explicitly zeroed, so summed losses can be backpropagated piecewise.
Wrap inference-only code in ``no_grad()`` to skip graph recording; values are
computed by the exact same numpy expressions either way, so recorded and
unrecorded forwards agree bitwise.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError

_GRAD_ENABLED = [True]


class no_grad:
    """Context manager disabling graph recording inside its scope."""

    def __enter__(self):
        _GRAD_ENABLED.append(False)
        return self

    def __exit__(self, exc_type, exc, tb):
        _GRAD_ENABLED.pop()
        return False


def grad_enabled():
    return _GRAD_ENABLED[-1]


def _sigmoid(x):
    # branchless and overflow-free; tanh is a single ufunc pass
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.values) if self.requires_grad else None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.values.shape

    def item(self):
        return float(self.values)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        if self.values.size != 1:
            raise UsageError(
                f"backward() requires a scalar loss, got shape {self.values.shape}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        flowing = {id(self): np.ones_like(self.values)}
        for node in reversed(topo):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                if node.grad is not None:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in flowing:
                    flowing[key] = flowing[key] + pg
                else:
                    flowing[key] = pg

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(values, parents, vjp):
    out = Tensor(values)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# elementwise binary -------------------------------------------------------
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.values + b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.values - b.values,
        (a, b),
        lambda g: (_unbroadcast(g, a.values.shape), -_unbroadcast(g, b.values.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.values * b.values,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.values, a.values.shape),
            _unbroadcast(g * a.values, b.values.shape),
        ),
    )


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        a.values @ b.values,
        (a, b),
        lambda g: (g @ b.values.T, a.values.T @ g),
    )


# elementwise unary --------------------------------------------------------
def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.values)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a):
    a = as_tensor(a)
    mask = a.values > 0
    return _record(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,))


def silu(a):
    a = as_tensor(a)
    sig = _sigmoid(a.values)
    y = a.values * sig
    return _record(y, (a,), lambda g: (g * (sig * (1.0 + a.values * (1.0 - sig))),))


def square(a):
    a = as_tensor(a)
    return _record(a.values * a.values, (a,), lambda g: (g * (2.0 * a.values),))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.values)
    return _record(y, (a,), lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    return _record(np.log(a.values), (a,), lambda g: (g / a.values,))


def softplus(a):
    a = as_tensor(a)
    return _record(
        np.logaddexp(0.0, a.values), (a,), lambda g: (g * _sigmoid(a.values),)
    )


# reductions ---------------------------------------------------------------
def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    y = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.values.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.values.shape).copy(),)

    return _record(y, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.values.size if axis is None else a.values.shape[axis]
    s = tsum(a, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / count)


# shape ops ----------------------------------------------------------------
def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _record(np.concatenate([t.values for t in tensors], axis=axis), tensors, vjp)


def reshape(a, shape):
    a = as_tensor(a)
    return _record(
        a.values.reshape(shape), (a,), lambda g: (g.reshape(a.values.shape),)
    )


# compositions -------------------------------------------------------------
def minimum(a, b):
    """Elementwise min composed from relu: min(a,b) = a - relu(a-b)."""
    return sub(a, relu(sub(a, b)))


def clip(x, lo, hi):
    """Clip to [lo, hi] composed from relu; gradient is 1 inside, 0 outside."""
    x = as_tensor(x)
    return sub(add(float(lo), relu(sub(x, float(lo)))), relu(sub(x, float(hi))))
