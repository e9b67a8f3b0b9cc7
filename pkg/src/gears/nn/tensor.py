"""Float64 tensors with tape-free reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  ``backward`` walks
the graph in reverse topological order and accumulates into leaf ``.grad``.
"""

from __future__ import annotations

import numpy as np

_NAN_CHECK = False


class ShapeMismatch(ValueError):
    pass


class GraphCycle(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def set_nan_check(enabled: bool) -> bool:
    """Toggle raising on non-finite op outputs; returns the previous setting."""
    global _NAN_CHECK
    prev, _NAN_CHECK = _NAN_CHECK, bool(enabled)
    return prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "grad_fn", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(), grad_fn=None, op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self.grad_fn = grad_fn
        self.op = op
        if _NAN_CHECK and not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite values produced by {op or 'input'}")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires grad."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node.grad_fn(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological(root: Tensor) -> list:
    order, state = [], {}
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        key = id(node)
        if done:
            state[key] = 2
            order.append(node)
            continue
        s = state.get(key, 0)
        if s == 2:
            continue
        if s == 1:
            raise GraphCycle("cycle detected in computation graph")
        state[key] = 1
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad:
                ps = state.get(id(p), 0)
                if ps == 1:
                    raise GraphCycle("cycle detected in computation graph")
                if ps == 0:
                    stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fn, op):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents if req else (), grad_fn if req else None, op)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data > lo) & (x.data < hi)
    return _make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


def unary(x, f, df, op: str = "unary") -> Tensor:
    """Elementwise ``f`` with derivative ``df`` (both numpy callables)."""
    x = as_tensor(x)
    return _make(f(x.data), (x,), lambda g: (g * df(x.data),), op)


def norm(x, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the subgradient at the origin is zero."""
    x = as_tensor(x)
    out = np.sqrt(np.sum(x.data * x.data, axis=axis))
    safe = np.where(out > 0, out, 1.0)

    def grad_fn(g):
        scale = np.where(out > 0, g / safe, 0.0)
        return (np.expand_dims(scale, axis) * x.data,)

    return _make(out, (x,), grad_fn, "norm")


# ---------------------------------------------------------------------------
# shape and reductions


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), grad_fn, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(x, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    return _make(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)

    def grad_fn(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(x.data[idx], (x,), grad_fn, "getitem")


def concat(xs, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def stack(xs, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _make(np.stack([x.data for x in xs], axis=axis), tuple(xs), grad_fn, "stack")


# ---------------------------------------------------------------------------
# linear algebra and network ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # stacked rows times one weight matrix: a single GEMM each way
        a2 = a.data.reshape(-1, a.shape[-1])

        def grad_fn2(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _make((a2 @ b.data).reshape(a.shape[:-1] + (b.shape[1],)), (a, b), grad_fn2, "matmul")

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), grad_fn, "matmul")


def linear(x, W, b=None) -> Tensor:
    """x @ W + b over the last axis of x."""
    x, W = as_tensor(x), as_tensor(W)
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"linear input width {x.shape[-1]} != {W.shape[0]}")
    y = matmul(x, W) if x.ndim >= 2 else matmul(reshape(x, (1, -1)), W)[0]
    return y if b is None else add(y, b)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _make(out, (x,), grad_fn, "softmax")


def maxpool_set(x, mask=None) -> Tensor:
    """Per-channel max over the set axis (-2): (..., n, d) -> (..., d).

    ``mask`` (..., n) marks valid rows; a set with no valid rows pools to 0.
    """
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeMismatch("maxpool_set expects (..., n, d)")
    data = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != data.shape[:-1]:
            raise ShapeMismatch(f"mask {mask.shape} vs set {data.shape[:-1]}")
        data = np.where(mask[..., None], data, -np.inf)
    if data.shape[-2] == 0:
        out = np.zeros(data.shape[:-2] + data.shape[-1:])
        return _make(out, (x,), lambda g: (np.zeros_like(x.data),), "maxpool_set")
    arg = np.argmax(data, axis=-2)
    out = np.take_along_axis(data, arg[..., None, :], axis=-2)[..., 0, :]
    empty = ~np.isfinite(out)
    out = np.where(empty, 0.0, out)

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg[..., None, :], np.where(empty, 0.0, g)[..., None, :], axis=-2)
        return (gx,)

    return _make(out, (x,), grad_fn, "maxpool_set")


def segment_max(x, segments, n_segments: int) -> Tensor:
    """Per-channel max of the rows of x (P, d) grouped by ``segments`` (P,) -> (n_segments, d).

    Segments without rows give 0.  Tied maxima share the gradient equally.
    """
    x = as_tensor(x)
    seg = np.asarray(segments, dtype=np.int64)
    if x.ndim != 2 or seg.shape != (x.shape[0],):
        raise ShapeMismatch("segment_max expects (P, d) rows and (P,) segment ids")
    out = np.full((n_segments, x.shape[1]), -np.inf)
    np.maximum.at(out, seg, x.data)
    hit = x.data == out[seg]
    counts = np.zeros_like(out)
    np.add.at(counts, seg, hit.astype(np.float64))
    empty = ~np.isfinite(out)
    out = np.where(empty, 0.0, out)

    def grad_fn(g):
        return (np.where(hit, g[seg] / np.maximum(counts[seg], 1.0), 0.0),)

    return _make(out, (x,), grad_fn, "segment_max")


def mse(a, b) -> Tensor:
    d = sub(a, b)
    return mean(mul(d, d))


def self_attention(X, Wq, Wk, Wv) -> Tensor:
    """softmax(Q K^T / sqrt(l)) V over the sequence axis (-2) of X (..., n, d)."""
    X, Wq, Wk, Wv = (as_tensor(t) for t in (X, Wq, Wk, Wv))
    if Wq.shape != Wk.shape or Wq.shape[0] != X.shape[-1] or Wv.shape[0] != X.shape[-1]:
        raise ShapeMismatch("attention projection shapes do not match the input")
    width = Wq.shape[1]
    if width <= 0:
        raise ShapeMismatch("key width must be positive")
    Q = matmul(X, Wq)
    K = matmul(X, Wk)
    V = matmul(X, Wv)
    A = softmax(mul(matmul(Q, swapaxes(K, -1, -2)), 1.0 / np.sqrt(width)), axis=-1)
    return matmul(A, V)


def attention_weights(X, Wq, Wk) -> np.ndarray:
    X = np.asarray(X.data if isinstance(X, Tensor) else X)
    Wq = np.asarray(Wq.data if isinstance(Wq, Tensor) else Wq)
    Wk = np.asarray(Wk.data if isinstance(Wk, Tensor) else Wk)
    return softmax(Tensor((X @ Wq) @ np.swapaxes(X @ Wk, -1, -2) / np.sqrt(Wq.shape[1]))).data
