"""Dense float32 tensors with reverse-mode automatic differentiation.

The design is a classic taped scalar-graph generalised to ndarrays: each op
produces a fresh ``Tensor`` holding its parents and a closure that maps the
output gradient to parent-gradient contributions.  ``backward`` topologically
sorts the recorded graph from the loss, accumulates gradients in reverse
order, then frees the tape so memory stays bounded per step.

Storage is always contiguous row-major float32.  Permutations materialise a
copy rather than returning strided views; at this model scale correctness and
simplicity beat the copies' cost.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (used by samplers/eval)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float32)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate .grad on every requires_grad tensor reachable from this scalar."""
        if self.data.size != 1:
            raise ContractError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            # free the tape; parameters keep their accumulated .grad
            node._parents = ()
            node._backward = None

    # -- operator sugar -------------------------------------------------

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _wire(out: Tensor, parents: tuple[Tensor, ...], backward) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(np.float32, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _wire(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _wire(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _wire(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)

    def backward(g):
        _accumulate(a, -g)

    return _wire(out, (a,), backward)


def gelu(a) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    a = as_tensor(a)
    c = np.float32(np.sqrt(2.0 / np.pi))
    x = a.data
    inner = c * (x + np.float32(0.044715) * x * x * x)
    t = np.tanh(inner)
    out = Tensor(np.float32(0.5) * x * (1.0 + t))

    def backward(g):
        sech2 = 1.0 - t * t
        dinner = c * (1.0 + 3.0 * np.float32(0.044715) * x * x)
        d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * dinner
        _accumulate(a, (g * d).astype(np.float32))

    return _wire(out, (a,), backward)


# -- shape manipulation ---------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = Tensor(a.data.reshape(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.data.shape} into {shape}") from exc

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _wire(out, (a,), backward)


def permute(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(int(ax) for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"permutation {axes} invalid for rank-{a.ndim} tensor")
    out = Tensor(np.ascontiguousarray(np.transpose(a.data, axes)))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(a, np.ascontiguousarray(np.transpose(g, inverse)))

    return _wire(out, (a,), backward)


# -- reductions -----------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).astype(np.float32))
            return
        gg = g if keepdims else np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).astype(np.float32))

    return _wire(out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float32))
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]

    def backward(g):
        gg = g / np.float32(count)
        if axis is None:
            _accumulate(a, np.broadcast_to(gg, a.data.shape).astype(np.float32))
            return
        gg = gg if keepdims else np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).astype(np.float32))

    return _wire(out, (a,), backward)


def mse(a, b) -> Tensor:
    """Mean squared error over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse operands differ: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    out = Tensor(np.mean(diff * diff, dtype=np.float32))
    scale = np.float32(2.0 / diff.size)

    def backward(g):
        gd = g * scale * diff
        _accumulate(a, gd)
        _accumulate(b, -gd)

    return _wire(out, (a, b), backward)


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}")
    try:
        out = Tensor(a.data @ b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}") from exc

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.data.shape))
        _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _wire(out, (a, b), backward)


def softmax_last(a) -> Tensor:
    """Softmax along the last axis, stabilised by max subtraction."""
    a = as_tensor(a)
    if a.data.shape[-1] < 1:
        raise ShapeError("softmax_last requires a non-empty last axis")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accumulate(a, (y * (g - dot)).astype(np.float32))

    return _wire(out, (a,), backward)


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply a learned affine."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    dim = a.data.shape[-1]
    if gamma.data.shape != (dim,) or beta.data.shape != (dim,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match feature dim {dim}"
        )
    mu = a.data.mean(axis=-1, keepdims=True, dtype=np.float32)
    centered = a.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True, dtype=np.float32)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = centered * inv
    out = Tensor(xhat * gamma.data + beta.data)

    def backward(g):
        axes = tuple(range(a.ndim - 1))
        _accumulate(gamma, (g * xhat).sum(axis=axes).astype(np.float32))
        _accumulate(beta, g.sum(axis=axes).astype(np.float32))
        gx = g * gamma.data
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        _accumulate(a, (inv * (gx - m1 - xhat * m2)).astype(np.float32))

    return _wire(out, (a, gamma, beta), backward)


def embedding(table, idx) -> Tensor:
    """Row lookup into `table` by an integer index array."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be rank 2, got {table.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ContractError(
            f"embedding index out of range [0, {table.data.shape[0]}): "
            f"min={idx.min()} max={idx.max()}"
        )
    out = Tensor(table.data[idx])

    def backward(g):
        if not table.requires_grad:
            return
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.data.shape[1]))
        _accumulate(table, gt)

    return _wire(out, (table,), backward)
