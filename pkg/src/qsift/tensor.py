"""Dense float64 tensor with reverse-mode automatic differentiation.

Define-by-run: every operation produces a new Tensor holding references
to its parents and a closure that propagates the output gradient to
them. ``backward(loss)`` topologically sorts the recorded graph and runs
the closures in reverse. The graph is rebuilt on every forward pass.

Broadcasting is deliberately narrow: ``add`` accepts equal shapes or a
trailing-suffix operand (bias vectors, shared position tables). Anything
wider raises a ShapeError.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes incompatible for the requested operation."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the actual rules live in the module-level functions
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    Unreached leaves keep ``grad is None``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    _accum(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        lead_a, lead_b = (), ()
    elif b.ndim < a.ndim and a.shape[a.ndim - b.ndim :] == b.shape:
        lead_a, lead_b = (), tuple(range(a.ndim - b.ndim))
    elif a.ndim < b.ndim and b.shape[b.ndim - a.ndim :] == a.shape:
        lead_a, lead_b = tuple(range(b.ndim - a.ndim)), ()
    else:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")

    def bwd(g):
        _accum(a, g.sum(axis=lead_a) if lead_a else g)
        _accum(b, g.sum(axis=lead_b) if lead_b else g)

    return _make(a.data + b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accum(a, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape} elementwise")

    def bwd(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * c, (a,), lambda g: _accum(a, g * c))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked leading dims allowed, plus batched @ 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D operands at least, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    if a.ndim == b.ndim:
        if a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul leading dimensions differ: {a.shape} vs {b.shape}")
    elif b.ndim != 2:
        raise ShapeError(f"unsupported matmul arrangement: {a.shape} @ {b.shape}")

    def bwd(g):
        _accum(a, g @ b.data.swapaxes(-1, -2))
        if b.ndim == a.ndim:
            _accum(b, a.data.swapaxes(-1, -2) @ g)
        else:
            k, n = b.shape
            _accum(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))

    return _make(a.data @ b.data, (a, b), bwd)


def transpose(a: Tensor, axes=None) -> Tensor:
    a = as_tensor(a)
    perm = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(perm))
    return _make(a.data.transpose(perm), (a,), lambda g: _accum(a, g.transpose(inv)))


def swap_last2(a: Tensor) -> Tensor:
    perm = list(range(a.ndim))
    perm[-1], perm[-2] = perm[-2], perm[-1]
    return transpose(a, perm)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(old)))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    extents = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis, keepdims), 1.0 / count)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    interior = (a.data > lo) & (a.data < hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: _accum(a, g * interior))


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: _accum(a, g * (1.0 - y * y)))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _make(y, (a,), lambda g: _accum(a, g * y * (1.0 - y)))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: _accum(a, g * pos))


def gelu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(kernels.gelu(x), (a,), lambda g: _accum(a, kernels.gelu_backward(x, np.ascontiguousarray(g))))


def identity(a: Tensor) -> Tensor:
    return as_tensor(a)


ACTIVATIONS = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "gelu": gelu,
    "identity": identity,
}


def texp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: _accum(a, g * y))


def tlog(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: _accum(a, g / a.data))


def tsqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return _make(y, (a,), lambda g: _accum(a, g / (2.0 * y)))


def rows_unit(a: Tensor) -> Tensor:
    """Normalize each row of a 2-D tensor to unit Euclidean length."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"rows_unit needs a 2-D tensor, got {a.shape}")
    r = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    if np.any(r == 0):
        raise ValueError("rows_unit: zero-length row")
    u = a.data / r

    def bwd(g):
        _accum(a, (g - u * (u * g).sum(axis=1, keepdims=True)) / r)

    return _make(u, (a,), bwd)


# ---------------------------------------------------------------------------
# fused row-wise ops (kernel-backed)
# ---------------------------------------------------------------------------


def _to_rows(x: np.ndarray, axis: int):
    """View ``x`` with ``axis`` last, flattened to 2-D rows."""
    moved = np.moveaxis(x, axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, moved.shape[-1]), moved.shape


def _from_rows(rows: np.ndarray, moved_shape, axis: int) -> np.ndarray:
    return np.moveaxis(rows.reshape(moved_shape), -1, axis)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {a.shape}")
    if a.shape[axis] == 0:
        raise ValueError(f"softmax over empty axis {axis} of shape {a.shape}")
    x2, mshape = _to_rows(a.data, axis)
    y2 = kernels.softmax_rows(x2)

    def bwd(g):
        g2, _ = _to_rows(g, axis)
        _accum(a, _from_rows(kernels.softmax_rows_backward(y2, g2), mshape, axis))

    return _make(_from_rows(y2, mshape, axis), (a,), bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ValueError(f"log_softmax over empty axis {axis} of shape {a.shape}")
    x2, mshape = _to_rows(a.data, axis)
    y2 = kernels.log_softmax_rows(x2)

    def bwd(g):
        g2, _ = _to_rows(g, axis)
        _accum(a, _from_rows(kernels.log_softmax_rows_backward(y2, g2), mshape, axis))

    return _make(_from_rows(y2, mshape, axis), (a,), bwd)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    n = a.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"gain/bias must have shape ({n},), got {gain.shape} and {bias.shape}")
    x2 = np.ascontiguousarray(a.data.reshape(-1, n))
    y2, xhat, rstd = kernels.layer_norm_rows(x2, gain.data, bias.data, eps)

    def bwd(g):
        g2 = np.ascontiguousarray(g.reshape(-1, n))
        gx, ggain, gbias = kernels.layer_norm_rows_backward(g2, xhat, rstd, gain.data)
        _accum(a, gx.reshape(a.shape))
        _accum(gain, ggain)
        _accum(bias, gbias)

    return _make(y2.reshape(a.shape), (a, gain, bias), bwd)


# ---------------------------------------------------------------------------
# lookup / gather ops
# ---------------------------------------------------------------------------


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: ids (...,) -> output (..., width)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding ids out of range [0, {table.shape[0]})")
    width = table.shape[1]

    def bwd(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        kernels.index_add_rows(table.grad, ids.ravel(), np.ascontiguousarray(g.reshape(-1, width)))

    return _make(table.data[ids], (table,), bwd)


def slice_rows(a: Tensor, n: int) -> Tensor:
    """First n rows along axis 0 (gradient zero-pads the tail)."""
    a = as_tensor(a)
    if not 0 < n <= a.shape[0]:
        raise ValueError(f"cannot take {n} rows from shape {a.shape}")

    def bwd(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[:n] += g

    return _make(a.data[:n].copy(), (a,), bwd)


def gather_positions(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Pick x[rows[i], cols[i], :] from a (B, T, H) tensor -> (len(rows), H)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"gather_positions needs a 3-D tensor, got {x.shape}")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    b, t, h = x.shape
    if rows.size and (rows.min() < 0 or rows.max() >= b or cols.min() < 0 or cols.max() >= t):
        raise ValueError(f"gather positions out of range for shape {x.shape}")
    flat_idx = rows * t + cols

    def bwd(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        kernels.index_add_rows(x.grad.reshape(b * t, h), flat_idx, np.ascontiguousarray(g))

    return _make(x.data[rows, cols], (x,), bwd)
