"""A small reverse-mode autodiff engine over numpy arrays.

Tensors wrap an ndarray plus an optional gradient of the same shape. Ops
build a DAG of parents and backward closures; ``Tensor.backward()`` runs a
topological sweep accumulating into ``.grad``. Complex signals are carried as
real arrays with a trailing re/im axis of length 2; the signal-specific ops
(FFT, amplifier, channel) live in :mod:`wavelink.neural.signal`.

Gradients never mutate an existing buffer in place, so views may be passed
around freely. Dtypes follow the inputs: float32 graphs stay float32, the
double-precision oracle tests run the same code in float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (evaluation mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast during the forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _accum(t: "Tensor", g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


class Tensor:
    """An ndarray with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            raise TypeError("cannot wrap a Tensor in a Tensor")
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents: tuple = ()

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _lift(x, like: "Tensor") -> "Tensor":
        if isinstance(x, Tensor):
            return x
        if isinstance(x, (int, float)):
            return Tensor(np.asarray(x, dtype=like.data.dtype))
        return Tensor(np.asarray(x))

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, " \
               f"requires_grad={self.requires_grad})"

    # -- backward pass ---------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of this node into every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient "
                                 "needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ValueError("gradient shape does not match tensor shape")
        order = self._topo_order()
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _topo_order(self) -> list:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other, self)
        out = _node(self.data + other.data, (self, other))
        if out._backward is _PENDING:
            def _bw(g):
                if self.requires_grad:
                    _accum(self, _unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    _accum(other, _unbroadcast(g, other.data.shape))
            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, -g)
            out._backward = _bw
        return out

    def __sub__(self, other):
        other = Tensor._lift(other, self)
        out = _node(self.data - other.data, (self, other))
        if out._backward is _PENDING:
            def _bw(g):
                if self.requires_grad:
                    _accum(self, _unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    _accum(other, _unbroadcast(-g, other.data.shape))
            out._backward = _bw
        return out

    def __rsub__(self, other):
        return Tensor._lift(other, self) - self

    def __mul__(self, other):
        other = Tensor._lift(other, self)
        out = _node(self.data * other.data, (self, other))
        if out._backward is _PENDING:
            def _bw(g):
                if self.requires_grad:
                    _accum(self, _unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    _accum(other, _unbroadcast(g * self.data, other.data.shape))
            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other, self)
        out = _node(self.data / other.data, (self, other))
        if out._backward is _PENDING:
            def _bw(g):
                if self.requires_grad:
                    _accum(self, _unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    _accum(other, _unbroadcast(
                        -g * self.data / (other.data * other.data),
                        other.data.shape))
            out._backward = _bw
        return out

    def __rtruediv__(self, other):
        return Tensor._lift(other, self) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = _node(self.data ** p, (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * p * self.data ** (p - 1))
            out._backward = _bw
        return out

    def __matmul__(self, other):
        return matmul(self, Tensor._lift(other, self))

    # -- reductions and shape ops -----------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._backward is _PENDING:
            shape = self.data.shape

            def _bw(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                _accum(self, np.broadcast_to(g, shape).astype(g.dtype, copy=False))
            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for a in axes:
                count *= self.data.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out._backward is _PENDING:
            orig = self.data.shape

            def _bw(g):
                _accum(self, g.reshape(orig))
            out._backward = _bw
        return out

    def transpose(self, axes):
        out = _node(self.data.transpose(axes), (self,))
        if out._backward is _PENDING:
            inverse = tuple(np.argsort(axes))

            def _bw(g):
                _accum(self, g.transpose(inverse))
            out._backward = _bw
        return out

    def __getitem__(self, idx):
        out = _node(self.data[idx], (self,))
        if out._backward is _PENDING:
            def _bw(g):
                buf = np.zeros_like(self.data)
                buf[idx] = g  # basic indexing only: no duplicate positions
                _accum(self, buf)
            out._backward = _bw
        return out

    # -- elementwise nonlinearities ----------------------------------------------

    def relu(self):
        out = _node(np.maximum(self.data, 0), (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * (self.data > 0))
            out._backward = _bw
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = _node(t, (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * (1.0 - t * t))
            out._backward = _bw
        return out

    def exp(self):
        e = np.exp(self.data)
        out = _node(e, (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * e)
            out._backward = _bw
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g / self.data)
            out._backward = _bw
        return out

    def sqrt(self):
        r = np.sqrt(self.data)
        out = _node(r, (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g / (2.0 * r))
            out._backward = _bw
        return out

    def sigmoid(self):
        s = _expit(self.data)
        out = _node(s, (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * s * (1.0 - s))
            out._backward = _bw
        return out

    def softplus(self):
        out = _node(np.logaddexp(np.zeros((), dtype=self.data.dtype), self.data),
                    (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * _expit(self.data))
            out._backward = _bw
        return out

    def clip_min(self, floor: float):
        """max(x, floor); gradient passes only where x exceeds the floor."""
        out = _node(np.maximum(self.data, floor), (self,))
        if out._backward is _PENDING:
            def _bw(g):
                _accum(self, g * (self.data > floor))
            out._backward = _bw
        return out


_PENDING = object()


def _node(data: np.ndarray, parents: tuple) -> Tensor:
    """Create an op output; marks it _PENDING when a closure should follow."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = _PENDING
    return out


def _expit(x: np.ndarray) -> np.ndarray:
    # numerically safe logistic without scipy (keeps dtype)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where b is a 2-D weight; a may carry leading batch axes."""
    if b.data.ndim != 2:
        raise ValueError("matmul expects a 2-D right operand")
    out = _node(a.data @ b.data, (a, b))
    if out._backward is _PENDING:
        k = a.data.shape[-1]
        m = b.data.shape[-1]

        def _bw(g):
            if a.requires_grad:
                _accum(a, g @ b.data.T)
            if b.requires_grad:
                _accum(b, a.data.reshape(-1, k).T @ g.reshape(-1, m))
        out._backward = _bw
    return out


def concat(tensors: list, axis: int) -> Tensor:
    datas = [t.data for t in tensors]
    out = _node(np.concatenate(datas, axis=axis), tuple(tensors))
    if out._backward is _PENDING:
        sizes = [d.shape[axis] for d in datas]
        splits = np.cumsum(sizes)[:-1]

        def _bw(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    _accum(t, piece)
        out._backward = _bw
    return out


def gather(t: Tensor, idx: np.ndarray) -> Tensor:
    """Index axis 0 with an arbitrary integer array; duplicates accumulate."""
    idx = np.asarray(idx)
    out = _node(t.data[idx], (t,))
    if out._backward is _PENDING:
        def _bw(g):
            buf = np.zeros_like(t.data)
            np.add.at(buf, idx, g)
            _accum(t, buf)
        out._backward = _bw
    return out


def take(t: Tensor, idx: np.ndarray, axis: int) -> Tensor:
    """Select rows along an axis with a fixed 1-D index array."""
    idx = np.asarray(idx)
    out = _node(np.take(t.data, idx, axis=axis), (t,))
    if out._backward is _PENDING:
        sel = (slice(None),) * axis + (idx,)

        def _bw(g):
            buf = np.zeros_like(t.data)
            np.add.at(buf, sel, g)
            _accum(t, buf)
        out._backward = _bw
    return out


def scatter(t: Tensor, idx: np.ndarray, axis: int, size: int) -> Tensor:
    """Place rows of t at positions idx of a zero-padded axis (inverse of take)."""
    idx = np.asarray(idx)
    if t.data.shape[axis] != idx.size:
        raise ValueError("index length must match the scattered axis")
    shape = list(t.data.shape)
    shape[axis] = size
    data = np.zeros(shape, dtype=t.data.dtype)
    sel = (slice(None),) * axis + (idx,)
    data[sel] = t.data
    out = _node(data, (t,))
    if out._backward is _PENDING:
        def _bw(g):
            _accum(t, g[sel])
        out._backward = _bw
    return out


def stack_pair(re: Tensor, im: Tensor) -> Tensor:
    """Join two real tensors into a trailing re/im axis."""
    re2 = re.reshape(re.shape + (1,))
    im2 = im.reshape(im.shape + (1,))
    return concat([re2, im2], axis=-1)
