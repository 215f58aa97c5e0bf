"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and, while gradient tracking is enabled, records
the operation that produced it as a backward closure. Calling ``backward()``
on a scalar loss walks the recorded tape in reverse topological order and
accumulates gradients into every reachable tensor with ``requires_grad``.

Ops preserve the dtype of their inputs: parameters are float32 in normal
use, while verification code may run the same graph in float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


class NonFiniteError(FloatingPointError):
    """A checked value contains NaN or Inf."""


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the context (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over the axes numpy broadcasting added or stretched."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: tuple, backward_fn) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled:
            prev = tuple(p for p in parents if p.requires_grad)
            if prev:
                out.requires_grad = True
                out._prev = prev
                out._backward = backward_fn
        return out

    def _accum(self, g: np.ndarray) -> None:
        # accumulation always rebinds, never mutates, so sharing g is safe
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data + other.data

            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g, other.data.shape))

            return Tensor._result(out_data, (self, other), backward)
        out_data = self.data + other

        def backward(g):
            self._accum(_unbroadcast(g, self.data.shape))

        return Tensor._result(out_data, (self,), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accum(-g)

        return Tensor._result(-self.data, (self,), backward)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data - other.data

            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(-g, other.data.shape))

            return Tensor._result(out_data, (self, other), backward)
        out_data = self.data - other

        def backward(g):
            self._accum(_unbroadcast(g, self.data.shape))

        return Tensor._result(out_data, (self,), backward)

    def __rsub__(self, other):
        out_data = other - self.data

        def backward(g):
            self._accum(_unbroadcast(-g, self.data.shape))

        return Tensor._result(out_data, (self,), backward)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data * other.data

            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g * self.data, other.data.shape))

            return Tensor._result(out_data, (self, other), backward)
        out_data = self.data * other

        def backward(g):
            self._accum(_unbroadcast(g * other, self.data.shape))

        return Tensor._result(out_data, (self,), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out_data = self.data / other.data

            def backward(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(
                        _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                    )

            return Tensor._result(out_data, (self, other), backward)
        return self * (1.0 / other)

    def __pow__(self, exponent: float):
        out_data = self.data ** exponent

        def backward(g):
            self._accum(g * exponent * self.data ** (exponent - 1.0))

        return Tensor._result(out_data, (self,), backward)

    def __matmul__(self, other: "Tensor"):
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accum(g @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ g)

        return Tensor._result(out_data, (self, other), backward)

    # -- elementwise functions ------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accum(g * out_data)

        return Tensor._result(out_data, (self,), backward)

    def log(self):
        out_data = np.log(self.data)

        def backward(g):
            self._accum(g / self.data)

        return Tensor._result(out_data, (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g):
            self._accum(g * 0.5 / out_data)

        return Tensor._result(out_data, (self,), backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            self._accum(g * (1.0 - out_data * out_data))

        return Tensor._result(out_data, (self,), backward)

    def sigmoid(self):
        out_data = 1.0 / (1.0 + np.exp(-self.data))

        def backward(g):
            self._accum(g * out_data * (1.0 - out_data))

        return Tensor._result(out_data, (self,), backward)

    def elu(self, alpha: float = 1.0):
        neg = self.data <= 0.0
        out_data = np.where(neg, alpha * np.expm1(self.data), self.data)

        def backward(g):
            self._accum(g * np.where(neg, out_data + alpha, 1.0))

        return Tensor._result(out_data, (self,), backward)

    # -- reductions & shaping -------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape))
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape))

        return Tensor._result(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        in_shape = self.data.shape

        def backward(g):
            self._accum(g.reshape(in_shape))

        return Tensor._result(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]
        in_shape = self.data.shape
        in_dtype = self.data.dtype

        def backward(g):
            full = np.zeros(in_shape, dtype=in_dtype)
            full[key] = g
            self._accum(full)

        return Tensor._result(out_data, (self,), backward)

    # -- autodiff driver --------------------------------------------------------

    def backward(self, grad=None) -> None:
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("backward() without an explicit gradient needs a scalar")
            if not np.isfinite(self.data).all():
                raise NonFiniteError("backward() called on a non-finite scalar")
            grad = np.ones_like(self.data)

        # iterative topological sort; graphs can be a few thousand nodes deep
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.asarray(grad)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def cat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along an axis; backward splits the gradient."""
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        g = np.moveaxis(g, axis, 0)
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._accum(np.moveaxis(g[lo:hi], 0, axis))

    return Tensor._result(out_data, tuple(tensors), backward)


def stack_rows(tensors) -> Tensor:
    """Stack 1-D or 2-D tensors along a new leading axis."""
    out_data = np.stack([t.data for t in tensors], axis=0)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accum(g[i])

    return Tensor._result(out_data, tuple(tensors), backward)


def l2_normalize(x: Tensor, eps: float = 1e-8) -> Tensor:
    """Scale rows of `x` to unit length; `eps` guards zero-norm inputs."""
    sq = (x * x).sum(axis=-1, keepdims=True)
    return x * (sq + eps * eps) ** -0.5


def check_finite(data: np.ndarray, what: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values in {what}")
