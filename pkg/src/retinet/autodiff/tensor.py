"""Reverse-mode differentiation over numpy arrays."""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import UsageError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph (inference, frozen sub-networks)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """An ``(N, C, H, W)`` (or scalar) array with an optional gradient slot.

    Ops build a graph of closures; ``backward`` walks it in reverse
    topological order and accumulates into ``.grad`` of leaf tensors that
    require gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64 if dtype is None else dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @classmethod
    def from_op(cls, data, parents, backward, op: str) -> "Tensor":
        """Result of an op; ``backward(g)`` returns one gradient (or None) per parent."""
        out = cls(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        out.op = op
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise UsageError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic sugar used by the loss code
    def __add__(self, other):
        from .functional import add
        return add(self, other)

    def __mul__(self, other):
        from .functional import mul_elem, scale
        if isinstance(other, Tensor):
            return mul_elem(self, other)
        return scale(self, float(other))

    __radd__ = __add__

    def __rmul__(self, other):
        return self.__mul__(other)


class Parameter(Tensor):
    """A trainable leaf tensor with its SGD momentum buffer."""

    __slots__ = ("name", "momentum_buffer")

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.momentum_buffer = np.zeros_like(self.data)
