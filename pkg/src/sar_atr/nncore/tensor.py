"""Reverse-mode autodiff on numpy arrays.

Every differentiable op returns a :class:`Tensor` that remembers its parents
and a closure propagating the output gradient back to them.  Calling
:meth:`Tensor.backward` walks that graph once and then releases it, so a
second call without a fresh forward pass raises :class:`GraphError`.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np


class GraphError(RuntimeError):
    """backward() called without a recorded forward pass."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def accumulate(self, g: np.ndarray):
        if not self.requires_grad:
            return
        g = np.asarray(g, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self, grad=None, retain_graph: bool = False):
        """Propagate gradients to every tensor in the graph that requires them.

        With ``retain_graph`` the graph survives for another backward pass
        from the same output (used for per-class input gradients).
        """
        if self._backward is None:
            raise GraphError("no recorded forward pass for this tensor; run forward again")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is not None:
                    node.accumulate(g)
                continue
            if g is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not (parent.requires_grad or parent._backward is not None):
                        continue
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
            if not retain_graph:
                node._backward = None
                node._parents = ()

    # arithmetic sugar used by the loss code
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import functional as F
        return F.add(self, F.mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __getitem__(self, idx):
        from . import functional as F
        return F.take(self, idx)


class Parameter(Tensor):
    """Trainable leaf tensor."""
    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def make_result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    """Wrap an op output, recording the graph only when gradients are needed."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))
