"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Node wraps a float64 ndarray plus a backward closure; backward() runs the
closures in reverse topological order, accumulating gradients into leaves.
Only the handful of primitives the loss graphs need are provided. Broadcasting
follows numpy; gradients of broadcast operands are summed back to the operand
shape.

Numerical conventions at non-smooth points (chosen so values stay finite and
backward never produces NaN):
  * sqrt0(x) = sqrt(max(x, 0)) with gradient 0 wherever x <= 0,
  * cap / floor (elementwise min/max with a constant) pass gradient only on
    the unclamped side,
  * max/min reductions route gradient to the first extremal index.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, parents=(), requires_grad=False, backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # -- graph construction helpers -------------------------------------

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- backward pass ----------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad of every reachable node."""
        order: list[Node] = []
        seen: set[int] = set()
        stack: list[tuple[Node, bool]] = [(self, False)]
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
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        for node in order:
            if node.grad is None:
                node.grad = np.zeros(node.value.shape, dtype=np.float64)
        self.grad = np.ones(self.value.shape, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def constant(value) -> Node:
    return Node(value)


def leaf(value) -> Node:
    """Differentiable input; .grad is populated by backward()."""
    return Node(value, requires_grad=True)


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _accum(node: Node, g: np.ndarray) -> None:
    if node.requires_grad and node.grad is not None:
        node.grad += _unbroadcast(g, node.value.shape)


def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    out = Node(a.value + b.value, (a, b))

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    out._backward = backward
    return out


def sub(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    out = Node(a.value - b.value, (a, b))

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    out._backward = backward
    return out


def mul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    out = Node(a.value * b.value, (a, b))

    def backward(g):
        _accum(a, g * b.value)
        _accum(b, g * a.value)

    out._backward = backward
    return out


def div(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    out = Node(a.value / b.value, (a, b))

    def backward(g):
        _accum(a, g / b.value)
        _accum(b, -g * out.value / b.value)

    out._backward = backward
    return out


def matmul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    out = Node(a.value @ b.value, (a, b))

    def backward(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    out._backward = backward
    return out


def transpose(a) -> Node:
    a = _wrap(a)
    out = Node(a.value.T, (a,))

    def backward(g):
        _accum(a, g.T)

    out._backward = backward
    return out


def reshape(a, shape) -> Node:
    a = _wrap(a)
    out = Node(a.value.reshape(shape), (a,))

    def backward(g):
        _accum(a, g.reshape(a.value.shape))

    out._backward = backward
    return out


def sum_(a, axis=None, keepdims=False) -> Node:
    a = _wrap(a)
    out = Node(a.value.sum(axis=axis, keepdims=keepdims), (a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.value.shape))

    out._backward = backward
    return out


def tanh(a) -> Node:
    a = _wrap(a)
    out = Node(np.tanh(a.value), (a,))

    def backward(g):
        _accum(a, g * (1.0 - out.value * out.value))

    out._backward = backward
    return out


def artanh(a) -> Node:
    a = _wrap(a)
    out = Node(np.arctanh(a.value), (a,))

    def backward(g):
        _accum(a, g / (1.0 - a.value * a.value))

    out._backward = backward
    return out


def sqrt0(a) -> Node:
    """sqrt(max(a, 0)); gradient 0 wherever a <= 0 (avoids the infinite slope
    at the origin that round-off-level negatives would otherwise hit)."""
    a = _wrap(a)
    out = Node(np.sqrt(np.maximum(a.value, 0.0)), (a,))

    def backward(g):
        _accum(a, np.where(a.value > 0.0, g / (2.0 * np.where(a.value > 0.0, out.value, 1.0)), 0.0))

    out._backward = backward
    return out


def cap(a, hi: float) -> Node:
    """Elementwise min(a, hi) for scalar hi; gradient passes where a < hi."""
    a = _wrap(a)
    out = Node(np.minimum(a.value, hi), (a,))

    def backward(g):
        _accum(a, np.where(a.value < hi, g, 0.0))

    out._backward = backward
    return out


def floor_at(a, lo: float) -> Node:
    """Elementwise max(a, lo) for scalar lo; gradient passes where a > lo."""
    a = _wrap(a)
    out = Node(np.maximum(a.value, lo), (a,))

    def backward(g):
        _accum(a, np.where(a.value > lo, g, 0.0))

    out._backward = backward
    return out


relu = floor_at


def huber(a, b, delta: float) -> Node:
    """Elementwise Huber penalty of the residual a - b.

    0.5*(a-b)^2 for |a-b| <= delta, else delta*(|a-b| - 0.5*delta). Once
    continuously differentiable; d/da = clip(a-b, -delta, delta).
    """
    if not (delta > 0):
        raise ValueError(f"delta must be positive, got {delta}")
    a, b = _wrap(a), _wrap(b)
    r = a.value - b.value
    absr = np.abs(r)
    val = np.where(absr <= delta, 0.5 * r * r, delta * (absr - 0.5 * delta))
    out = Node(val, (a, b))

    def backward(g):
        d = g * np.clip(r, -delta, delta)
        _accum(a, d)
        _accum(b, -d)

    out._backward = backward
    return out


def fill_diag(a, value: float) -> Node:
    """Square matrix with the diagonal overwritten by a constant; no gradient
    flows through the overwritten entries."""
    a = _wrap(a)
    v = a.value.copy()
    np.fill_diagonal(v, value)
    out = Node(v, (a,))

    def backward(g):
        g = g.copy()
        np.fill_diagonal(g, 0.0)
        _accum(a, g)

    out._backward = backward
    return out


def mask(a, m) -> Node:
    """Multiply by a constant 0/1 mask (gradient masked identically)."""
    a = _wrap(a)
    m = np.asarray(m, dtype=np.float64)
    out = Node(a.value * m, (a,))

    def backward(g):
        _accum(a, g * m)

    out._backward = backward
    return out


def add_const(a, c: np.ndarray) -> Node:
    """Add a constant array (used with -inf/+inf masks for masked reductions;
    the generic add() would turn inf into NaN in its backward pass)."""
    a = _wrap(a)
    out = Node(a.value + c, (a,))

    def backward(g):
        _accum(a, g)

    out._backward = backward
    return out


def reduce_max(a, axis: int) -> Node:
    """Max along an axis; gradient goes to the first argmax per slice."""
    a = _wrap(a)
    idx = np.argmax(a.value, axis=axis)
    out = Node(np.max(a.value, axis=axis), (a,))

    def backward(g):
        full = np.zeros(a.value.shape, dtype=np.float64)
        grid = np.indices(out.value.shape)
        coords = list(grid)
        coords.insert(axis, idx)
        full[tuple(coords)] = g
        _accum(a, full)

    out._backward = backward
    return out


def reduce_min(a, axis: int) -> Node:
    """Min along an axis; gradient goes to the first argmin per slice."""
    a = _wrap(a)
    idx = np.argmin(a.value, axis=axis)
    out = Node(np.min(a.value, axis=axis), (a,))

    def backward(g):
        full = np.zeros(a.value.shape, dtype=np.float64)
        grid = np.indices(out.value.shape)
        coords = list(grid)
        coords.insert(axis, idx)
        full[tuple(coords)] = g
        _accum(a, full)

    out._backward = backward
    return out


def take_rows(a, indices) -> Node:
    """Row subset of a 2-D or 1-D array; backward scatter-adds."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = Node(a.value[idx], (a,))

    def backward(g):
        full = np.zeros(a.value.shape, dtype=np.float64)
        np.add.at(full, idx, g)
        _accum(a, full)

    out._backward = backward
    return out
