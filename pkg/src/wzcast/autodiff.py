"""Reverse-mode automatic differentiation over dense float64 arrays.

Expression graphs are built define-by-run: applying an operation to
:class:`Var` nodes immediately computes the value and records the
backward rule. Every trainable piece of the forecasting model is
composed from the primitives here, so one gradient contract (checked
against :func:`finite_difference_grad`) covers the whole model.

All values are float64. Every primitive verifies its output is finite
and raises :class:`NumericError` otherwise; NaN/Inf never propagate
silently.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import NumericError, WzcastError


class ShapeError(WzcastError, ValueError):
    """Operands have incompatible shapes."""


class GraphStateError(WzcastError, RuntimeError):
    """Graph used out of order (e.g. backward before evaluate)."""


Array = np.ndarray


def _as_array(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _check_finite(data: Array, op: str) -> Array:
    # a single reduction: the sum is finite iff every element is
    # (inf - inf and overflow both land on non-finite), far cheaper than
    # isfinite().all() on the small arrays that dominate here
    if not math.isfinite(float(data.sum())):
        if not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite result in '{op}'")
    return data


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` over axes that were broadcast up from `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A node in the expression graph: a value plus its backward rule.

    Leaves carry a ``name``; :func:`backprop` reports gradients per leaf
    name. Intermediate nodes are anonymous.
    """

    __slots__ = ("data", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, parents: tuple = (), vjp: Callable | None = None,
                 name: str | None = None, op: str = "leaf"):
        self.data = _check_finite(_as_array(data), op)
        self.grad: Array | None = None
        self.name = name
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = self.name or "expr"
        return f"Var({tag}, shape={self.shape})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_coerce(other), -1.0))

    def __rsub__(self, other):
        return add(_coerce(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Var) or np.ndim(scalar) != 0:
            raise ShapeError("division only supported by a python scalar")
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def leaf(data, name: str) -> Var:
    """Named differentiable input (parameter or bound input)."""
    return Var(data, name=name)


def constant(data) -> Var:
    """Non-differentiable value embedded in the graph."""
    return Var(data)


def _coerce(value) -> Var:
    return value if isinstance(value, Var) else Var(value)


def _binary_shapes(a: Var, b: Var, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- primitives ----------------------------------------------------------


def add(a, b) -> Var:
    a, b = _coerce(a), _coerce(b)
    _binary_shapes(a, b, "add")
    out = Var(a.data + b.data, (a, b), op="add")
    out._vjp = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    return out


def mul(a, b) -> Var:
    """Elementwise (Hadamard) product with broadcasting."""
    a, b = _coerce(a), _coerce(b)
    _binary_shapes(a, b, "mul")
    out = Var(a.data * b.data, (a, b), op="mul")
    out._vjp = lambda g: (_unbroadcast(g * b.data, a.shape),
                          _unbroadcast(g * a.data, b.shape))
    return out


def matmul(a, b) -> Var:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul requires 2-D+ operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = Var(np.matmul(a.data, b.data), (a, b), op="matmul")

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    out._vjp = vjp
    return out


def relu(x) -> Var:
    x = _coerce(x)
    out = Var(np.maximum(x.data, 0.0), (x,), op="relu")
    mask = x.data > 0.0  # subgradient at 0 is 0
    out._vjp = lambda g: (g * mask,)
    return out


def sigmoid(x) -> Var:
    x = _coerce(x)
    y = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    out = Var(y, (x,), op="sigmoid")
    out._vjp = lambda g: (g * y * (1.0 - y),)
    return out


def tanh(x) -> Var:
    x = _coerce(x)
    y = np.tanh(x.data)
    out = Var(y, (x,), op="tanh")
    out._vjp = lambda g: (g * (1.0 - y * y),)
    return out


def absolute(x) -> Var:
    x = _coerce(x)
    out = Var(np.abs(x.data), (x,), op="abs")
    sign = np.sign(x.data)  # 0 at the kink, matching the ReLU convention
    out._vjp = lambda g: (g * sign,)
    return out


def softmax(x, axis: int = -1) -> Var:
    """Softmax along `axis`, computed with max-subtraction for stability."""
    x = _coerce(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Var(y, (x,), op="softmax")

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    out._vjp = vjp
    return out


def concat(parts: Sequence[Var], axis: int = 0) -> Var:
    parts = [_coerce(p) for p in parts]
    out = Var(np.concatenate([p.data for p in parts], axis=axis),
              tuple(parts), op="concat")
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    out._vjp = vjp
    return out


def take(x, key) -> Var:
    """Slice / index, including integer-array lookups (embedding rows)."""
    x = _coerce(x)
    out = Var(x.data[key], (x,), op="slice")

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    out._vjp = vjp
    return out


def pad_axis(x, axis: int, before: int, after: int) -> Var:
    """Zero-pad along one axis."""
    x = _coerce(x)
    widths = [(0, 0)] * x.data.ndim
    widths[axis] = (before, after)
    out = Var(np.pad(x.data, widths), (x,), op="pad")
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(before, before + x.shape[axis])
    idx = tuple(idx)
    out._vjp = lambda g: (g[idx],)
    return out


def broadcast_to(x, shape: tuple[int, ...]) -> Var:
    x = _coerce(x)
    try:
        data = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}") from None
    out = Var(data.copy(), (x,), op="broadcast")
    out._vjp = lambda g: (_unbroadcast(g, x.shape),)
    return out


def reshape(x, shape) -> Var:
    x = _coerce(x)
    out = Var(x.data.reshape(shape), (x,), op="reshape")
    out._vjp = lambda g: (g.reshape(x.shape),)
    return out


def transpose(x, axes: Sequence[int]) -> Var:
    x = _coerce(x)
    axes = tuple(axes)
    out = Var(x.data.transpose(axes), (x,), op="transpose")
    inverse = tuple(np.argsort(axes))
    out._vjp = lambda g: (g.transpose(inverse),)
    return out


def reduce_sum(x, axis=None, keepdims: bool = False) -> Var:
    x = _coerce(x)
    out = Var(x.data.sum(axis=axis, keepdims=keepdims), (x,), op="sum")

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    out._vjp = vjp
    return out


def reduce_mean(x, axis=None, keepdims: bool = False) -> Var:
    x = _coerce(x)
    if axis is None:
        count = x.data.size
    else:
        count = np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# -- reverse pass --------------------------------------------------------


def _toposort(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backprop(root: Var, seed=1.0,
             leaves: Iterable[Var] | None = None) -> dict[str, Array]:
    """Accumulate d(root)/d(leaf) for every named leaf reachable from root.

    `seed` must match the root's shape. When `leaves` is given, the
    returned mapping covers exactly those leaves, with zero tensors for
    any that the graph does not use.
    """
    seed = _as_array(seed)
    if seed.shape != root.shape:
        raise ShapeError(f"seed shape {seed.shape} != output shape {root.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = seed.astype(np.float64, copy=True)
    # gradient finiteness is the optimizer's gate (it aborts the step);
    # forward primitives have already vetted every value on the tape
    for node in reversed(order):
        if node.grad is None or node._vjp is None:
            continue
        for parent, pgrad in zip(node._parents, node._vjp(node.grad)):
            if parent.grad is None:
                parent.grad = pgrad.astype(np.float64, copy=True)
            else:
                parent.grad = parent.grad + pgrad

    grads: dict[str, Array] = {}
    if leaves is not None:
        for lf in leaves:
            if lf.name is None:
                raise ValueError("requested gradient for an unnamed leaf")
            grads[lf.name] = lf.grad if lf.grad is not None else np.zeros_like(lf.data)
    else:
        for node in order:
            if node.name is not None:
                grads[node.name] = node.grad if node.grad is not None else np.zeros_like(node.data)
    return grads


class ExprGraph:
    """A reusable expression over named leaves.

    `build` maps a dict of leaf Vars to either a single output Var or a
    dict of named outputs. Each :meth:`evaluate` call re-traces the
    expression (define-by-run), so window sizes may vary between calls.
    """

    def __init__(self, build: Callable[[dict[str, Var]], Var | Mapping[str, Var]],
                 output: str = "out"):
        self._build = build
        self._output_name = output
        self._outputs: dict[str, Var] | None = None
        self._leaves: dict[str, Var] | None = None

    def evaluate(self, bindings: Mapping[str, "Array | float"]) -> dict[str, Array]:
        """Bind all leaves, run forward, and return every output's value."""
        leaves = {name: leaf(value, name) for name, value in bindings.items()}
        result = self._build(leaves)
        if isinstance(result, Var):
            result = {self._output_name: result}
        self._outputs = dict(result)
        self._leaves = leaves
        return {name: var.data for name, var in self._outputs.items()}

    def backward(self, seed=1.0) -> dict[str, Array]:
        """Gradient of the primary output w.r.t. every bound leaf."""
        if self._outputs is None:
            raise GraphStateError("backward called before evaluate")
        if self._output_name in self._outputs:
            root = self._outputs[self._output_name]
        elif len(self._outputs) == 1:
            root = next(iter(self._outputs.values()))
        else:
            raise GraphStateError(f"no output named '{self._output_name}'")
        return backprop(root, seed, leaves=self._leaves.values())


def finite_difference_grad(f: Callable[[Array], float], x, h: float = 1e-5) -> Array:
    """Central-difference gradient of scalar `f` at `x`: (f(x+h·e) − f(x−h·e)) / 2h.

    The verification oracle for :func:`backprop`; kept independent of the
    reverse-mode path.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = _as_array(x).copy()
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x))
        flat[i] = orig - h
        lo = float(f(x))
        flat[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad
