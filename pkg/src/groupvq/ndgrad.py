"""Minimal reverse-mode autodiff over dense float32 numpy arrays.

A :class:`Tensor` wraps a row-major float32 ndarray. Every operation records
its inputs and a vector-Jacobian closure; calling :meth:`Tensor.backward` on a
scalar walks the graph once in reverse topological order and accumulates
gradients additively into every tensor created with ``requires_grad=True``.

Numerics: presented data and gradients are float32, but forward values are
accumulated in float64 alongside (leaves upcast exactly; each op computes on
the float64 view and casts the result back). :meth:`Tensor.item` reads the
float64 value, so finite-difference gradient checks are not limited by float32
storage of the loss.

Forward ops are pure: the same inputs always produce bit-identical outputs.
A graph is built and traversed by a single thread of control; tensors are safe
to hand between threads once construction is done.

No broadcasting: elementwise ops require equal shapes (multiply by a Python
float is the one scalar exception). Callers reshape explicitly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "matmul",
    "leaky_relu",
    "tanh",
    "square",
    "sqrt",
    "reshape",
    "concat",
    "narrow",
    "reduce_sum",
    "reduce_mean",
    "straight_through",
    "grad_check",
]

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


class Tensor:
    """Dense float32 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps", "_op", "_acc")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjps: tuple[Callable[[np.ndarray], np.ndarray], ...] = ()
        self._op: str | None = None
        self._acc: np.ndarray | None = None  # float64 accumulator (interior nodes)

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def acc(self) -> np.ndarray:
        """Float64 view of the forward value; exact upcast for leaves."""
        if self._acc is not None:
            return self._acc
        return self.data.astype(np.float64)

    def item(self) -> float:
        """Scalar value at float64 accumulator precision."""
        if self.size != 1:
            raise ValueError(f"item() requires a size-1 tensor, got shape {self.shape}")
        return float(self.acc.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy of the values with no graph history."""
        return Tensor(self.data.copy())

    def set_data(self, data: np.ndarray) -> None:
        """Replace leaf values in place (optimizer updates)."""
        if self._parents:
            raise ValueError("set_data is only valid on leaf tensors")
        self.data = np.asarray(data, dtype=np.float32)
        self._acc = None

    def __repr__(self) -> str:
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{op})"

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self.shape))

    def __radd__(self, other):
        return add(_coerce(other, self.shape), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self.shape))

    def __rsub__(self, other):
        return sub(_coerce(other, self.shape), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- backward ------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar; visits each node exactly once."""
        if self.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = np.array(contrib, dtype=np.float32)
                else:
                    parent.grad = parent.grad + contrib


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative post-order DFS; recursion would overflow on long training graphs.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def _coerce(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float)):
        return Tensor(np.full(shape, float(x), dtype=np.float32))
    return Tensor(x)


def constant(data) -> Tensor:
    """Tensor that never receives gradients."""
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


# -- node construction helpers ------------------------------------------------


def _node(
    acc: np.ndarray,
    op: str,
    parents: tuple[Tensor, ...],
    vjps: tuple[Callable[[np.ndarray], np.ndarray], ...],
) -> Tensor:
    out = Tensor(acc.astype(np.float32))
    out._acc = acc
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._vjps = vjps
    out._op = op
    return out


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# -- primitive ops -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same("add", a, b)
    return _node(a.acc + b.acc, "add", (a, b), (lambda g: g, lambda g: g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same("sub", a, b)
    return _node(a.acc - b.acc, "sub", (a, b), (lambda g: g, lambda g: -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same("mul", a, b)
    ad, bd = a.data, b.data
    return _node(a.acc * b.acc, "mul", (a, b), (lambda g: g * bd, lambda g: g * ad))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c32 = np.float32(c)
    return _node(a.acc * float(c), "scalar_mul", (a,), (lambda g: g * c32,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: operand shapes {a.shape} and {b.shape} incompatible")
    ad, bd = a.data, b.data

    def vjp_a(g):
        return (g.astype(np.float64) @ bd.astype(np.float64).T).astype(np.float32)

    def vjp_b(g):
        return (ad.astype(np.float64).T @ g.astype(np.float64)).astype(np.float32)

    return _node(a.acc @ b.acc, "matmul", (a, b), (vjp_a, vjp_b))


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    # Tie rule: the kink at exactly 0 takes the negative-slope branch.
    acc = a.acc
    scale64 = np.where(acc > 0, 1.0, float(slope))
    scale32 = scale64.astype(np.float32)
    return _node(acc * scale64, "leaky_relu", (a,), (lambda g: g * scale32,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.acc)
    d32 = (1.0 - out * out).astype(np.float32)
    return _node(out, "tanh", (a,), (lambda g: g * d32,))


def square(a: Tensor) -> Tensor:
    acc = a.acc
    d32 = (2.0 * acc).astype(np.float32)
    return _node(acc * acc, "square", (a,), (lambda g: g * d32,))


def sqrt(a: Tensor) -> Tensor:
    # Defined for strictly positive inputs; callers keep values off zero.
    out = np.sqrt(a.acc)
    d32 = (0.5 / out).astype(np.float32)
    return _node(out, "sqrt", (a,), (lambda g: g * d32,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}")
    old = a.shape
    return _node(a.acc.reshape(shape), "reshape", (a,), (lambda g: g.reshape(old),))


def concat(parts: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: needs at least one input")
    ndim = parts[0].data.ndim
    ax = axis % ndim
    ref = list(parts[0].shape)
    for p in parts[1:]:
        other = list(p.shape)
        if len(other) != ndim or other[:ax] != ref[:ax] or other[ax + 1 :] != ref[ax + 1 :]:
            raise ShapeError(f"concat: shapes {parts[0].shape} and {p.shape} differ off axis {axis}")
    out = np.concatenate([p.acc for p in parts], axis=ax)

    vjps = []
    start = 0
    for p in parts:
        stop = start + p.shape[ax]
        sl = tuple(slice(None) if d != ax else slice(start, stop) for d in range(ndim))
        vjps.append(lambda g, sl=sl: g[sl])
        start = stop
    return _node(out, "concat", tuple(parts), tuple(vjps))


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    ndim = a.data.ndim
    ax = axis % ndim
    if not (0 <= start < stop <= a.shape[ax]):
        raise ShapeError(f"narrow: bounds [{start}, {stop}) invalid for shape {a.shape} axis {axis}")
    sl = tuple(slice(None) if d != ax else slice(start, stop) for d in range(ndim))

    def vjp(g):
        full = np.zeros(a.shape, dtype=np.float32)
        full[sl] = g
        return full

    return _node(a.acc[sl], "narrow", (a,), (vjp,))


def reduce_sum(a: Tensor) -> Tensor:
    acc = np.full((1,), a.acc.sum(), dtype=np.float64)
    return _node(
        acc,
        "reduce_sum",
        (a,),
        (lambda g: np.full(a.shape, g.reshape(-1)[0], dtype=np.float32),),
    )


def reduce_mean(a: Tensor) -> Tensor:
    acc = np.full((1,), a.acc.sum() / a.size, dtype=np.float64)
    n = np.float32(a.size)
    return _node(
        acc,
        "reduce_mean",
        (a,),
        (lambda g: np.full(a.shape, g.reshape(-1)[0] / n, dtype=np.float32),),
    )


def straight_through(a: Tensor, values: np.ndarray) -> Tensor:
    """Forward emits ``values``; backward passes the gradient to ``a`` unchanged.

    ``values`` enters as plain data, so nothing upstream of it can receive
    gradient through this node.
    """
    vals = np.asarray(values, dtype=np.float32)
    if vals.shape != a.shape:
        raise ShapeError(f"straight_through: value shape {vals.shape} != input shape {a.shape}")
    return _node(vals.astype(np.float64), "straight_through", (a,), (lambda g: g,))


# -- finite-difference oracle ---------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a deterministic scalar function of its tensor argument.
    Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
    """
    if step <= 0:
        raise ValueError("grad_check: step must be positive")
    x0 = x.data.copy()

    probe = Tensor(x0.copy(), requires_grad=True)
    y = f(probe)
    if not isinstance(y, Tensor) or y.size != 1:
        raise ValueError("grad_check: f must return a scalar Tensor")
    y.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(x0)

    worst = 0.0
    flat = x0.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += np.float32(step)
        xm[i] -= np.float32(step)
        # Effective step from the rounded float32 endpoints.
        h = float(np.float64(xp[i]) - np.float64(xm[i]))
        fp = f(Tensor(xp.reshape(x0.shape))).item()
        fm = f(Tensor(xm.reshape(x0.shape))).item()
        numeric = (fp - fm) / h
        a = float(analytic.reshape(-1)[i])
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
