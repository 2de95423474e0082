"""Small reverse-mode automatic differentiation over dense float64 arrays.

A :class:`CompGraph` is an immutable, topologically ordered list of nodes.
Graphs are assembled with :class:`GraphBuilder`, evaluated with
:func:`forward` and differentiated with :func:`backward`. Both functions are
pure, so one graph can be shared across threads.

Example::

    gb = GraphBuilder()
    w = gb.leaf("w")
    f = gb.sumsq(w)
    g = gb.build()
    vals = forward(g, {"w": np.array([3.0])})
    backward(g, vals, f)["w"]      # array([6.])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import NonFiniteError, ShapeError

# op name -> number of inputs
_ARITY = {
    "leaf": 0,
    "matmul": 2,
    "add": 2,
    "sub": 2,
    "mul": 2,
    "scale": 1,
    "shift": 1,
    "tanh": 1,
    "exp": 1,
    "clip": 1,
    "sum": 1,
    "sumsq": 1,
    "concat": 2,
}


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...] = ()
    name: str | None = None
    attrs: tuple = ()

    def describe(self, index: int) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"node {index} ({self.op}{label})"


@dataclass(frozen=True)
class CompGraph:
    nodes: tuple[Node, ...]

    def __post_init__(self):
        seen_leaves = set()
        for i, node in enumerate(self.nodes):
            if node.op not in _ARITY:
                raise ValueError(f"unknown op {node.op!r} at node {i}")
            if len(node.inputs) != _ARITY[node.op]:
                raise ValueError(f"{node.describe(i)} expects {_ARITY[node.op]} inputs")
            if any(j >= i or j < 0 for j in node.inputs):
                raise ValueError(f"{node.describe(i)} is not topologically ordered")
            if node.op == "leaf":
                if node.name in seen_leaves:
                    raise ValueError(f"duplicate leaf name {node.name!r}")
                seen_leaves.add(node.name)

    @property
    def leaves(self) -> dict[str, int]:
        return {n.name: i for i, n in enumerate(self.nodes) if n.op == "leaf"}


class GraphBuilder:
    """Append-only builder; every method returns the new node's index."""

    def __init__(self):
        self._nodes: list[Node] = []

    def _add(self, op, inputs=(), name=None, attrs=()):
        self._nodes.append(Node(op, tuple(inputs), name, tuple(attrs)))
        return len(self._nodes) - 1

    def leaf(self, name: str) -> int:
        return self._add("leaf", name=name)

    def matmul(self, a, b, name=None):
        return self._add("matmul", (a, b), name)

    def add(self, a, b, name=None):
        return self._add("add", (a, b), name)

    def sub(self, a, b, name=None):
        return self._add("sub", (a, b), name)

    def mul(self, a, b, name=None):
        return self._add("mul", (a, b), name)

    def scale(self, a, c: float, name=None):
        return self._add("scale", (a,), name, (float(c),))

    def shift(self, a, c: float, name=None):
        return self._add("shift", (a,), name, (float(c),))

    def tanh(self, a, name=None):
        return self._add("tanh", (a,), name)

    def exp(self, a, name=None):
        return self._add("exp", (a,), name)

    def clip(self, a, lo: float, hi: float, name=None):
        if not lo < hi:
            raise ValueError("clip requires lo < hi")
        return self._add("clip", (a,), name, (float(lo), float(hi)))

    def sum(self, a, name=None):
        return self._add("sum", (a,), name)

    def sumsq(self, a, name=None):
        return self._add("sumsq", (a,), name)

    def concat(self, a, b, axis: int = -1, name=None):
        return self._add("concat", (a, b), name, (int(axis),))

    def build(self) -> CompGraph:
        return CompGraph(tuple(self._nodes))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _eval(node: Node, args: list[np.ndarray]) -> np.ndarray:
    op = node.op
    if op == "matmul":
        a, b = args
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
        return a @ b
    if op in ("add", "sub", "mul"):
        a, b = args
        np.broadcast_shapes(a.shape, b.shape)
        if op == "add":
            return a + b
        return a - b if op == "sub" else a * b
    if op == "scale":
        return args[0] * node.attrs[0]
    if op == "shift":
        return args[0] + node.attrs[0]
    if op == "tanh":
        return np.tanh(args[0])
    if op == "exp":
        return np.exp(args[0])
    if op == "clip":
        return np.clip(args[0], node.attrs[0], node.attrs[1])
    if op == "sum":
        return np.asarray(args[0].sum())
    if op == "sumsq":
        return np.asarray(np.sum(args[0] * args[0]))
    if op == "concat":
        return np.concatenate(args, axis=node.attrs[0])
    raise AssertionError(op)


def forward(graph: CompGraph, bindings: Mapping[str, np.ndarray]) -> list[np.ndarray]:
    """Evaluate every node; returns values indexed by node position."""
    values: list[np.ndarray] = []
    for i, node in enumerate(graph.nodes):
        if node.op == "leaf":
            if node.name not in bindings:
                raise KeyError(f"leaf {node.name!r} is not bound")
            val = np.asarray(bindings[node.name], dtype=np.float64)
        else:
            try:
                # overflow is reported below as NonFiniteError
                with np.errstate(over="ignore", invalid="ignore"):
                    val = _eval(node, [values[j] for j in node.inputs])
            except ValueError as exc:
                raise ShapeError(f"{node.describe(i)}: {exc}") from None
        if not np.all(np.isfinite(val)):
            raise NonFiniteError(f"{node.describe(i)} produced a non-finite value")
        values.append(val)
    return values


def _local_grads(node: Node, args: list[np.ndarray], out: np.ndarray, g: np.ndarray):
    op = node.op
    if op == "matmul":
        a, b = args
        return [g @ b.T, a.T @ g]
    if op == "add":
        return [_unbroadcast(g, args[0].shape), _unbroadcast(g, args[1].shape)]
    if op == "sub":
        return [_unbroadcast(g, args[0].shape), _unbroadcast(-g, args[1].shape)]
    if op == "mul":
        a, b = args
        return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]
    if op == "scale":
        return [g * node.attrs[0]]
    if op == "shift":
        return [g]
    if op == "tanh":
        return [g * (1.0 - out * out)]
    if op == "exp":
        return [g * out]
    if op == "clip":
        x = args[0]
        inside = (x > node.attrs[0]) & (x < node.attrs[1])
        return [g * inside]
    if op == "sum":
        return [np.broadcast_to(g, args[0].shape).copy()]
    if op == "sumsq":
        return [2.0 * g * args[0]]
    if op == "concat":
        axis = node.attrs[0]
        split = args[0].shape[axis]
        return np.split(g, [split], axis=axis)
    raise AssertionError(op)


def backward(graph: CompGraph, values: list[np.ndarray], seed: int) -> dict[str, np.ndarray]:
    """Gradient of the scalar node ``seed`` with respect to every leaf.

    Contributions are accumulated in reverse topological order, so the result
    is deterministic for fixed inputs. Leaves the seed does not depend on get
    a zero gradient.
    """
    if values[seed].size != 1:
        raise ShapeError(
            f"{graph.nodes[seed].describe(seed)} is not scalar (shape {values[seed].shape})"
        )
    grads: dict[int, np.ndarray] = {seed: np.ones_like(values[seed])}
    for i in range(seed, -1, -1):
        node = graph.nodes[i]
        g = grads.pop(i, None) if node.op != "leaf" else None
        if g is None or node.op == "leaf":
            continue
        args = [values[j] for j in node.inputs]
        for j, gj in zip(node.inputs, _local_grads(node, args, values[i], g)):
            grads[j] = grads[j] + gj if j in grads else gj
    out = {}
    for name, idx in graph.leaves.items():
        out[name] = grads.get(idx, np.zeros_like(values[idx]))
    return out


def grad_check(
    fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    grad: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between ``grad`` and central differences of ``fn``.

    Relative error per coordinate is ``|a - c| / max(1e-12, |a| + |c|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(params, dtype=np.float64).ravel()
    analytic = np.asarray(grad, dtype=np.float64).ravel()
    if analytic.shape != x.shape:
        raise ShapeError(f"gradient has {analytic.size} entries, params have {x.size}")
    worst = 0.0
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + step
        fp = fn(x.reshape(np.shape(params)))
        x[k] = orig - step
        fm = fn(x.reshape(np.shape(params)))
        x[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"function is non-finite near coordinate {k}")
        central = (fp - fm) / (2.0 * step)
        rel = abs(analytic[k] - central) / max(1e-12, abs(analytic[k]) + abs(central))
        worst = max(worst, rel)
    return worst
