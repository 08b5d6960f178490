"""Reverse-mode automatic differentiation over dense vectors and CSR matrices.

Every forward operation appends a node (saved activations plus a vjp closure)
to a :class:`Tape`; :meth:`Tape.backward` walks the recorded nodes in reverse
execution order and accumulates gradients into one slot per named parameter.
Scalars are python floats, vectors are 1-d float64 arrays, and a sparse-matrix
parameter is represented by its CSR data vector, so sparsity patterns are
preserved by construction.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import sparse
from scipy.special import expit


class EvaluationError(Exception):
    """Raised when a forward operation hits an undefined input."""


Value = float | np.ndarray


class Node:
    __slots__ = ("value", "parents", "vjp", "param")

    def __init__(
        self,
        value: Value,
        parents: tuple["Node", ...] = (),
        vjp: Callable | None = None,
        param: str | None = None,
    ):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.param = param

    def __repr__(self) -> str:
        return f"Node({self.value!r}, param={self.param!r})"


def _is_scalar(v: Value) -> bool:
    return np.ndim(v) == 0


def _unbroadcast(grad: Value, like: Value) -> Value:
    """Reduce a gradient back to the shape of the operand it belongs to."""
    if _is_scalar(like) and not _is_scalar(grad):
        return float(np.sum(grad))
    return grad


class Tape:
    """Execution trace: append-only node list plus named parameter slots."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._param_protos: dict[str, Value] = {}

    def _record(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    # --- leaves ----------------------------------------------------------

    def constant(self, value: Value) -> Node:
        if not _is_scalar(value):
            value = np.asarray(value, dtype=np.float64)
        else:
            value = float(value)
        return self._record(Node(value))

    def param(self, name: str, value: Value) -> Node:
        """A trainable leaf; gradients accumulate under ``name``."""
        if name not in self._param_protos:
            self._param_protos[name] = value
        if _is_scalar(value):
            value = float(value)
        return self._record(Node(value, param=name))

    # --- arithmetic ------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return _unbroadcast(g, a.value), _unbroadcast(g, b.value)

        return self._record(Node(a.value + b.value, (a, b), vjp))

    def sub(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return _unbroadcast(g, a.value), _unbroadcast(-g, b.value)

        return self._record(Node(a.value - b.value, (a, b), vjp))

    def mul(self, a: Node, b: Node) -> Node:
        def vjp(g):
            return (
                _unbroadcast(g * b.value, a.value),
                _unbroadcast(g * a.value, b.value),
            )

        return self._record(Node(a.value * b.value, (a, b), vjp))

    def scale(self, a: Node, factor: float) -> Node:
        def vjp(g):
            return (g * factor,)

        return self._record(Node(a.value * factor, (a,), vjp))

    def minimum(self, a: Node, b: Node) -> Node:
        take_a = np.less_equal(a.value, b.value)

        def vjp(g):
            return (
                _unbroadcast(g * take_a, a.value),
                _unbroadcast(g * ~take_a, b.value),
            )

        value = np.minimum(a.value, b.value)
        return self._record(Node(value if np.ndim(value) else float(value), (a, b), vjp))

    def maximum(self, a: Node, b: Node) -> Node:
        take_a = np.greater_equal(a.value, b.value)

        def vjp(g):
            return (
                _unbroadcast(g * take_a, a.value),
                _unbroadcast(g * ~take_a, b.value),
            )

        value = np.maximum(a.value, b.value)
        return self._record(Node(value if np.ndim(value) else float(value), (a, b), vjp))

    # --- shape ops -------------------------------------------------------

    def sum(self, x: Node) -> Node:
        if _is_scalar(x.value):
            return self._record(Node(float(x.value), (x,), lambda g: (g,)))
        n = x.value.shape[0]

        def vjp(g):
            return (np.full(n, g),)

        return self._record(Node(float(np.sum(x.value)), (x,), vjp))

    def broadcast(self, s: Node, n: int) -> Node:
        if not _is_scalar(s.value):
            raise EvaluationError("broadcast expects a scalar input")

        def vjp(g):
            return (float(np.sum(g)),)

        return self._record(Node(np.full(n, s.value), (s,), vjp))

    def pick(self, x: Node, i: int) -> Node:
        n = x.value.shape[0]

        def vjp(g):
            out = np.zeros(n)
            out[i] = g
            return (out,)

        return self._record(Node(float(x.value[i]), (x,), vjp))

    # --- sparse matrix kernels --------------------------------------------

    def matvec(
        self,
        x: Node,
        matrix: sparse.csr_matrix,
        transposed: bool = False,
        data_param: Node | None = None,
    ) -> Node:
        """Row-vector product ``x @ M`` (or ``x @ M^T`` when transposed).

        ``data_param`` links the matrix's CSR data vector into the tape so the
        gradient lands on exactly the stored coordinates.
        """
        xv = x.value
        if _is_scalar(xv):
            raise EvaluationError("matvec on a scalar value (aggregated term?)")
        row_counts = np.diff(matrix.indptr)
        if transposed:
            value = matrix.dot(xv)
        else:
            value = matrix.T.dot(xv)

        if data_param is None:
            def vjp(g):
                dx = matrix.T.dot(g) if transposed else matrix.dot(g)
                return (dx,)

            return self._record(Node(value, (x,), vjp))

        def vjp(g):
            if transposed:
                dx = matrix.T.dot(g)
                ddata = np.repeat(g, row_counts) * xv[matrix.indices]
            else:
                dx = matrix.dot(g)
                ddata = np.repeat(xv, row_counts) * g[matrix.indices]
            return dx, ddata

        return self._record(Node(value, (x, data_param), vjp))

    def diagmul(
        self,
        x: Node,
        matrix: sparse.csr_matrix,
        data_param: Node | None = None,
        diag_positions: np.ndarray | None = None,
    ) -> Node:
        """Element-wise product with the matrix diagonal (self-edge literals)."""
        diag = matrix.diagonal()
        value = x.value * diag

        if data_param is None:
            def vjp(g):
                return (g * diag,)

            return self._record(Node(value, (x,), vjp))

        present = diag_positions >= 0

        def vjp(g):
            ddata = np.zeros_like(matrix.data)
            ddata[diag_positions[present]] = (g * x.value)[present]
            return g * diag, ddata

        return self._record(Node(value, (x, data_param), vjp))

    # --- nonlinearities ----------------------------------------------------

    def tanh(self, x: Node) -> Node:
        y = np.tanh(x.value)

        def vjp(g):
            return (g * (1.0 - y * y),)

        return self._record(Node(y, (x,), vjp))

    def sigmoid(self, x: Node) -> Node:
        y = expit(x.value)
        if _is_scalar(y):
            y = float(y)

        def vjp(g):
            return (g * y * (1.0 - y),)

        return self._record(Node(y, (x,), vjp))

    def square_root(self, x: Node) -> Node:
        if np.any(np.asarray(x.value) < 0):
            raise EvaluationError("square_root of a negative value")
        y = np.sqrt(x.value)

        def vjp(g):
            # Subgradient 0 at exactly 0 keeps absent entities inert.
            with np.errstate(divide="ignore"):
                d = np.where(np.asarray(y) > 0, 0.5 / np.where(y > 0, y, 1.0), 0.0)
            return (g * (d if np.ndim(x.value) else float(d)),)

        return self._record(Node(y, (x,), vjp))

    def reciprocal(self, x: Node) -> Node:
        """Zero-preserving reciprocal: maps 0 to 0 instead of diverging."""
        xv = np.asarray(x.value, dtype=np.float64)
        y = np.where(xv != 0, np.divide(1.0, np.where(xv != 0, xv, 1.0)), 0.0)
        if _is_scalar(x.value):
            y = float(y)

        def vjp(g):
            d = -np.asarray(y) * np.asarray(y)
            return (g * (d if np.ndim(x.value) else float(d)),)

        return self._record(Node(y, (x,), vjp))

    def mean_nonzero(self, x: Node) -> Node:
        """Mean over the nonzero entries; 0 when there are none."""
        if _is_scalar(x.value):
            return self._record(Node(float(x.value), (x,), lambda g: (g,)))
        support = x.value != 0
        k = int(np.count_nonzero(support))
        value = float(x.value[support].mean()) if k else 0.0

        def vjp(g):
            out = np.zeros_like(x.value)
            if k:
                out[support] = g / k
            return (out,)

        return self._record(Node(value, (x,), vjp))

    # --- backward ----------------------------------------------------------

    def backward(self, output: Node, seed: Value = 1.0) -> dict[str, Value]:
        """Gradients of ``output`` for every parameter touched by this tape."""
        grads: dict[int, Value] = {id(output): seed}
        table: dict[str, Value] = {}
        for name, proto in self._param_protos.items():
            table[name] = 0.0 if _is_scalar(proto) else np.zeros_like(proto)
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.param is not None:
                table[node.param] = table[node.param] + g
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
        return table


# Builtin numeric functions usable via #function directives. Reductions
# collapse a vector to a scalar; the rest apply element-wise.
BUILTINS: dict[str, Callable[[Tape, Node], Node]] = {
    "tanh": Tape.tanh,
    "sigmoid": Tape.sigmoid,
    "square_root": Tape.square_root,
    "inverse": Tape.reciprocal,
    "mean": Tape.mean_nonzero,
    "sum": Tape.sum,
}

REDUCTIONS = {"mean", "sum"}


def apply_builtin(tape: Tape, name: str, x: Node) -> Node:
    try:
        fn = BUILTINS[name]
    except KeyError:
        raise EvaluationError(f"unknown builtin {name!r}") from None
    return fn(tape, x)
