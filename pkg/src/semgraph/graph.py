"""Reverse-mode automatic differentiation over dense real matrices.

A :class:`Graph` is an append-only list of matrix-valued nodes. Every node
value is a 2-D float array; vectors are stored as ``k x 1`` columns and
scalars as ``1 x 1``. Reshapes and ``vec`` follow column-major (Fortran)
order throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPS = (
    "constant",
    "param-gather",
    "matmul",
    "transpose",
    "inverse",
    "logdet",
    "trace",
    "add",
    "sub",
    "neg",
    "scale",
    "ewise-square",
    "ewise-abs",
    "sum-all",
    "kron",
    "reshape",
)

SYMMETRY_RTOL = 1e-10


class GraphError(Exception):
    """Raised when a node cannot be added to a graph."""


class ShapeError(GraphError):
    pass


class EvaluationError(ArithmeticError):
    """Recoverable failure while evaluating a graph at a given theta."""


class NotPositiveDefiniteError(EvaluationError):
    pass


class SingularMatrixError(EvaluationError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    inputs: tuple[int, ...]
    shape: tuple[int, int]
    attrs: dict = field(default_factory=dict, compare=False)


@dataclass
class Evaluation:
    """Cached forward pass: node values plus factorizations needed by backward."""

    graph_id: int
    n_nodes: int
    output: int
    theta: np.ndarray
    values: list
    aux: dict

    @property
    def value(self) -> float:
        return float(self.values[self.output][0, 0])


def _as_matrix(x) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got {a.ndim}")
    if a.size == 0:
        raise ShapeError("empty tensor")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains NaN or Inf")
    return a


def _check_symmetric(a: np.ndarray, what: str) -> np.ndarray:
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise EvaluationError(f"{what}: input is not symmetric")
    return 0.5 * (a + a.T)


def _cholesky(a: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(_check_symmetric(a, what))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{what}: matrix is not positive definite") from None


class Graph:
    """Append-only computation graph with a single designated scalar output."""

    _next_id = 0

    def __init__(self, theta_dim: int):
        if theta_dim < 0:
            raise ValueError("theta_dim must be non-negative")
        self.theta_dim = int(theta_dim)
        self.nodes: list[Node] = []
        self.output: int | None = None
        Graph._next_id += 1
        self._uid = Graph._next_id

    def __len__(self):
        return len(self.nodes)

    def shape(self, node: int) -> tuple[int, int]:
        return self.nodes[node].shape

    # -- construction ---------------------------------------------------

    def build_node(self, op: str, inputs=(), **attrs) -> int:
        """Append a node after validating op, inputs and shapes.

        The graph is left untouched if validation fails.
        """
        if op not in OPS:
            raise GraphError(f"unknown op {op!r}")
        inputs = tuple(int(i) for i in inputs)
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise GraphError(f"unknown input node id {i}")
        shapes = [self.nodes[i].shape for i in inputs]
        shape = self._infer_shape(op, shapes, attrs)
        node = Node(len(self.nodes), op, inputs, shape, attrs)
        self.nodes.append(node)
        return node.id

    def _infer_shape(self, op, shapes, attrs):
        arity = {
            "constant": 0, "param-gather": 0, "matmul": 2, "add": 2, "sub": 2,
            "kron": 2,
        }.get(op, 1)
        if len(shapes) != arity:
            raise GraphError(f"{op} takes {arity} input(s), got {len(shapes)}")
        if op == "constant":
            return attrs["value"].shape
        if op == "param-gather":
            index = attrs["index"]
            free = index[index >= 0]
            if free.size and free.max() >= self.theta_dim:
                raise GraphError("param-gather index out of range")
            return index.shape
        if op == "matmul":
            (r1, c1), (r2, c2) = shapes
            if c1 != r2:
                raise ShapeError(f"matmul shape mismatch: {shapes[0]} @ {shapes[1]}")
            return (r1, c2)
        if op in ("add", "sub"):
            if shapes[0] != shapes[1]:
                raise ShapeError(f"{op} shape mismatch: {shapes[0]} vs {shapes[1]}")
            return shapes[0]
        if op == "kron":
            (r1, c1), (r2, c2) = shapes
            return (r1 * r2, c1 * c2)
        (r, c), = shapes
        if op in ("inverse", "logdet", "trace") and r != c:
            raise ShapeError(f"{op} needs a square input, got {(r, c)}")
        if op in ("logdet", "trace", "sum-all"):
            return (1, 1)
        if op == "transpose":
            return (c, r)
        if op == "reshape":
            new = tuple(attrs["shape"])
            if new[0] * new[1] != r * c:
                raise ShapeError(f"cannot reshape {(r, c)} to {new}")
            return new
        return (r, c)

    # convenience builders

    def constant(self, value) -> int:
        return self.build_node("constant", value=_as_matrix(value))

    def gather(self, index, base=None) -> int:
        """Matrix whose entry is theta[index] where index >= 0, else base."""
        index = np.array(index, dtype=int)
        if index.ndim == 1:
            index = index.reshape(-1, 1)
        if base is None:
            base = np.zeros(index.shape)
        base = _as_matrix(base)
        if base.shape != index.shape:
            raise ShapeError("gather base and index shapes differ")
        base = np.where(index >= 0, 0.0, base)
        return self.build_node("param-gather", index=index, base=base)

    def matmul(self, a, b):
        return self.build_node("matmul", (a, b))

    def transpose(self, a):
        return self.build_node("transpose", (a,))

    def inverse(self, a, symmetric: bool = True):
        return self.build_node("inverse", (a,), symmetric=symmetric)

    def logdet(self, a):
        return self.build_node("logdet", (a,))

    def trace(self, a):
        return self.build_node("trace", (a,))

    def add(self, a, b):
        return self.build_node("add", (a, b))

    def sub(self, a, b):
        return self.build_node("sub", (a, b))

    def neg(self, a):
        return self.build_node("neg", (a,))

    def scale(self, a, factor: float):
        factor = float(factor)
        if not np.isfinite(factor):
            raise ValueError("scale factor must be finite")
        return self.build_node("scale", (a,), factor=factor)

    def square(self, a):
        return self.build_node("ewise-square", (a,))

    def abs(self, a):
        return self.build_node("ewise-abs", (a,))

    def sum(self, a):
        return self.build_node("sum-all", (a,))

    def kron(self, a, b):
        return self.build_node("kron", (a, b))

    def reshape(self, a, shape):
        return self.build_node("reshape", (a,), shape=tuple(int(s) for s in shape))

    def set_output(self, node: int) -> None:
        if self.nodes[node].shape != (1, 1):
            raise ShapeError("output node must be 1x1")
        self.output = node

    # -- evaluation -----------------------------------------------------

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (self.theta_dim,):
            raise ValueError(f"theta must have length {self.theta_dim}, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains NaN or Inf")
        return theta

    def forward(self, theta, output: int | None = None) -> Evaluation:
        output = self.output if output is None else output
        if output is None:
            raise GraphError("graph has no output node")
        theta = self._check_theta(theta).copy()
        values: list = [None] * (output + 1)
        aux: dict = {}
        for node in self.nodes[: output + 1]:
            args = [values[i] for i in node.inputs]
            values[node.id] = _forward_op(node, args, theta, aux)
        out = values[output]
        if not np.all(np.isfinite(out)):
            raise EvaluationError("objective is not finite")
        return Evaluation(self._uid, len(self.nodes), output, theta, values, aux)

    def backward(self, cache: Evaluation) -> np.ndarray:
        if cache.graph_id != self._uid or cache.n_nodes != len(self.nodes):
            raise StaleCacheError("evaluation cache does not belong to this graph state")
        live = self._live()
        grads: list = [None] * (cache.output + 1)
        grads[cache.output] = np.ones((1, 1))
        theta_grad = np.zeros(self.theta_dim)
        for node in reversed(self.nodes[: cache.output + 1]):
            g = grads[node.id]
            if g is None or not live[node.id]:
                continue
            if node.op == "param-gather":
                index = node.attrs["index"]
                mask = index >= 0
                np.add.at(theta_grad, index[mask], g[mask])
                continue
            args = [cache.values[i] for i in node.inputs]
            for i, gi in zip(node.inputs, _backward_op(node, g, args, cache)):
                if not live[i]:
                    continue
                grads[i] = gi if grads[i] is None else grads[i] + gi
        return theta_grad

    def _live(self) -> list[bool]:
        # nodes that depend on theta; cached per graph length
        if getattr(self, "_live_cache", (None, -1))[1] != len(self.nodes):
            live = []
            for node in self.nodes:
                live.append(node.op == "param-gather" or any(live[i] for i in node.inputs))
            self._live_cache = (live, len(self.nodes))
        return self._live_cache[0]

    def value(self, theta) -> float:
        return self.forward(theta).value

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        cache = self.forward(theta)
        return cache.value, self.backward(cache)

    def gradient(self, theta) -> np.ndarray:
        return self.value_and_grad(theta)[1]

    def hessian(self, theta) -> np.ndarray:
        return hessian(self, theta)


def _forward_op(node: Node, args, theta, aux):
    op = node.op
    if op == "constant":
        return node.attrs["value"]
    if op == "param-gather":
        index = node.attrs["index"]
        out = node.attrs["base"].copy()
        mask = index >= 0
        out[mask] = theta[index[mask]]
        return out
    if op == "matmul":
        return args[0] @ args[1]
    if op == "transpose":
        return args[0].T.copy()
    if op == "inverse":
        a = args[0]
        if node.attrs.get("symmetric", True):
            chol = _cholesky(a, "inverse")
            eye = np.eye(a.shape[0])
            linv = np.linalg.solve(chol, eye)
            inv = linv.T @ linv
            return 0.5 * (inv + inv.T)
        if np.linalg.cond(a) > 1.0 / np.finfo(float).eps:
            raise SingularMatrixError("inverse: matrix is singular")
        return np.linalg.inv(a)
    if op == "logdet":
        chol = _cholesky(args[0], "logdet")
        aux[node.id] = chol
        return np.array([[2.0 * np.sum(np.log(np.diag(chol)))]])
    if op == "trace":
        return np.array([[np.trace(args[0])]])
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "neg":
        return -args[0]
    if op == "scale":
        return node.attrs["factor"] * args[0]
    if op == "ewise-square":
        return args[0] * args[0]
    if op == "ewise-abs":
        return np.abs(args[0])
    if op == "sum-all":
        return np.array([[args[0].sum()]])
    if op == "kron":
        return np.kron(args[0], args[1])
    if op == "reshape":
        return args[0].reshape(node.shape, order="F")
    raise GraphError(f"no forward rule for {op}")  # pragma: no cover


def _backward_op(node: Node, g, args, cache: Evaluation):
    op = node.op
    if op == "constant":
        return ()
    if op == "matmul":
        a, b = args
        return g @ b.T, a.T @ g
    if op == "transpose":
        return (g.T,)
    if op == "inverse":
        y = cache.values[node.id]
        return (-y.T @ g @ y.T,)
    if op == "logdet":
        chol = cache.aux[node.id]
        linv = np.linalg.solve(chol, np.eye(chol.shape[0]))
        return (g[0, 0] * (linv.T @ linv),)
    if op == "trace":
        return (g[0, 0] * np.eye(args[0].shape[0]),)
    if op == "add":
        return g, g
    if op == "sub":
        return g, -g
    if op == "neg":
        return (-g,)
    if op == "scale":
        return (node.attrs["factor"] * g,)
    if op == "ewise-square":
        return (2.0 * args[0] * g,)
    if op == "ewise-abs":
        return (np.sign(args[0]) * g,)
    if op == "sum-all":
        return (g[0, 0] * np.ones_like(args[0]),)
    if op == "kron":
        a, b = args
        (p, q), (r, s) = a.shape, b.shape
        blocks = g.reshape(p, r, q, s)
        ga = np.einsum("irjs,rs->ij", blocks, b)
        gb = np.einsum("irjs,ij->rs", blocks, a)
        return ga, gb
    if op == "reshape":
        return (g.reshape(args[0].shape, order="F"),)
    raise GraphError(f"no backward rule for {op}")  # pragma: no cover


def hessian(graph: Graph, theta) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized.

    Step per coordinate is ``cbrt(eps) * max(1, |theta_i|)``. Any
    evaluation failure at a probe point propagates.
    """
    theta = graph._check_theta(theta)
    k = theta.size
    h = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(theta))
    out = np.empty((k, k))
    for i in range(k):
        up = theta.copy()
        down = theta.copy()
        up[i] += h[i]
        down[i] -= h[i]
        out[:, i] = (graph.gradient(up) - graph.gradient(down)) / (up[i] - down[i])
    return 0.5 * (out + out.T)
