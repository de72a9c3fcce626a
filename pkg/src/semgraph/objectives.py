"""Fit functions and penalty terms built as graph nodes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import Graph
from .model import MATRICES, ParameterSpec, build_sigma, duplication_matrix, vech, vech_indices

BASES = ("ml", "gls", "lad", "ls")
PENALTIES = ("lasso", "ridge", "elasticnet", "spikeslab")


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyTerm:
    """One penalty on a set of free parameters.

    ``target`` is a matrix name (``lambda``, ``psi``, ``b0``, ``theta``) or a
    sequence of free-parameter labels.
    """

    kind: str
    target: str | tuple[str, ...]
    lambda1: float = 0.0
    lambda2: float = 0.0
    pi: float = 0.5

    def __post_init__(self):
        if self.kind not in PENALTIES:
            raise ObjectiveError(f"unknown penalty {self.kind!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ObjectiveError("penalty strengths must be non-negative")
        if not 0.0 <= self.pi <= 1.0:
            raise ObjectiveError("pi must lie in [0, 1]")
        if not isinstance(self.target, str):
            object.__setattr__(self, "target", tuple(self.target))

    def weights(self) -> tuple[float, float]:
        """(L1 weight, squared weight) applied to the targeted parameters."""
        if self.kind == "lasso":
            return self.lambda1, 0.0
        if self.kind == "ridge":
            return 0.0, self.lambda2
        if self.kind == "elasticnet":
            return self.lambda1, self.lambda2
        return self.pi * self.lambda1, (1.0 - self.pi) * self.lambda2

    def value(self, theta, indices) -> float:
        """Closed-form penalty, independent of any graph."""
        sel = np.asarray(theta, dtype=float)[list(indices)]
        w1, w2 = self.weights()
        return w1 * np.abs(sel).sum() + w2 * np.square(sel).sum()


@dataclass(frozen=True)
class ObjectiveSpec:
    base: str = "ml"
    penalties: tuple[PenaltyTerm, ...] = ()
    weight: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.base not in BASES:
            raise ObjectiveError(f"unknown objective {self.base!r}")
        object.__setattr__(self, "penalties", tuple(self.penalties))

    @property
    def penalized(self) -> bool:
        return bool(self.penalties)


def _check_cov(S, p: int) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.shape != (p, p):
        raise ObjectiveError(f"S has shape {S.shape}, expected {(p, p)}")
    return S


def f_ml(graph: Graph, sigma: int, S) -> int:
    """log|Sigma| + tr(S Sigma^-1)."""
    p = graph.shape(sigma)[0]
    S = _check_cov(S, p)
    inv = graph.inverse(sigma)
    tr = graph.trace(graph.matmul(graph.constant(S), inv))
    return graph.add(graph.logdet(sigma), tr)


def gls_weight(S) -> np.ndarray:
    """Default GLS weight 1/2 D' (S^-1 kron S^-1) D."""
    S = np.asarray(S, dtype=float)
    d = duplication_matrix(S.shape[0])
    s_inv = np.linalg.inv(S)
    w = 0.5 * d.T @ np.kron(s_inv, s_inv) @ d
    return 0.5 * (w + w.T)


def elimination_matrix(p: int) -> np.ndarray:
    """0/1 matrix ``L`` with ``L @ vec(A) == vech(A)``."""
    rows, cols = vech_indices(p)
    out = np.zeros((rows.size, p * p))
    out[np.arange(rows.size), rows + cols * p] = 1.0
    return out


def f_gls(graph: Graph, sigma: int, S, W=None) -> int:
    """(s - sigma)' W (s - sigma) on the half-vectorized covariances."""
    p = graph.shape(sigma)[0]
    S = _check_cov(S, p)
    q = p * (p + 1) // 2
    W = gls_weight(S) if W is None else np.asarray(W, dtype=float)
    if W.shape != (q, q):
        raise ObjectiveError(f"weight matrix has shape {W.shape}, expected {(q, q)}")
    vec_sigma = graph.reshape(sigma, (p * p, 1))
    sig = graph.matmul(graph.constant(elimination_matrix(p)), vec_sigma)
    resid = graph.sub(graph.constant(vech(S).reshape(-1, 1)), sig)
    quad = graph.matmul(graph.transpose(resid), graph.matmul(graph.constant(W), resid))
    return quad


def f_lad(graph: Graph, sigma: int, S) -> int:
    """Sum of absolute deviations over all P*P cells."""
    p = graph.shape(sigma)[0]
    S = _check_cov(S, p)
    return graph.sum(graph.abs(graph.sub(sigma, graph.constant(S))))


def f_ls(graph: Graph, X, y, beta: int) -> int:
    """(y - X beta)'(y - X beta)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    if X.shape[0] != y.shape[0]:
        raise ObjectiveError("X and y have different numbers of rows")
    resid = graph.sub(graph.constant(y), graph.matmul(graph.constant(X), beta))
    return graph.sum(graph.square(resid))


def resolve_target(target, spec: ParameterSpec) -> list[int]:
    if isinstance(target, str):
        key = target.lower()
        if key in MATRICES:
            idx = spec.indices_in(key)
            if not idx:
                raise ObjectiveError(f"penalty target {target!r} has no free parameters")
            return idx
        target = (target,)
    lookup = {label: i for i, label in enumerate(spec.labels)}
    idx = []
    for label in target:
        if label not in lookup:
            raise ObjectiveError(f"penalty target {label!r} is not a free parameter")
        idx.append(lookup[label])
    if not idx:
        raise ObjectiveError("empty penalty target")
    return sorted(set(idx))


def add_penalty(graph: Graph, objective: int, term: PenaltyTerm, spec: ParameterSpec) -> int:
    indices = resolve_target(term.target, spec)
    params = graph.gather(np.array(indices))
    w1, w2 = term.weights()
    out = objective
    if term.kind != "ridge":
        out = graph.add(out, graph.scale(graph.sum(graph.abs(params)), w1))
    if term.kind != "lasso":
        out = graph.add(out, graph.scale(graph.sum(graph.square(params)), w2))
    return out


def build_objective(spec: ParameterSpec, S, objective: ObjectiveSpec | None = None) -> Graph:
    """Graph for the chosen fit function of Sigma(theta) plus its penalties."""
    objective = objective or ObjectiveSpec()
    graph = Graph(spec.theta_dim)
    sigma = build_sigma(graph, spec)
    if objective.base == "ml":
        out = f_ml(graph, sigma, S)
    elif objective.base == "gls":
        out = f_gls(graph, sigma, S, objective.weight)
    elif objective.base == "lad":
        out = f_lad(graph, sigma, S)
    else:
        raise ObjectiveError("the least-squares objective needs X and y; use f_ls directly")
    for term in objective.penalties:
        out = add_penalty(graph, out, term, spec)
    graph.set_output(out)
    return graph


def penalty_total(theta, spec: ParameterSpec, penalties: Sequence[PenaltyTerm]) -> float:
    return sum(t.value(theta, resolve_target(t.target, spec)) for t in penalties)
