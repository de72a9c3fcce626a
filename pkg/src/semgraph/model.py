"""All-y SEM parameterization and the model-implied covariance subgraph.

Parameter ordering follows ``vec(lambda), vech(psi), vec(b0), vech(theta)``
with column-major vec and column-major lower-triangle vech.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph

FIXED = -1
MATRICES = ("lambda", "psi", "b0", "theta")
SYMMETRIC = {"lambda": False, "psi": True, "b0": False, "theta": True}


def vec(a) -> np.ndarray:
    return np.asarray(a, dtype=float).ravel(order="F")


def vech(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"vech needs a square matrix, got shape {a.shape}")
    rows, cols = vech_indices(a.shape[0])
    return a[rows, cols]


def vech_indices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the lower triangle in column-major order."""
    cols, rows = np.triu_indices(p)
    return rows, cols


def unvech(v, p: int) -> np.ndarray:
    v = np.asarray(v)
    out = np.zeros((p, p), dtype=v.dtype)
    rows, cols = vech_indices(p)
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def duplication_matrix(p: int) -> np.ndarray:
    """0/1 matrix ``D`` with ``D @ vech(A) == vec(A)`` for symmetric ``A``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    rows, cols = vech_indices(p)
    d = np.zeros((p * p, rows.size))
    for k, (i, j) in enumerate(zip(rows, cols)):
        d[i + j * p, k] = 1.0
        d[j + i * p, k] = 1.0
    return d


@dataclass(frozen=True)
class SlotMatrix:
    """Free/fixed pattern of one model matrix.

    ``index[i, j] >= 0`` points into theta; ``FIXED`` marks a fixed slot
    whose value is ``fixed[i, j]``. Symmetric matrices are stored full but
    only their lower triangle is authoritative; the upper triangle mirrors it.
    """

    index: np.ndarray
    fixed: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        index = np.array(self.index, dtype=int)
        fixed = np.array(self.fixed, dtype=float)
        if index.shape != fixed.shape or index.ndim != 2:
            raise ValueError("index and fixed must be matching 2-D arrays")
        fixed = np.where(index >= 0, 0.0, fixed)
        if self.symmetric:
            if index.shape[0] != index.shape[1]:
                raise ValueError("symmetric slot matrix must be square")
            lower = np.tril(np.ones(index.shape, dtype=bool))
            index = np.where(lower, index, index.T)
            fixed = np.where(lower, fixed, fixed.T)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "fixed", fixed)

    @property
    def shape(self):
        return self.index.shape

    def slots(self):
        """(row, col) pairs in parameter-vector order (vec or vech)."""
        if self.symmetric:
            rows, cols = vech_indices(self.shape[0])
        else:
            cols, rows = np.meshgrid(np.arange(self.shape[1]), np.arange(self.shape[0]))
            rows, cols = rows.ravel(order="F"), cols.ravel(order="F")
        return list(zip(rows.tolist(), cols.tolist()))

    def assemble(self, theta) -> np.ndarray:
        out = self.fixed.copy()
        mask = self.index >= 0
        out[mask] = np.asarray(theta, dtype=float)[self.index[mask]]
        return out


@dataclass(frozen=True)
class ModelMatrices:
    lambda_: SlotMatrix
    psi: SlotMatrix
    b0: SlotMatrix
    theta: SlotMatrix

    def __post_init__(self):
        p, m = self.lambda_.shape
        if self.psi.shape != (m, m) or self.b0.shape != (m, m) or self.theta.shape != (p, p):
            raise ValueError("inconsistent model matrix shapes")
        if not (self.psi.symmetric and self.theta.symmetric):
            raise ValueError("psi and theta must be symmetric slot matrices")
        diag = np.diag(self.b0.index)
        if np.any(diag >= 0) or np.any(np.diag(self.b0.fixed) != 0):
            raise ValueError("diagonal of b0 must be fixed at 0")

    def __getitem__(self, name: str) -> SlotMatrix:
        return getattr(self, "lambda_" if name == "lambda" else name)

    @property
    def n_observed(self) -> int:
        return self.lambda_.shape[0]

    @property
    def n_latent(self) -> int:
        return self.lambda_.shape[1]


@dataclass(frozen=True)
class ParameterSpec:
    """Map from free parameters theta to the full all-y parameter set."""

    matrices: ModelMatrices
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        used = set()
        for name in MATRICES:
            idx = self.matrices[name].index
            used.update(idx[idx >= 0].tolist())
        k = len(self.labels)
        if used != set(range(k)):
            raise ValueError("free indices must be exactly 0..theta_dim-1, each referenced at least once")
        if len(set(self.labels)) != k:
            raise ValueError("parameter labels must be unique")

    @property
    def theta_dim(self) -> int:
        return len(self.labels)

    @property
    def n_observed(self) -> int:
        return self.matrices.n_observed

    @property
    def n_latent(self) -> int:
        return self.matrices.n_latent

    def locations(self):
        """First slot of each free parameter: list of (matrix, row, col)."""
        seen = {}
        for name in MATRICES:
            sm = self.matrices[name]
            for r, c in sm.slots():
                i = sm.index[r, c]
                if i >= 0 and i not in seen:
                    seen[i] = (name, r, c)
        return [seen[i] for i in range(self.theta_dim)]

    def indices_in(self, name: str) -> list[int]:
        idx = self.matrices[name].index
        return sorted(set(idx[idx >= 0].tolist()))

    def assemble(self, theta) -> dict[str, np.ndarray]:
        return {name: self.matrices[name].assemble(theta) for name in MATRICES}

    def implied_cov(self, theta) -> np.ndarray:
        """Plain numpy evaluation of the implied covariance (no graph)."""
        mats = self.assemble(theta)
        m = self.n_latent
        binv = np.linalg.inv(np.eye(m) - mats["b0"])
        lb = mats["lambda"] @ binv
        return lb @ mats["psi"] @ lb.T + mats["theta"]

    @classmethod
    def from_patterns(cls, lambda_, psi, b0, theta, labels=None) -> "ParameterSpec":
        """Build a spec where NaN entries are free and numbers are fixed.

        Each NaN gets its own parameter, numbered in parameter-vector order.
        Only the lower triangles of ``psi`` and ``theta`` are read.
        """
        patterns = dict(zip(MATRICES, (lambda_, psi, b0, theta)))
        slot_mats = {}
        auto = []
        k = 0
        for name in MATRICES:
            pat = np.array(patterns[name], dtype=float)
            if SYMMETRIC[name]:
                pat = np.where(np.tril(np.ones(pat.shape, dtype=bool)), pat, pat.T)
            index = np.full(pat.shape, FIXED)
            probe = SlotMatrix(index, np.zeros(pat.shape), SYMMETRIC[name])
            for r, c in probe.slots():
                if np.isnan(pat[r, c]):
                    index[r, c] = k
                    auto.append(f"{name}[{r},{c}]")
                    k += 1
            slot_mats[name] = SlotMatrix(index, np.nan_to_num(pat), SYMMETRIC[name])
        mats = ModelMatrices(slot_mats["lambda"], slot_mats["psi"], slot_mats["b0"], slot_mats["theta"])
        return cls(mats, tuple(labels) if labels is not None else tuple(auto))


def _symmetric_from_vech(graph: Graph, sm: SlotMatrix) -> int:
    p = sm.shape[0]
    v = graph.gather(vech(sm.index), vech(sm.fixed))
    full = graph.matmul(graph.constant(duplication_matrix(p)), v)
    return graph.reshape(full, (p, p))


def build_matrices(graph: Graph, spec: ParameterSpec) -> dict[str, int]:
    """Emit gather nodes for the four model matrices."""
    mats = spec.matrices
    return {
        "lambda": graph.gather(mats.lambda_.index, mats.lambda_.fixed),
        "psi": _symmetric_from_vech(graph, mats.psi),
        "b0": graph.gather(mats.b0.index, mats.b0.fixed),
        "theta": _symmetric_from_vech(graph, mats.theta),
    }


def build_sigma(graph: Graph, spec: ParameterSpec) -> int:
    """Emit the subgraph for lambda B^-1 psi B^-T lambda^T + theta, B = I - b0."""
    if graph.theta_dim != spec.theta_dim:
        raise ValueError("graph theta_dim does not match the parameter spec")
    nodes = build_matrices(graph, spec)
    m = spec.n_latent
    b = graph.sub(graph.constant(np.eye(m)), nodes["b0"])
    binv = graph.inverse(b, symmetric=False)
    lb = graph.matmul(nodes["lambda"], binv)
    common = graph.matmul(graph.matmul(lb, nodes["psi"]), graph.transpose(lb))
    return graph.add(common, nodes["theta"])


def default_start(spec: ParameterSpec, S) -> np.ndarray:
    """Starting values that keep the implied covariance positive definite.

    Loadings start at 1, residual variances at half the observed variance,
    latent variances at ``0.05 * mean(diag(S))`` when the latent has a fixed
    nonzero (marker) loading and at 1 otherwise; everything else at 0.
    """
    S = np.asarray(S, dtype=float)
    diag_s = np.diag(S)
    mats = spec.matrices
    theta0 = np.zeros(spec.theta_dim)
    for j in spec.indices_in("lambda"):
        theta0[j] = 1.0
    lam = mats.lambda_
    has_marker = [
        bool(np.any((lam.index[:, c] < 0) & (lam.fixed[:, c] != 0)))
        for c in range(spec.n_latent)
    ]
    for c in range(spec.n_latent):
        j = mats.psi.index[c, c]
        if j >= 0:
            theta0[j] = 0.05 * diag_s.mean() if has_marker[c] else 1.0
    for r in range(spec.n_observed):
        j = mats.theta.index[r, r]
        if j >= 0:
            theta0[j] = 0.5 * diag_s[r]
    return theta0
