"""First-order optimizers and the fitting loop."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .graph import EvaluationError, Graph

log = logging.getLogger(__name__)

METHODS = ("gd", "momentum", "adam")
MAX_HALVINGS = 10
WINDOW = 10


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iter: int = 5000
    tol_grad: float = 1e-5
    tol_obj: float = 1e-12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown optimizer {self.method!r}")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, k: int) -> "OptimizerState":
        return cls(np.zeros(k), np.zeros(k), 0)


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAXITER = "maxiter"
    FAILED = "failed"


@dataclass
class FitResult:
    theta_hat: np.ndarray
    objective: float
    objective_trace: np.ndarray
    grad_inf_norm: float
    iterations: int
    status: Status
    reason: str = ""
    hessian: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def step_gd(theta, grad, config: OptimizerConfig):
    return np.asarray(theta) - config.step_size * np.asarray(grad)


def step_momentum(theta, grad, state: OptimizerState, config: OptimizerConfig):
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    return theta - config.step_size * m, OptimizerState(m, state.v, state.t + 1)


def step_adam(theta, grad, state: OptimizerState, config: OptimizerConfig, t: int):
    if t < 1:
        raise ValueError("Adam iteration counter starts at 1")
    m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    new = theta - config.step_size * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new, OptimizerState(m, v, t)


def _step(theta, grad, state, config):
    if config.method == "gd":
        return step_gd(theta, grad, config), OptimizerState(state.m, state.v, state.t + 1)
    if config.method == "momentum":
        return step_momentum(theta, grad, state, config)
    return step_adam(theta, grad, state, config, state.t + 1)


def _converged(trace: list[float], grad_norm: float, config: OptimizerConfig) -> bool:
    if grad_norm <= config.tol_grad:
        return True
    if len(trace) > WINDOW:
        new, old = trace[-1], trace[-1 - WINDOW]
        return abs(new - old) <= config.tol_obj * max(abs(new), 1.0)
    return False


def fit(graph: Graph, theta0, config: OptimizerConfig | None = None) -> FitResult:
    """Minimize the graph output starting at ``theta0``.

    A step that lands where the graph cannot be evaluated (for instance a
    non-positive-definite implied covariance) is retried from the same
    optimizer state with the step size halved, up to ten times.
    """
    config = config or OptimizerConfig()
    theta = np.array(theta0, dtype=float)
    state = OptimizerState.zeros(theta.size)
    try:
        value, grad = graph.value_and_grad(theta)
    except EvaluationError as exc:
        return FitResult(theta, np.nan, np.array([]), np.inf, 0, Status.FAILED, f"start: {exc}")

    trace: list[float] = []
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    status, reason = Status.MAXITER, ""
    if _converged(trace, gnorm, config):
        status = Status.CONVERGED
    it = 0
    while status is not Status.CONVERGED and it < config.max_iter:
        if not np.all(np.isfinite(grad)):
            status, reason = Status.FAILED, "NaNGradient"
            break
        step_config = config
        for _ in range(MAX_HALVINGS + 1):
            candidate, new_state = _step(theta, grad, state, step_config)
            if not np.all(np.isfinite(candidate)):
                status, reason = Status.FAILED, "NonFiniteIterate"
                break
            try:
                new_value, new_grad = graph.value_and_grad(candidate)
                break
            except EvaluationError:
                step_config = replace(step_config, step_size=step_config.step_size / 2)
        else:
            status, reason = Status.FAILED, "NonPDUnrecoverable"
        if status is Status.FAILED:
            break
        theta, state, value, grad = candidate, new_state, new_value, new_grad
        it += 1
        trace.append(value)
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if _converged(trace, gnorm, config):
            status = Status.CONVERGED
    log.debug("fit finished: %s after %d iterations (|g|=%.3g)", status.value, it, gnorm)
    return FitResult(theta, value, np.array(trace), gnorm, it, status, reason)


def penalty_path(
    graph_builder: Callable[[float], Graph],
    lambdas: Sequence[float],
    theta0,
    config: OptimizerConfig | None = None,
    warm_start: bool = True,
) -> list[FitResult]:
    """Fit one graph per penalty strength, in the given order.

    With ``warm_start`` each fit starts from the previous successful estimate.
    A failed fit is recorded and the path continues.
    """
    if len(lambdas) == 0:
        raise ValueError("penalty_path needs at least one lambda")
    start = np.array(theta0, dtype=float)
    results = []
    for lam in lambdas:
        res = fit(graph_builder(lam), start, config)
        results.append(res)
        if warm_start and res.status is not Status.FAILED:
            start = res.theta_hat
    return results
