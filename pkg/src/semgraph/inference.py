"""Standard errors and fit measures for unpenalized ML fits.

Conventions follow the Wishart likelihood of ``(n - 1) S``: the sample
covariance uses divisor ``n - 1`` and ``ACOV = 2 / (n - 1) * H^-1`` where
``H`` is the Hessian of the ML fit function.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .model import ParameterSpec
from .objectives import ObjectiveSpec, build_objective


class InferenceUnavailable(ValueError):
    """Raised when standard errors or test statistics are requested for a
    fit whose objective is not the plain ML fit function."""


class InferenceWarning(UserWarning):
    pass


@dataclass
class InferenceReport:
    se: np.ndarray
    acov: np.ndarray
    chi2: float
    df: int
    p_value: float
    aic: float
    bic: float
    loglik: float
    n: int
    warnings: list[str] = field(default_factory=list)


def acov(hessian, n: int) -> tuple[np.ndarray, list[str]]:
    """Asymptotic covariance of the estimates from the ML Hessian."""
    h = np.asarray(hessian, dtype=float)
    notes = []
    try:
        np.linalg.cholesky(h)
        inv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        msg = "Hessian is not positive definite; using the pseudo-inverse"
        warnings.warn(msg, InferenceWarning, stacklevel=2)
        notes.append(msg)
        inv = np.linalg.pinv(h)
    out = 2.0 / (n - 1) * inv
    return 0.5 * (out + out.T), notes


def fit_measures(f_ml: float, S, n: int, theta_dim: int) -> dict:
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    df = p * (p + 1) // 2 - theta_dim
    if df < 0:
        raise ValueError(f"model has more free parameters ({theta_dim}) than moments")
    _, logdet_s = np.linalg.slogdet(S)
    chi2 = max((n - 1) * (f_ml - logdet_s - p), 0.0)
    # a saturated model has a degenerate reference distribution at 0
    p_value = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    loglik = -0.5 * (n - 1) * f_ml - 0.5 * (n - 1) * p * np.log(2 * np.pi)
    return {
        "chi2": float(chi2),
        "df": int(df),
        "p": p_value,
        "aic": float(-2 * loglik + 2 * theta_dim),
        "bic": float(-2 * loglik + theta_dim * np.log(n)),
        "loglik": float(loglik),
    }


def infer(spec: ParameterSpec, S, n: int, theta_hat, objective: ObjectiveSpec | None = None) -> InferenceReport:
    """Standard errors and fit measures at ``theta_hat``.

    Refuses penalized and non-ML objectives.
    """
    objective = objective or ObjectiveSpec()
    if objective.penalized:
        raise InferenceUnavailable("standard errors are not reported for penalized fits")
    if objective.base != "ml":
        raise InferenceUnavailable(f"standard errors are only available for ML fits, not {objective.base!r}")
    graph = build_objective(spec, S, ObjectiveSpec("ml"))
    f = graph.value(theta_hat)
    h = graph.hessian(theta_hat)
    cov, notes = acov(h, n)
    d = np.diag(cov)
    if np.any(d < 0):
        notes.append("negative variance in ACOV diagonal; affected standard errors are NaN")
    se = np.sqrt(np.where(d >= 0, d, np.nan))
    m = fit_measures(f, S, n, spec.theta_dim)
    return InferenceReport(se, cov, m["chi2"], m["df"], m["p"], m["aic"], m["bic"], m["loglik"], n, notes)
