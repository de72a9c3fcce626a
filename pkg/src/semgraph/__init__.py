"""Structural equation models as differentiable computation graphs."""
from .graph import EvaluationError, Graph, NotPositiveDefiniteError
from .inference import InferenceReport, InferenceUnavailable, acov, fit_measures, infer
from .model import ModelMatrices, ParameterSpec, SlotMatrix, build_sigma, default_start, duplication_matrix, vech
from .objectives import (
    ObjectiveSpec,
    PenaltyTerm,
    add_penalty,
    build_objective,
    f_gls,
    f_lad,
    f_ls,
    f_ml,
)
from .optim import FitResult, OptimizerConfig, Status, fit, penalty_path
from .syntax import LoweredModel, load_model, lower, parse, render

__version__ = "0.1.0"
