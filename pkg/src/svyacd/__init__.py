"""Average controlled difference estimation under group-dependent sample selection."""

from .data import DataError, Dataset
from .estimators import (
    COMPARISON,
    METHODS,
    PROPOSED,
    AcdEstimate,
    ModelSpec,
    comparison_estimators,
    estimate_acd,
    estimate_mu,
    prepare,
)
from .inference import SurveyDesign, sandwich_variance, stack_system, wald_ci
from .selection import KNOWN, MODELED, build_selection_model, marginal_selection_prob
from .simulate import SimConfig, run_sensitivity, run_study

__all__ = [
    "AcdEstimate", "COMPARISON", "DataError", "Dataset", "KNOWN", "METHODS", "MODELED",
    "ModelSpec", "PROPOSED", "SimConfig", "SurveyDesign", "build_selection_model",
    "comparison_estimators", "estimate_acd", "estimate_mu", "marginal_selection_prob",
    "prepare", "run_sensitivity", "run_study", "sandwich_variance", "stack_system", "wald_ci",
]
