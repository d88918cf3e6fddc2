"""Geographical random forest toolkit for spatial severity risk mapping."""

from .forest import Forest, ForestParams, feature_importance, fit_forest, predict_proba
from .grf import GrfHyperParams, GrfModel, fit_grf, predict_grf

__all__ = [
    "Forest",
    "ForestParams",
    "GrfHyperParams",
    "GrfModel",
    "feature_importance",
    "fit_forest",
    "fit_grf",
    "predict_grf",
    "predict_proba",
]
__version__ = "0.1.0"
