"""Dynamic logistic regression bandits with Laplace-approximate Thompson sampling."""
from .core_model import GaussianBelief, LinkFunction
from .decay import DriftSchedule, RateClass, classify_rate, discount_factor
from .inference import ArmModel, laplace_update, step
from .policies import PolicyConfig, probability_optimal, select
from .simulator import EnvironmentSpec, ModelSelectionPlan, aggregate, generate, model_select, run_experiment

__all__ = [
    "ArmModel",
    "DriftSchedule",
    "EnvironmentSpec",
    "GaussianBelief",
    "LinkFunction",
    "ModelSelectionPlan",
    "PolicyConfig",
    "RateClass",
    "aggregate",
    "classify_rate",
    "discount_factor",
    "generate",
    "laplace_update",
    "model_select",
    "probability_optimal",
    "run_experiment",
    "select",
    "step",
]
