"""Augmented Gaussian sum filtering and baseline filters for nonlinear state-space models."""

from agsf.augmentation import (
    AdaptiveProportional,
    Fixed,
    Proportional,
    augment_split,
    augmented_joint,
    mse_objective,
    optimal_rho,
    resolve_delta,
)
from agsf.filters import FilterConfig, FilterStepOutput, iter_filter, run_filter
from agsf.gaussian import (
    Gaussian,
    GaussianMixture,
    JointGaussian,
    condition_mixture,
    log_pdf,
    mixture_log_pdf,
    mixture_moments,
    sample,
)
from agsf.models import (
    LinearGaussianModel,
    StateSpaceModel,
    SwitchingModel,
    SwitchingModelConfig,
    TrackingModel,
    TrackingModelConfig,
    Trajectory,
    simulate,
)
from agsf.moments import Transform, UnscentedConfig, kalman_condition, linear_moments, unscented_moments

__all__ = [
    "AdaptiveProportional",
    "Fixed",
    "FilterConfig",
    "FilterStepOutput",
    "Gaussian",
    "GaussianMixture",
    "JointGaussian",
    "LinearGaussianModel",
    "Proportional",
    "StateSpaceModel",
    "SwitchingModel",
    "SwitchingModelConfig",
    "TrackingModel",
    "TrackingModelConfig",
    "Trajectory",
    "Transform",
    "UnscentedConfig",
    "augment_split",
    "augmented_joint",
    "condition_mixture",
    "iter_filter",
    "kalman_condition",
    "linear_moments",
    "log_pdf",
    "mixture_log_pdf",
    "mixture_moments",
    "mse_objective",
    "optimal_rho",
    "resolve_delta",
    "run_filter",
    "sample",
    "simulate",
    "unscented_moments",
]
