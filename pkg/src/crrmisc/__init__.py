"""Proportional cause-specific hazards regression with misclassified causes of
failure, fitted by monotone B-spline sieve pseudo-likelihood."""

from .estimator import FitConfig, FitResult, default_knot_count, fit, initialize
from .inference import (BootstrapResult, bootstrap_variance, draw_gamma,
                        nonparametric_bootstrap, resample)
from .likelihood import gradient, log_pseudo_likelihood, phi, phi_deriv
from .model import (Dataset, DesignSpec, GammaEstimate, IdentifiabilityWarning,
                    MisclassModel, Theta, classification_matrix, identifiability_check)
from .predict import CifCurve, ParametricBaseline, cif, cumulative_hazard, survival
from .simulate import Scenario, generate_dataset, run_study
from .splines import KnotVector, basis, basis_deriv, constrain, make_knots

__version__ = "0.1.0"
