"""Spatial Poisson hurdle models with Gaussian Markov random field effects."""

from .climate import bilinear_resample, build_design, relative_humidity, saturation_vapor_pressure
from .diagnostics import pearson_residuals, prediction_surfaces, roc_curve
from .estimator import SpatialHurdleRegressor
from .gmrf import Hyperparams, build_Q_block, conditional_moments, joint_precision, log_prior_density
from .grid import GridSpec, RasterStack, aggregate_monthly, build_laplacian
from .hurdle import Dataset, HurdleLikelihood, expected_count, hurdle_pmf, link_lambda, link_pi
from .inference import (FitResult, NelderMeadSettings, NewtonSettings, confidence_intervals,
                        find_mode, log_marginal_posterior, maximize_marginal)
from .io import load_dataset, write_dataset
from .simulate import SimConfig, sample_counts, sample_gmrf, simulate

__version__ = "0.1.0"
