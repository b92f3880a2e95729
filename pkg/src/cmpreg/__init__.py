"""COM-Poisson regression in the original and mean parametrizations."""

from .core import (DispersionIndexes, LogZ, MeanParams, Moments, OriginalParams, approx_mean,
                   approx_variance, cdf, exact_moments, indexes, log_pmf, log_z, log_z_original,
                   quantile, sample, to_mean, to_original)
from .glm import GlmFit, fit_poisson_irls, quasi_poisson
from .regression import FitResult, RegressionSpec, estimator_correlation, fit

__version__ = "0.1.0"
