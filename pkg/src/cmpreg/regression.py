"""Maximum-likelihood COM-Poisson regression in both parametrizations.

``mean``: log(mu_i) = x_i'beta with the COM-Poisson_mu pmf.
``original``: log(lambda_i) = x_i'beta. In both, phi = log(nu).
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .core import DEFAULT_MAX_TERMS, log_series
from .glm import check_design, fit_poisson_irls
from .numopt import maximize_bfgs, numeric_hessian

PHI_BOUND = 8.0
PARAMETRIZATIONS = ("mean", "original")
# Tighter than the distribution default: truncation jumps in log Z would
# otherwise show up as noise in finite-difference derivatives.
REGRESSION_REL_TOL = 1e-15


@dataclass
class RegressionSpec:
    y: np.ndarray
    X: np.ndarray
    parametrization: str = "mean"
    series_rel_tol: float = REGRESSION_REL_TOL
    series_max_terms: int = DEFAULT_MAX_TERMS
    diagnostics: Counter = field(default_factory=Counter, repr=False, compare=False)

    def __post_init__(self):
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"parametrization must be one of {PARAMETRIZATIONS}")
        self.y, self.X = check_design(self.y, self.X)
        n, p = self.X.shape
        if n <= p + 1:
            raise ValueError(f"need n > p + 1, got n={n}, p={p}")
        self._lgy = gammaln(self.y + 1)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class FitResult:
    beta: np.ndarray
    phi: float
    loglik: float
    vcov: Optional[np.ndarray]
    est_se_ratio: Optional[np.ndarray]
    n_evals: int
    converged: bool
    parametrization: str
    n: int
    iterations: int = 0
    message: str = ""
    wall_time: float = 0.0
    phi_fixed: bool = False

    @property
    def theta(self) -> np.ndarray:
        return np.append(self.beta, self.phi)

    @property
    def np(self) -> int:
        return self.beta.size + 1

    @property
    def se(self) -> Optional[np.ndarray]:
        if self.vcov is None:
            return None
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))

    @property
    def vcov_available(self) -> bool:
        return self.vcov is not None


def _invalid(spec: RegressionSpec, reason: str) -> float:
    spec.diagnostics[reason] += 1
    return -math.inf


def _log_z_per_obs(log_lam: np.ndarray, nu: float, spec: RegressionSpec) -> Optional[np.ndarray]:
    # designed experiments repeat covariate cells; evaluate each distinct lambda once
    uniq, inv = np.unique(log_lam, return_inverse=True)
    res = log_series(uniq, nu, 0, spec.series_rel_tol, spec.series_max_terms)
    if not res.converged.all():
        return None
    return res.log_value[inv]


def loglik_cmp_mu(beta, phi: float, spec: RegressionSpec) -> float:
    """Log-likelihood of the mean-parametrized model (-inf outside the domain)."""
    if not abs(phi) <= PHI_BOUND:
        return _invalid(spec, "phi_out_of_range")
    eta = spec.X @ np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(eta)) or eta.max() > 700:
        return _invalid(spec, "eta_overflow")
    base = np.exp(eta) - 0.5 * math.expm1(-phi)
    if np.any(base <= 0):
        return _invalid(spec, "nonpositive_base")
    nu = math.exp(phi)
    log_base = np.log(base)
    log_z = _log_z_per_obs(nu * log_base, nu, spec)
    if log_z is None:
        return _invalid(spec, "series_not_converged")
    # per-observation terms first: the two sums cancel heavily when nu is large
    return float(np.sum(nu * (spec.y * log_base - spec._lgy) - log_z))


def loglik_cmp_original(beta, phi: float, spec: RegressionSpec) -> float:
    """Log-likelihood with log(lambda_i) = x_i'beta and nu = exp(phi)."""
    if not abs(phi) <= PHI_BOUND:
        return _invalid(spec, "phi_out_of_range")
    log_lam = spec.X @ np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(log_lam)):
        return _invalid(spec, "eta_overflow")
    nu = math.exp(phi)
    log_z = _log_z_per_obs(log_lam, nu, spec)
    if log_z is None:
        return _invalid(spec, "series_not_converged")
    return float(np.sum(spec.y * log_lam - nu * spec._lgy - log_z))


def loglik(theta, spec: RegressionSpec) -> float:
    theta = np.asarray(theta, dtype=float)
    fn = loglik_cmp_mu if spec.parametrization == "mean" else loglik_cmp_original
    return fn(theta[:-1], float(theta[-1]), spec)


def observed_vcov(f, theta) -> Optional[np.ndarray]:
    """Inverse observed information, or None when it is not positive definite."""
    H = numeric_hessian(f, theta)
    info = -H
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        return None
    vcov = np.linalg.inv(info)
    return (vcov + vcov.T) / 2


def fit(spec: RegressionSpec, start=None, fixed_phi: Optional[float] = None,
        gtol: float = 1e-6, max_iter: int = 500) -> FitResult:
    """Fit by BFGS, warm-started from the Poisson GLM with phi = 0.

    With ``fixed_phi`` only beta is optimized; the phi row and column of
    the covariance are then zero.
    """
    t0 = time.perf_counter()
    p = spec.p
    if start is None:
        start = np.append(fit_poisson_irls(spec.y, spec.X).beta, 0.0)
    start = np.asarray(start, dtype=float)

    if fixed_phi is None:
        f = lambda th: loglik(th, spec)  # noqa: E731
        x0 = start
    else:
        f = lambda b: loglik(np.append(b, fixed_phi), spec)  # noqa: E731
        x0 = start[:p]

    opt = maximize_bfgs(f, x0, gtol=gtol, max_iter=max_iter)
    n_evals = opt.n_evals

    vcov = None
    message = opt.message
    try:
        vcov = observed_vcov(f, opt.argmax)
    except ArithmeticError as exc:
        message = f"{message}; hessian failed: {exc}"
    if vcov is None:
        message = f"{message}; observed information not positive definite"
    elif fixed_phi is not None:
        full = np.zeros((p + 1, p + 1))
        full[:p, :p] = vcov
        vcov = full

    if fixed_phi is None:
        beta, phi = opt.argmax[:p].copy(), float(opt.argmax[p])
    else:
        beta, phi = opt.argmax.copy(), float(fixed_phi)

    ratio = None
    if vcov is not None:
        se = np.sqrt(np.clip(np.diag(vcov), 0, None))
        est = np.append(beta, phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(se > 0, est / se, np.nan)

    return FitResult(
        beta=beta, phi=phi, loglik=opt.max_value, vcov=vcov, est_se_ratio=ratio,
        n_evals=n_evals, converged=opt.converged, parametrization=spec.parametrization,
        n=spec.n, iterations=opt.iterations, message=message,
        wall_time=time.perf_counter() - t0, phi_fixed=fixed_phi is not None,
    )


def estimator_correlation(fit: FitResult) -> np.ndarray:
    """corr(beta_j, phi) for every coefficient, from the inverse observed information."""
    if fit.vcov is None:
        raise ValueError("covariance matrix unavailable for this fit")
    if fit.phi_fixed:
        raise ValueError("phi was held fixed; its correlation is undefined")
    v = fit.vcov
    p = fit.beta.size
    return v[:p, p] / np.sqrt(np.diag(v)[:p] * v[p, p])
