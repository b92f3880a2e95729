"""Poisson log-link GLM by IRLS, and the quasi-Poisson dispersion extension."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, xlogy


class SingularDesignError(ValueError):
    """Design matrix is not of full column rank."""


@dataclass
class GlmFit:
    beta: np.ndarray
    vcov: np.ndarray
    loglik: Optional[float]
    deviance: float
    pearson_x2: float
    sigma_hat: float
    n: int
    p: int
    converged: bool
    iterations: int
    fitted: np.ndarray
    family: str = "poisson"

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))

    @property
    def est_se_ratio(self) -> np.ndarray:
        return self.beta / self.se

    @property
    def np(self) -> int:
        """Parameter count for model comparison (sigma counts for quasi-Poisson)."""
        return self.p + (self.family == "quasipoisson")


def poisson_loglik(y, mu) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(xlogy(y, mu) - mu - gammaln(y + 1)))


def poisson_deviance(y, mu) -> float:
    y = np.asarray(y, dtype=float)
    return float(2 * np.sum(xlogy(y, y / mu) - (y - mu)))


def check_design(y, X):
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be an n x p matrix matching y")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("response must hold non-negative integers")
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need n > p, got n={n}, p={p}")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError("design matrix is rank deficient")
    return y, X


def fit_poisson_irls(y, X, tol: float = 1e-12, max_iter: int = 100) -> GlmFit:
    y, X = check_design(y, X)
    n, p = X.shape
    beta = np.zeros(p)
    const = np.flatnonzero(np.all(X == 1.0, axis=0))
    if const.size:
        beta[const[0]] = np.log(y.mean() + 0.5)
    eta = X @ beta
    mu = np.exp(eta)
    dev = poisson_deviance(y, mu)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = eta + (y - mu) / mu
        w = mu
        XtW = X.T * w
        beta = np.linalg.solve(XtW @ X, XtW @ z)
        eta = X @ beta
        mu = np.exp(eta)
        dev_new = poisson_deviance(y, mu)
        change = abs(dev_new - dev) / (abs(dev_new) + 0.1)
        dev = dev_new
        if change < tol:
            converged = True
            break
    vcov = np.linalg.inv((X.T * mu) @ X)
    vcov = (vcov + vcov.T) / 2
    return GlmFit(
        beta=beta, vcov=vcov, loglik=poisson_loglik(y, mu), deviance=dev,
        pearson_x2=float(np.sum((y - mu) ** 2 / mu)), sigma_hat=1.0,
        n=n, p=p, converged=converged, iterations=it, fitted=mu,
    )


def quasi_poisson(fit: GlmFit) -> GlmFit:
    """Pearson-scaled dispersion; beta unchanged, vcov scaled, no likelihood."""
    if fit.n <= fit.p:
        raise ValueError("quasi-Poisson dispersion needs n > p")
    sigma = fit.pearson_x2 / (fit.n - fit.p)
    return dataclasses.replace(fit, vcov=fit.vcov * sigma, sigma_hat=sigma,
                               loglik=None, family="quasipoisson")
