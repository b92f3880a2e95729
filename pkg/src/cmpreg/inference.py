"""Information criteria, nested-model tests and delta-method intervals for mu."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import fdtrc, gammaincc, ndtri


@dataclass
class ComparisonRow:
    model_label: str
    np: int
    loglik: Optional[float] = None
    qdev: Optional[float] = None
    aic: Optional[float] = None
    bic: Optional[float] = None
    stat: Optional[float] = None
    df: Optional[int] = None
    p_value: Optional[float] = None


@dataclass
class Prediction:
    eta_hat: float
    mu_hat: float
    ci_low: float
    ci_high: float
    level: float


def aic_bic(loglik: float, np_: int, n: int) -> tuple[float, float]:
    if n <= 0 or np_ < 1:
        raise ValueError("need n > 0 and at least one parameter")
    return -2 * loglik + 2 * np_, -2 * loglik + np_ * math.log(n)


def chi2_sf(stat: float, df: int) -> float:
    """Upper chi-square tail via the regularized upper incomplete gamma Q(df/2, stat/2)."""
    if stat <= 0:
        return 1.0
    return float(gammaincc(df / 2, stat / 2))


def lrt(ll_small: float, ll_big: float, df: int, label: str = "",
        np_big: Optional[int] = None) -> ComparisonRow:
    if df < 1:
        raise ValueError("likelihood-ratio test needs df >= 1")
    diff = ll_big - ll_small
    if diff < 0:
        if diff < -1e-6:
            warnings.warn(f"larger model has lower log-likelihood ({diff:.3g})", RuntimeWarning,
                          stacklevel=2)
        diff = 0.0
    stat = 2 * diff
    return ComparisonRow(model_label=label, np=np_big if np_big is not None else df,
                         loglik=ll_big, stat=stat, df=df, p_value=chi2_sf(stat, df))


def quasi_f_test(qdev_small: float, qdev_big: float, np_small: int, np_big: int,
                 sigma_hat_big: float, n: int, label: str = "") -> ComparisonRow:
    """F statistic from the drop in quasi-deviance, scaled by the larger model's sigma."""
    if np_big <= np_small:
        raise ValueError("the larger model must have more parameters")
    if not sigma_hat_big > 0:
        raise ValueError("sigma_hat must be positive")
    df1 = np_big - np_small
    df2 = n - np_big
    F = max((qdev_small - qdev_big) / df1 / sigma_hat_big, 0.0)
    p = 1.0 if F == 0 else float(fdtrc(df1, df2, F))
    return ComparisonRow(model_label=label, np=np_big, qdev=qdev_big, stat=F, df=df1,
                         p_value=p)


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


def predict_mu(fit, x_new, level: float = 0.95) -> Prediction:
    """Delta-method interval, built on the linear-predictor scale and exponentiated.

    ``fit`` is any result with ``beta`` and ``vcov`` (the beta block is used).
    """
    if getattr(fit, "vcov", None) is None:
        raise ValueError("covariance matrix unavailable for this fit")
    if not 0 <= level < 1:
        raise ValueError("level must lie in [0, 1)")
    x = np.asarray(x_new, dtype=float)
    p = fit.beta.size
    V = np.asarray(fit.vcov)[:p, :p]
    eta = float(x @ fit.beta)
    se = math.sqrt(max(float(x @ V @ x), 0.0))
    z = normal_quantile((1 + level) / 2)
    return Prediction(eta_hat=eta, mu_hat=math.exp(eta), ci_low=math.exp(eta - z * se),
                      ci_high=math.exp(eta + z * se), level=level)
