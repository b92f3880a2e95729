"""Simulation study of the mean-parametrized estimator: bias, coverage, orthogonality."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import sample_mean_params
from .inference import normal_quantile
from .regression import RegressionSpec, estimator_correlation, fit, loglik

BETA_TRUE = (2.0, 0.5, 0.8, -0.8)
PHI_SCENARIOS = (-1.6, -1.0, 0.0, 1.8)
SAMPLE_SIZES = (50, 100, 300, 1000)
PARAM_NAMES = ("beta0", "beta1", "beta21", "beta22", "phi")
FLAG_FRACTION = 0.10


@dataclass
class SimScenario:
    n: int
    phi_true: float
    beta_true: tuple = BETA_TRUE
    replicates: int = 1000
    seed: int = 0
    level: float = 0.95

    def __post_init__(self):
        if self.n < 6:
            raise ValueError("n must be at least 6 so every factor level is present")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        self.beta_true = tuple(float(b) for b in self.beta_true)
        if len(self.beta_true) != 4:
            raise ValueError("beta_true holds (beta0, beta1, beta21, beta22)")

    @property
    def theta_true(self) -> np.ndarray:
        return np.array(self.beta_true + (self.phi_true,))


@dataclass
class ReplicateRecord:
    replicate: int
    converged: bool
    estimates: list
    se: Optional[list]
    covered: Optional[list]
    corr: Optional[list]


@dataclass
class SimSummary:
    scenario: SimScenario
    n_used: int
    n_excluded: int
    flagged: bool
    mean_bias: list
    mean_se: list
    standardization_divisor: list
    standardized_bias: list
    coverage: list
    mean_corr: list
    mean_abs_corr: list
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("records")
        out["parameters"] = list(PARAM_NAMES)
        return out


def gen_design(n: int) -> np.ndarray:
    """Intercept, x1 on [0, 1], and treatment dummies for a 3-level factor.

    The factor runs in blocks of ceil(n/3), truncated to n.
    """
    if n < 6:
        raise ValueError("n must be at least 6")
    x1 = np.linspace(0.0, 1.0, n)
    level = np.repeat(np.arange(3), math.ceil(n / 3))[:n]
    return np.column_stack([np.ones(n), x1, level == 1, level == 2]).astype(float)


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replicate); independent of run order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate])))


def simulate_counts(s: SimScenario, replicate: int, X: Optional[np.ndarray] = None) -> np.ndarray:
    X = gen_design(s.n) if X is None else X
    mu = np.exp(X @ np.asarray(s.beta_true))
    return sample_mean_params(mu, s.phi_true, replicate_rng(s.seed, replicate))


def run_replicate(s: SimScenario, replicate: int) -> ReplicateRecord:
    X = gen_design(s.n)
    y = simulate_counts(s, replicate, X)
    res = fit(RegressionSpec(y, X, "mean"))
    est = res.theta
    if not res.converged or res.vcov is None:
        return ReplicateRecord(replicate, False, est.tolist(), None, None, None)
    se = res.se
    z = normal_quantile((1 + s.level) / 2)
    covered = np.abs(est - s.theta_true) <= z * se
    return ReplicateRecord(replicate, True, est.tolist(), se.tolist(), covered.tolist(),
                           estimator_correlation(res).tolist())


def summarize(s: SimScenario, records: Sequence[ReplicateRecord],
              divisor: Optional[Sequence[float]] = None) -> SimSummary:
    """Aggregate replicate records in replicate order; unconverged ones are excluded."""
    records = sorted(records, key=lambda r: r.replicate)
    used = [r for r in records if r.converged]
    excluded = len(records) - len(used)
    k = len(PARAM_NAMES)
    if not used:
        nan = [math.nan] * k
        return SimSummary(s, 0, excluded, True, nan, nan, nan, nan, nan, nan[:4], nan[:4],
                          list(records))
    est = np.array([r.estimates for r in used])
    se = np.array([r.se for r in used])
    cov = np.array([r.covered for r in used], dtype=float)
    corr = np.array([r.corr for r in used])
    bias = est.mean(axis=0) - s.theta_true
    mean_se = se.mean(axis=0)
    div = mean_se if divisor is None else np.asarray(divisor, dtype=float)
    return SimSummary(
        scenario=s,
        n_used=len(used),
        n_excluded=excluded,
        flagged=excluded > FLAG_FRACTION * len(records),
        mean_bias=bias.tolist(),
        mean_se=mean_se.tolist(),
        standardization_divisor=div.tolist(),
        standardized_bias=(bias / div).tolist(),
        coverage=cov.mean(axis=0).tolist(),
        mean_corr=corr.mean(axis=0).tolist(),
        mean_abs_corr=np.abs(corr).mean(axis=0).tolist(),
        records=list(records),
    )


def run_scenario(s: SimScenario, divisor: Optional[Sequence[float]] = None,
                 workers: int = 1) -> SimSummary:
    """Simulate and fit every replicate of ``s``.

    ``divisor`` standardizes the bias (the study uses the average SE at
    n = 50); by default the scenario's own average SE is used.
    """
    reps = range(s.replicates)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(run_replicate, [s] * s.replicates, reps))
    else:
        records = [run_replicate(s, r) for r in reps]
    return summarize(s, records, divisor)


def run_study(phis: Sequence[float] = PHI_SCENARIOS, ns: Sequence[int] = SAMPLE_SIZES,
              replicates: int = 1000, seed: int = 0, beta_true=BETA_TRUE,
              workers: int = 1) -> dict:
    """All (phi, n) scenarios; bias standardized by the smallest n's average SE."""
    out = {}
    ns = sorted(ns)
    for phi in phis:
        divisor = None
        for n in ns:
            s = SimScenario(n=n, phi_true=phi, beta_true=beta_true, replicates=replicates,
                            seed=seed)
            summ = run_scenario(s, divisor, workers)
            if divisor is None:
                divisor = summ.mean_se
                summ = summarize(s, summ.records, divisor)
            out[(phi, n)] = summ
    return out


def write_replicates_csv(summaries: Sequence[SimSummary], path) -> None:
    """One row per (scenario, replicate, parameter)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "phi_true", "replicate", "parameter", "true", "estimate", "se",
                    "covered", "corr_with_phi", "converged"])
        for summ in summaries:
            s = summ.scenario
            theta = s.theta_true
            for r in summ.records:
                for j, name in enumerate(PARAM_NAMES):
                    w.writerow([
                        s.n, repr(s.phi_true), r.replicate, name, repr(float(theta[j])),
                        repr(r.estimates[j]),
                        "" if r.se is None else repr(r.se[j]),
                        "" if r.covered is None else int(r.covered[j]),
                        "" if r.corr is None or j >= len(r.corr) else repr(r.corr[j]),
                        int(r.converged),
                    ])


def write_summary_json(summaries: Sequence[SimSummary], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schema": 1, "scenarios": [s.to_dict() for s in summaries]}, fh, indent=2)
        fh.write("\n")


def deviance_grid(spec: RegressionSpec, fit_result, size: int = 21, width: float = 3.0,
                  param: int = 0):
    """Deviance 2(l_max - l) on a grid over (beta_param, phi), other betas at the MLE.

    The grid spans +/- ``width`` standard errors in each direction and has an
    odd number of points so its centre is the MLE. Points outside the
    parameter domain are NaN. Returns (beta_values, phi_values, matrix) with
    rows indexed by beta and columns by phi.
    """
    if size % 2 == 0:
        size += 1
    theta = fit_result.theta
    se = fit_result.se
    if se is None:
        raise ValueError("fit has no standard errors to scale the grid")
    b_vals = theta[param] + np.linspace(-width, width, size) * se[param]
    p_vals = theta[-1] + np.linspace(-width, width, size) * se[-1]
    ll_max = fit_result.loglik
    dev = np.empty((size, size))
    for i, b in enumerate(b_vals):
        for j, ph in enumerate(p_vals):
            th = theta.copy()
            th[param] = b
            th[-1] = ph
            val = loglik(th, spec)
            dev[i, j] = 2 * (ll_max - val) if math.isfinite(val) else math.nan
    return b_vals, p_vals, dev


def write_deviance_csv(b_vals, p_vals, dev, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "phi", "deviance"])
        for i, b in enumerate(b_vals):
            for j, ph in enumerate(p_vals):
                w.writerow([repr(float(b)), repr(float(ph)),
                            "" if math.isnan(dev[i, j]) else repr(float(dev[i, j]))])


def quadratic_cross_term(b_vals, p_vals, dev) -> float:
    """Normalized cross term c / (2 sqrt(a b)) of dev ~ a u^2 + b v^2 + c u v + ...

    Coordinates are rescaled to [-1, 1]; the result is the correlation-like
    tilt of the level sets (0 for axis-aligned ellipses).
    """
    u = (np.asarray(b_vals) - b_vals[len(b_vals) // 2]) / (b_vals[-1] - b_vals[0]) * 2
    v = (np.asarray(p_vals) - p_vals[len(p_vals) // 2]) / (p_vals[-1] - p_vals[0]) * 2
    U, V = np.meshgrid(u, v, indexing="ij")
    ok = np.isfinite(dev)
    A = np.column_stack([U[ok] ** 2, V[ok] ** 2, U[ok] * V[ok], U[ok], V[ok], np.ones(ok.sum())])
    a, b, c, *_ = np.linalg.lstsq(A, dev[ok], rcond=None)[0]
    return float(c / (2 * math.sqrt(a * b)))
