"""Fit and comparison reports: JSON documents and aligned text tables."""

from __future__ import annotations

import json
import math
from importlib import resources
from typing import Optional

import numpy as np

from .glm import GlmFit
from .inference import ComparisonRow, aic_bic
from .regression import FitResult, estimator_correlation

SCHEMA_VERSION = 1
MODEL_LABELS = {
    "poisson": "Poisson",
    "quasipoisson": "Quasi-Poisson",
    "cmp": "COM-Poisson",
    "cmp-mu": "COM-Poisson_mu",
}


def _num(x) -> Optional[float]:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def fit_schema() -> dict:
    text = resources.files("cmpreg").joinpath("fit_report.schema.json").read_text("utf-8")
    return json.loads(text)


def model_block(model: str, result, names: list, n: int, elapsed: float) -> dict:
    """One model's entry of a FitReport."""
    if isinstance(result, GlmFit):
        se = result.se
        coefs = [
            {"term": nm, "estimate": _num(b), "se": _num(s), "est_se": _num(b / s)}
            for nm, b, s in zip(names, result.beta, se)
        ]
        if result.family == "quasipoisson":
            dispersion = {"name": "sigma", "estimate": _num(result.sigma_hat), "se": None,
                          "est_se": None}
            aic = bic = None
        else:
            dispersion = None
            aic, bic = aic_bic(result.loglik, result.np, n)
        return {
            "model": model, "label": MODEL_LABELS[model], "converged": bool(result.converged),
            "np": result.np, "coefficients": coefs, "dispersion": dispersion,
            "loglik": _num(result.loglik), "aic": _num(aic), "bic": _num(bic),
            "deviance": _num(result.deviance), "iterations": result.iterations,
            "n_evals": None, "correlation_with_phi": None, "message": "",
            "_elapsed": elapsed,
        }

    assert isinstance(result, FitResult)
    se = result.se
    theta = result.theta
    p = result.beta.size

    def entry(i):
        s = None if se is None else se[i]
        ratio = None if s is None or s == 0 else theta[i] / s
        return _num(theta[i]), _num(s), _num(ratio)

    coefs = []
    for i, nm in enumerate(names):
        est, s, r = entry(i)
        coefs.append({"term": nm, "estimate": est, "se": s, "est_se": r})
    est, s, r = entry(p)
    aic, bic = aic_bic(result.loglik, result.np, n)
    corr = None
    if result.vcov is not None:
        corr = [_num(c) for c in estimator_correlation(result)]
    return {
        "model": model, "label": MODEL_LABELS[model], "converged": bool(result.converged),
        "np": result.np, "coefficients": coefs,
        "dispersion": {"name": "phi", "estimate": est, "se": s, "est_se": r},
        "loglik": _num(result.loglik), "aic": _num(aic), "bic": _num(bic), "deviance": None,
        "iterations": result.iterations, "n_evals": result.n_evals,
        "correlation_with_phi": corr, "message": result.message, "_elapsed": elapsed,
    }


def fit_report(data_path: str, response: str, terms: str, names: list, n: int,
               blocks: list) -> dict:
    wall = {}
    models = []
    for b in blocks:
        b = dict(b)
        wall[b["model"]] = b.pop("_elapsed")
        models.append(b)
    return {
        "schema": SCHEMA_VERSION,
        "command": "fit",
        "data": str(data_path),
        "response": response,
        "terms": terms,
        "columns": list(names),
        "n": n,
        "models": models,
        "metadata": {"wall_time_s": wall},
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _fmt(x, width=10, digits=4) -> str:
    if x is None:
        return "-".rjust(width)
    return f"{x:{width}.{digits}f}"


def fit_table(report: dict) -> str:
    """Estimates and Est/SE side by side, one pair of columns per model."""
    models = report["models"]
    names = report["columns"]
    label_w = max([len("LogLik"), len("phi, sigma")] + [len(n) for n in names]) + 2
    head1 = " " * label_w + "".join(m["label"][:21].center(22) for m in models)
    head2 = " " * label_w + "".join(f"{'Est':>10}  {'Est/SE':>10}" for _ in models)
    lines = [head1.rstrip(), head2]

    disp = []
    for m in models:
        d = m["dispersion"]
        disp.append((None, None) if d is None else (d["estimate"], d["est_se"]))
    lines.append("phi, sigma".ljust(label_w) + "".join(f"{_fmt(a)}  {_fmt(b)}" for a, b in disp))
    for i, nm in enumerate(names):
        cells = "".join(
            f"{_fmt(m['coefficients'][i]['estimate'])}  {_fmt(m['coefficients'][i]['est_se'])}"
            for m in models
        )
        lines.append(nm.ljust(label_w) + cells)
    lines.append("-" * len(head2))
    for key, label in (("loglik", "LogLik"), ("aic", "AIC"), ("bic", "BIC")):
        lines.append(label.ljust(label_w)
                     + "".join(_fmt(m[key], 22, 3) for m in models))
    lines.append("n_evals".ljust(label_w) + "".join(
        ("-" if m["n_evals"] is None else str(m["n_evals"])).rjust(22) for m in models))
    lines.append("converged".ljust(label_w) + "".join(
        str(m["converged"]).rjust(22) for m in models))
    return "\n".join(lines) + "\n"


def format_p(p: Optional[float]) -> str:
    """Scientific notation with two decimals, e.g. ``2.31E-16``."""
    return "" if p is None else f"{p:.2E}"


def comparison_dict(model: str, rows: list, extra: list) -> dict:
    out = []
    for r, e in zip(rows, extra):
        d = {k: (_num(v) if isinstance(v, (float, np.floating)) else v)
             for k, v in r.__dict__.items()}
        d["dispersion"] = _num(e)
        out.append(d)
    return {"schema": SCHEMA_VERSION, "command": "compare", "model": model, "rows": out}


def comparison_table(model: str, rows: list[ComparisonRow], extra: list) -> str:
    quasi = model == "quasipoisson"
    fit_col = "QDev" if quasi else "l"
    stat_col = "F" if quasi else "2(diff l)"
    p_col = "P(>F)" if quasi else "P(>Chi2)"
    disp_col = "sigma" if quasi else ("phi" if model.startswith("cmp") else "")
    header = (f"{MODEL_LABELS[model]:<16}{'np':>4}{fit_col:>12}{'AIC':>12}{stat_col:>12}"
              f"{'diff np':>9}{p_col:>12}{disp_col:>9}")
    lines = [header, "-" * len(header)]
    for r, e in zip(rows, extra):
        fitv = r.qdev if quasi else r.loglik
        lines.append(
            f"{r.model_label:<16}{r.np:>4}{_fmt(fitv, 12, 3)}"
            f"{(_fmt(r.aic, 12, 3) if r.aic is not None else ''):>12}"
            f"{(_fmt(r.stat, 12, 3) if r.stat is not None else ''):>12}"
            f"{(str(r.df) if r.df is not None else ''):>9}"
            f"{format_p(r.p_value):>12}"
            f"{(_fmt(e, 9, 3) if e is not None else ''):>9}"
        )
    return "\n".join(lines) + "\n"
