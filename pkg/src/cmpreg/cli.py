"""``cmpreg`` command line: fit | compare | dist | simulate.

Exit codes: 0 ok, 2 input error, 3 design error, 4 convergence warning.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import core, report
from .data import DataLoadError, build_design, is_nested, load_csv, parse_terms
from .glm import SingularDesignError, fit_poisson_irls, quasi_poisson
from .inference import ComparisonRow, aic_bic, lrt, quasi_f_test
from .regression import REGRESSION_REL_TOL, RegressionSpec, fit
from .simstudy import (BETA_TRUE, SimScenario, deviance_grid, run_scenario, summarize,
                       write_deviance_csv, write_replicates_csv, write_summary_json)

EXIT_OK, EXIT_INPUT, EXIT_DESIGN, EXIT_CONVERGENCE = 0, 2, 3, 4
MODELS = ("poisson", "quasipoisson", "cmp", "cmp-mu")


class InputError(Exception):
    pass


def _split(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _references(items) -> dict:
    out = {}
    for item in items or []:
        col, sep, level = item.partition("=")
        if not sep:
            raise InputError(f"--reference expects COLUMN=LEVEL, got {item!r}")
        out[col.strip()] = level.strip()
    return out


def _load(args):
    data = load_csv(args.data, _split(args.categorical or ""), _references(args.reference))
    return data, data.response(args.response)


def _fit_model(model, y, X, args):
    t0 = time.perf_counter()
    if model in ("poisson", "quasipoisson"):
        res = fit_poisson_irls(y, X)
        if model == "quasipoisson":
            res = quasi_poisson(res)
    else:
        spec = RegressionSpec(y, X, "mean" if model == "cmp-mu" else "original",
                              series_rel_tol=args.rel_tol, series_max_terms=args.max_terms)
        res = fit(spec)
    return res, time.perf_counter() - t0


def _fit_all(models, y, X, args):
    jobs = args.jobs or len(models)
    if jobs > 1 and len(models) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(lambda m: _fit_model(m, y, X, args), models))
    return [_fit_model(m, y, X, args) for m in models]


def _models(arg: str) -> list[str]:
    models = _split(arg)
    bad = [m for m in models if m not in MODELS]
    if bad or not models:
        raise InputError(f"unknown model(s) {bad}; choose from {', '.join(MODELS)}")
    return models


def cmd_fit(args, out) -> int:
    models = _models(args.models)
    data, y = _load(args)
    design = build_design(data, args.terms, intercept=not args.no_intercept)
    results = _fit_all(models, y, design.X, args)
    blocks = [report.model_block(m, r, design.names, len(y), dt)
              for m, (r, dt) in zip(models, results)]
    rep = report.fit_report(args.data, args.response, args.terms, design.names, len(y), blocks)

    if args.deviance_grid:
        for m, (r, _) in zip(models, results):
            if m.startswith("cmp") and r.vcov is not None:
                spec = RegressionSpec(y, design.X, "mean" if m == "cmp-mu" else "original",
                                      series_rel_tol=args.rel_tol,
                                      series_max_terms=args.max_terms)
                b, ph, dev = deviance_grid(spec, r, size=args.grid_size)
                write_deviance_csv(b, ph, dev, f"{args.deviance_grid}_{m}.csv")

    if args.output == "json":
        out.write(report.dumps(rep))
    else:
        out.write(report.fit_table(rep))
    return EXIT_OK if all(m["converged"] for m in rep["models"]) else EXIT_CONVERGENCE


def cmd_compare(args, out) -> int:
    model = args.model
    if model not in MODELS:
        raise InputError(f"unknown model {model!r}")
    if len(args.predictor) < 2:
        raise InputError("compare needs at least two --predictor specifications")
    data, y = _load(args)
    designs = [build_design(data, parse_terms(p), intercept=not args.no_intercept)
               for p in args.predictor]
    for a, b in zip(designs, designs[1:]):
        if not is_nested(a.names, b.names):
            raise InputError("predictors are not nested: each column set must contain "
                             "the previous one")
    n = len(y)
    fits = [_fit_model(model, y, d.X, args)[0] for d in designs]
    rows, extra = [], []
    for k, (d, f) in enumerate(zip(designs, fits)):
        label = f"Predictor {k + 1}"
        if model == "quasipoisson":
            np_k = d.p + 1
            if k == 0:
                row = ComparisonRow(label, np_k, qdev=f.deviance)
            else:
                prev = fits[k - 1]
                row = quasi_f_test(prev.deviance, f.deviance, designs[k - 1].p + 1, np_k,
                                   f.sigma_hat, n, label)
                if designs[k - 1].p == d.p:
                    row.stat, row.df, row.p_value = 0.0, None, 1.0
            extra.append(f.sigma_hat)
        else:
            np_k = d.p + (model != "poisson")
            ll = f.loglik
            if k == 0:
                row = ComparisonRow(label, np_k, loglik=ll)
            else:
                df = d.p - designs[k - 1].p
                if df == 0:
                    row = ComparisonRow(label, np_k, loglik=ll, stat=0.0, df=None, p_value=1.0)
                else:
                    row = lrt(fits[k - 1].loglik, ll, df, label, np_k)
            row.aic, row.bic = aic_bic(ll, np_k, n)
            extra.append(None if model == "poisson" else f.phi)
        rows.append(row)
    if args.output == "json":
        out.write(json.dumps(report.comparison_dict(model, rows, extra), indent=2,
                             allow_nan=False) + "\n")
    else:
        out.write(report.comparison_table(model, rows, extra))
    converged = all(getattr(f, "converged", True) for f in fits)
    return EXIT_OK if converged else EXIT_CONVERGENCE


def _dist_params(args):
    if args.mu is not None or args.phi is not None:
        if args.mu is None or args.phi is None:
            raise InputError("--mu and --phi go together")
        return core.MeanParams(args.mu, args.phi)
    if args.lam is None or args.nu is None:
        raise InputError("give either --mu/--phi or --lambda/--nu")
    return core.OriginalParams(args.lam, args.nu)


def cmd_dist(args, out) -> int:
    p = _dist_params(args)
    tol, cap = args.rel_tol_dist, args.max_terms
    if isinstance(p, core.OriginalParams) and p.divergent:
        raise InputError(
            f"Z(lambda={p.lam}, nu=0) is a mathematically divergent series "
            "(nu = 0 requires lambda < 1)"
        )
    lz = core.log_z(p, tol, cap)
    if not lz.converged:
        raise InputError(
            f"normalizing series did not converge within {cap} terms (numerically "
            "divergent region: small nu with large lambda); raise --max-terms"
        )
    mom = core.exact_moments(p, tol, cap)
    ymax = args.ymax if args.ymax is not None else int(mom.mean + 6 * math.sqrt(mom.variance)) + 1
    ys = np.arange(ymax + 1)
    pmf = np.exp(core.log_pmf(p, ys, tol, cap))
    cdf = np.cumsum(pmf)
    approx = None
    if (p.nu if isinstance(p, core.OriginalParams) else 1.0) > 0:
        approx = {"mean": core.approx_mean(p), "variance": core.approx_variance(p)}
    ht_ys = [int(v) for v in _split(args.ht)] if args.ht else [0, 5, 10, 20, 50]
    idx = core.indexes(p, ht_ys, tol, cap)
    if isinstance(p, core.MeanParams):
        params = {"mu": p.mu, "phi": p.phi, "lambda": math.exp(p.nu * math.log(p.base)),
                  "nu": p.nu}
    else:
        params = {"lambda": p.lam, "nu": p.nu}
    doc = {
        "schema": 1, "command": "dist", "params": params,
        "log_z": {"log_value": lz.log_value, "terms_used": lz.terms_used,
                  "converged": lz.converged, "tail_bound": lz.tail_bound},
        "moments": {"exact": {"mean": mom.mean, "variance": mom.variance},
                    "approximate": approx},
        "indexes": {"di": idx.di, "zi": idx.zi, "ht": {str(k): v for k, v in idx.ht.items()}},
        "pmf": [{"y": int(y), "pmf": float(a), "cdf": float(min(b, 1.0))}
                for y, a, b in zip(ys, pmf, cdf)],
    }
    if args.output == "json":
        out.write(json.dumps(doc, indent=2) + "\n")
        return EXIT_OK
    lines = ["params: " + ", ".join(f"{k}={v:.6g}" for k, v in params.items()),
             f"log Z = {lz.log_value:.12g} ({lz.terms_used} terms)",
             f"{'':12}{'exact':>14}{'approx':>14}"]
    for key in ("mean", "variance"):
        a = "" if approx is None else f"{approx[key]:14.6f}"
        lines.append(f"{key:<12}{getattr(mom, key):14.6f}{a}")
    lines.append(f"DI = {idx.di:.6f}   ZI = {idx.zi:.6f}")
    lines.append("HT: " + ", ".join(f"y={k}: {v:.6g}" for k, v in idx.ht.items()))
    lines.append(f"{'y':>6}{'pmf':>16}{'cdf':>16}")
    for row in doc["pmf"]:
        lines.append(f"{row['y']:>6}{row['pmf']:16.10f}{row['cdf']:16.10f}")
    out.write("\n".join(lines) + "\n")
    return EXIT_OK


def load_scenario_config(path) -> dict:
    """JSON object, or INI with a ``[scenario]`` section of key = value lines."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        cfg = json.loads(text)
    else:
        parser = configparser.ConfigParser()
        parser.read_string(text)
        if "scenario" not in parser:
            raise InputError(f"{path}: missing [scenario] section")
        cfg = {}
        for k, v in parser["scenario"].items():
            parts = [x.strip() for x in v.split(",") if x.strip()]
            cfg[k] = [float(x) for x in parts] if len(parts) > 1 or k == "beta" else float(parts[0])
    allowed = {"n", "phi", "beta", "replicates", "seed", "level"}
    unknown = set(cfg) - allowed
    if unknown:
        raise InputError(f"unknown scenario keys: {sorted(unknown)}")
    return cfg


def cmd_simulate(args, out) -> int:
    cfg = load_scenario_config(args.config) if args.config else {}
    for key in ("n", "phi", "replicates", "seed"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    ns = cfg.get("n", [100])
    ns = sorted(int(v) for v in (ns if isinstance(ns, list) else [ns]))
    phis = cfg.get("phi", [0.0])
    phis = [float(v) for v in (phis if isinstance(phis, list) else [phis])]
    beta = tuple(cfg.get("beta", BETA_TRUE))
    reps = int(cfg.get("replicates", 1000))
    seed = int(cfg.get("seed", 0))
    level = float(cfg.get("level", 0.95))

    summaries = []
    for phi in phis:
        divisor = None
        for n in ns:
            s = SimScenario(n=n, phi_true=phi, beta_true=beta, replicates=reps, seed=seed,
                            level=level)
            summ = run_scenario(s, divisor, args.workers)
            if divisor is None:
                divisor = summ.mean_se
                summ = summarize(s, summ.records, divisor)
            summaries.append(summ)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_replicates_csv(summaries, out_dir / "replicates.csv")
    write_summary_json(summaries, out_dir / "summary.json")
    out.write(f"{'phi':>6}{'n':>6}{'used':>6}{'excl':>6}  parameter  {'bias':>10}"
              f"{'std.bias':>10}{'coverage':>10}{'|corr|':>8}\n")
    names = ("beta0", "beta1", "beta21", "beta22", "phi")
    for summ in summaries:
        s = summ.scenario
        for j, nm in enumerate(names):
            corr = f"{summ.mean_abs_corr[j]:8.3f}" if j < 4 else " " * 8
            out.write(f"{s.phi_true:6.2f}{s.n:6d}{summ.n_used:6d}{summ.n_excluded:6d}  "
                      f"{nm:<9}  {summ.mean_bias[j]:10.4f}{summ.standardized_bias[j]:10.4f}"
                      f"{summ.coverage[j]:10.3f}{corr}\n")
    out.write(f"wrote {out_dir / 'replicates.csv'} and {out_dir / 'summary.json'}\n")
    return EXIT_CONVERGENCE if any(s.flagged for s in summaries) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmpreg", description="COM-Poisson count regression.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output", choices=("json", "table"), default="table")
        p.add_argument("--rel-tol", type=float, default=REGRESSION_REL_TOL,
                       help="series tolerance for likelihood evaluation")
        p.add_argument("--max-terms", type=int, default=core.DEFAULT_MAX_TERMS)
        p.add_argument("--seed", type=int, default=None)

    def data_args(p):
        p.add_argument("data", help="CSV file with a header row")
        p.add_argument("--response", required=True)
        p.add_argument("--categorical", default="", help="comma-separated columns")
        p.add_argument("--reference", action="append", metavar="COL=LEVEL",
                       help="reference level for a categorical column")
        p.add_argument("--no-intercept", action="store_true")
        p.add_argument("--jobs", type=int, default=0, help="models fitted concurrently")

    p = sub.add_parser("fit", help="fit one or more models")
    data_args(p)
    common(p)
    p.add_argument("--terms", default="", help="e.g. x1,K^2,umid:K")
    p.add_argument("--models", default="poisson,quasipoisson,cmp,cmp-mu")
    p.add_argument("--deviance-grid", metavar="PREFIX",
                   help="write PREFIX_<model>.csv deviance grids for COM-Poisson fits")
    p.add_argument("--grid-size", type=int, default=21)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="compare nested predictors within one model family")
    data_args(p)
    common(p)
    p.add_argument("--model", default="poisson", choices=MODELS)
    p.add_argument("--predictor", action="append", default=[],
                   help="term list of one predictor; repeat, smallest first")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dist", help="pmf, moments and indexes of one distribution")
    common(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--ymax", type=int)
    p.add_argument("--ht", default="", help="y values for the heavy-tail ratio")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("simulate", help="run the estimator simulation study")
    common(p)
    p.add_argument("--config", help="scenario file (.json, or INI with [scenario])")
    p.add_argument("--n", type=int)
    p.add_argument("--phi", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="simulation-output")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if args.command == "dist":
        # distribution queries use the distribution default unless overridden
        args.rel_tol_dist = (core.DEFAULT_REL_TOL if args.rel_tol == REGRESSION_REL_TOL
                             else args.rel_tol)
    try:
        return args.func(args, out)
    except (InputError, DataLoadError, core.ParameterDomainError, json.JSONDecodeError,
            configparser.Error, OSError) as exc:
        print(f"cmpreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except core.SeriesDivergenceError as exc:
        print(f"cmpreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SingularDesignError as exc:
        print(f"cmpreg: design error: {exc}", file=sys.stderr)
        return EXIT_DESIGN


if __name__ == "__main__":
    sys.exit(main())
