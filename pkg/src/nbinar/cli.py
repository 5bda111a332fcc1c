"""Command line interface.

Subcommands: simulate, transition, estimate, mc, selftest.  Exit codes:
0 success, 1 selftest failure, 2 parameter or schema error, 3 I/O error,
4 degenerate data.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from .distributions import ParameterError
from .estimation import (
    DegenerateSeriesError,
    cls_means,
    cls_variances,
    cml_fit,
    predicted_cov,
    yw_means,
)
from .montecarlo import EmptyReportError, MCConfig, jsonable, run_experiment
from .process import read_series, simulate, transition_prob, transition_table, write_series
from .selftest import run_selftest
from .thinning import ModelParams

__all__ = ["main", "build_parser"]


def _add_model_flags(parser):
    parser.add_argument("--alpha", type=float, required=True,
                        help="thinning rate, in (0, 1)")
    parser.add_argument("--mu", type=float, required=True,
                        help="marginal mean, positive")
    parser.add_argument("--r", type=float, required=True,
                        help="shape, positive")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbinar",
        description="Negative binomial INAR(1) count time series: simulation, "
                    "exact transition laws, and estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a stationary series")
    _add_model_flags(sim)
    sim.add_argument("--n", type=int, required=True, help="series length")
    sim.add_argument("--seed", type=int, required=True, help="RNG seed")
    sim.add_argument("--out", required=True, help="output series file")
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("transition",
                        help="print a transition probability or write a table")
    _add_model_flags(tr)
    tr.add_argument("--i", type=int, help="origin state")
    tr.add_argument("--j", type=int, help="destination state")
    tr.add_argument("--h", type=int, default=1, help="step order (default 1)")
    tr.add_argument("--table", type=int, metavar="J",
                    help="write the full table on states 0..J instead")
    tr.add_argument("--out", help="output CSV path (required with --table)")
    tr.set_defaults(func=cmd_transition)

    est = sub.add_parser("estimate", help="estimate parameters from a series file")
    est.add_argument("--in", dest="infile", required=True, help="series file")
    est.add_argument("--method", required=True,
                     choices=("cls", "yw", "cls-var", "cml"))
    est.add_argument("--known-alpha", type=float, default=None,
                     help="treat alpha as known (cls-var only)")
    est.add_argument("--known-mueps", type=float, default=None,
                     help="treat mu_eps as known (cls-var only)")
    est.add_argument("--out", help="write the JSON report here instead of stdout")
    est.set_defaults(func=cmd_estimate)

    mc = sub.add_parser("mc", help="run a Monte Carlo experiment from a config")
    mc.add_argument("--config", required=True, help="JSON config file")
    mc.set_defaults(func=cmd_mc)

    st = sub.add_parser("selftest", help="run the invariant suites")
    st.add_argument("--mutate", action="store_true",
                    help="corrupt a constant to verify the suite can fail")
    st.set_defaults(func=cmd_selftest)
    return parser


def _model_params(args) -> ModelParams:
    return ModelParams(alpha=args.alpha, mu=args.mu, r=args.r)


def cmd_simulate(args) -> int:
    p = _model_params(args)
    if args.n < 1:
        raise ParameterError(f"n must be positive, got {args.n}")
    rng = np.random.default_rng(args.seed)
    series = simulate(p, args.n, rng)
    write_series(args.out, series)
    meta = dict(series.meta or {})
    meta.update(n=args.n, seed=args.seed, format="one integer per line")
    with open(f"{args.out}.meta.json", "w") as fh:
        json.dump(jsonable(meta), fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.n} values to {args.out}")
    return 0


def cmd_transition(args) -> int:
    p = _model_params(args)
    if args.h < 1:
        raise ParameterError(f"h must be positive, got {args.h}")
    if args.table is not None:
        if args.out is None:
            raise ParameterError("--table requires --out")
        table = transition_table(p, args.table, args.h)
        table.to_csv(args.out)
        print(f"wrote {table.max_state + 1}x{table.max_state + 1} table to {args.out}")
        return 0
    if args.i is None or args.j is None:
        raise ParameterError("provide --i and --j, or --table J")
    print(f"{transition_prob(p, args.i, args.j, args.h):.15g}")
    return 0


def _cov_block(alpha: float, mu: float, r: float):
    try:
        cov = predicted_cov(ModelParams(alpha=alpha, mu=mu, r=r))
    except (ParameterError, ValueError, OverflowError):
        return None
    return {"sigma_means": cov.sigma_means.tolist(),
            "sigma_alpha_mu": cov.sigma_alpha_mu.tolist(),
            "sigma_vars": cov.sigma_vars.tolist()}


def cmd_estimate(args) -> int:
    try:
        series = read_series(args.infile)
    except OSError as exc:
        print(f"error: cannot read series: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: malformed series file: {exc}", file=sys.stderr)
        return 3

    known = (args.known_alpha, args.known_mueps)
    if any(v is not None for v in known) and args.method != "cls-var":
        raise ParameterError("--known-alpha/--known-mueps apply to --method cls-var only")

    report: dict = {"method": args.method, "observations": len(series)}
    flags: list[str] = []
    if args.method in ("cls", "yw"):
        fit = cls_means(series) if args.method == "cls" else yw_means(series)
        report["estimates"] = {"alpha_hat": fit.alpha_hat,
                               "mu_eps_hat": fit.mu_eps_hat,
                               "mu_hat": fit.mu_hat}
        report["n"] = fit.n
        if not fit.in_range:
            flags.append("out-of-range")
        report["predicted_cov"] = None
        flags.append("cov-requires-r")
    elif args.method == "cls-var":
        if args.known_alpha is not None:
            var = cls_variances(series, known_alpha=args.known_alpha,
                                known_mu_eps=args.known_mueps)
            alpha_used, mu_eps_used = args.known_alpha, args.known_mueps
            report["estimates"] = {}
        else:
            means = cls_means(series)
            var = cls_variances(series, means)
            alpha_used, mu_eps_used = means.alpha_hat, means.mu_eps_hat
            report["estimates"] = {"alpha_hat": means.alpha_hat,
                                   "mu_eps_hat": means.mu_eps_hat,
                                   "mu_hat": means.mu_hat}
            if not means.in_range:
                flags.append("out-of-range")
        report["estimates"].update({
            "sigma_g2_hat": var.sigma_g2_hat,
            "sigma_eps2_hat": var.sigma_eps2_hat,
            "sigma2_hat": var.sigma2_hat,
            "sigma2_hat_formula_a": var.sigma2_hat_formula_a,
            "r_hat": var.r_hat})
        report["residual_mode"] = var.residual_mode
        report["alpha_used"] = alpha_used
        report["mu_eps_used"] = mu_eps_used
        report["n"] = var.n
        if not var.r_defined:
            flags.append("r-undefined")
            report["predicted_cov"] = None
        else:
            mu_used = mu_eps_used / (1.0 - alpha_used) if alpha_used != 1.0 else float("nan")
            report["predicted_cov"] = _cov_block(alpha_used, mu_used, var.r_hat)
            if report["predicted_cov"] is None:
                flags.append("cov-unavailable")
    else:  # cml
        if len(series) < 10:
            raise ParameterError("cml needs at least 10 observations")
        fit = cml_fit(series)
        report["estimates"] = {"alpha_hat": fit.params.alpha,
                               "mu_hat": fit.params.mu,
                               "r_hat": fit.params.r,
                               "mu_eps_hat": (1.0 - fit.params.alpha) * fit.params.mu}
        report["loglik"] = fit.loglik
        report["convergence"] = {"converged": fit.converged,
                                 "n_iter": fit.n_iter,
                                 "message": fit.message,
                                 "n_underflow": fit.n_underflow}
        report["init"] = asdict(fit.init)
        if not fit.converged:
            flags.append("non-converged")
        report["predicted_cov"] = _cov_block(fit.params.alpha, fit.params.mu,
                                             fit.params.r)

    report["flags"] = flags or ["ok"]
    text = json.dumps(jsonable(report), indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_mc(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    cfg = MCConfig.from_dict(doc)
    if cfg.output_path is None:
        raise ParameterError("config must set output_path")
    report = run_experiment(cfg)
    print(f"wrote {cfg.output_path}.csv and {cfg.output_path}.json "
          f"({len(report.rows)} rows)")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest(mutate=args.mutate) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateSeriesError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return 4
    except EmptyReportError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return 4
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
