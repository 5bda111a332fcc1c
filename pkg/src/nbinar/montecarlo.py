"""Replicated simulate-estimate experiments.

Each replicate simulates a fresh stationary series and runs the configured
estimators on it; aggregation compares empirical bias and the covariance of
the sqrt(n)-scaled errors against the predicted asymptotic covariances.

A config entry n simulates n + 1 observations so the regression estimators
see exactly n transitions.  Replicate (n, rep) draws from the stream seeded
by SeedSequence(master_seed, spawn_key=(n, rep)), so runs are reproducible,
independently extendable, and identical regardless of execution schedule.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import ParameterError, nb_central_moments
from .estimation import (
    DegenerateSeriesError,
    cls_means,
    cls_variances,
    cml_fit,
    predicted_cov,
    yw_means,
)
from .process import simulate
from .thinning import ModelParams, g_central_moments

__all__ = [
    "ESTIMATORS",
    "CSV_COLUMNS",
    "EmptyReportError",
    "MCConfig",
    "MCReport",
    "true_values",
    "run_experiment",
    "summarize",
    "write_rows_csv",
    "jsonable",
]

ESTIMATORS = ("cls", "yw", "cls-var", "cml")

CSV_COLUMNS = ("estimator", "n", "replicate", "alpha_hat", "mu_eps_hat",
               "mu_hat", "sigma_g2_hat", "sigma_eps2_hat", "r_hat", "flags")

_FLOAT_COLUMNS = CSV_COLUMNS[3:-1]

# per-estimator summary layout: quantile fields and (error field, truth key)
# pairs entering the scaled-error covariance
_BLOCK_FIELDS = {
    "cls": ("alpha_hat", "mu_eps_hat", "mu_hat"),
    "yw": ("alpha_hat", "mu_eps_hat", "mu_hat"),
    "cls-var": ("sigma_g2_hat", "sigma_eps2_hat", "r_hat"),
    "cml": ("alpha_hat", "mu_hat", "r_hat"),
}
_COV_FIELDS = {
    "cls": ("alpha_hat", "mu_eps_hat"),
    "yw": ("alpha_hat", "mu_eps_hat"),
    "cls-var": ("sigma_g2_hat", "sigma_eps2_hat"),
    "cml": ("alpha_hat", "mu_hat", "r_hat"),
}


class EmptyReportError(RuntimeError):
    """Every replicate of a block failed; nothing to aggregate."""


@dataclass(frozen=True)
class MCConfig:
    """Experiment definition: model, series lengths, replication, seeding."""

    params: ModelParams
    n_grid: tuple[int, ...]
    replicates: int
    estimators: tuple[str, ...]
    master_seed: int
    output_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.replicates < 2:
            raise ParameterError(f"replicates must be >= 2, got {self.replicates}")
        if not self.n_grid or any(n < 10 for n in self.n_grid):
            raise ParameterError("every n_grid entry must be >= 10")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown or not self.estimators:
            raise ParameterError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ParameterError("master_seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, doc: dict) -> "MCConfig":
        required = {"alpha", "mu", "r", "n_grid", "replicates", "estimators",
                    "master_seed"}
        allowed = required | {"output_path"}
        if not isinstance(doc, dict):
            raise ParameterError("config document must be an object")
        missing = sorted(required - doc.keys())
        extra = sorted(doc.keys() - allowed)
        if missing or extra:
            raise ParameterError(
                f"config schema violation: missing {missing}, unexpected {extra}")
        params = ModelParams(alpha=float(doc["alpha"]), mu=float(doc["mu"]),
                             r=float(doc["r"]))
        return cls(params=params, n_grid=tuple(doc["n_grid"]),
                   replicates=int(doc["replicates"]),
                   estimators=tuple(doc["estimators"]),
                   master_seed=int(doc["master_seed"]),
                   output_path=doc.get("output_path"))

    def to_dict(self) -> dict:
        return {"alpha": self.params.alpha, "mu": self.params.mu,
                "r": self.params.r, "n_grid": list(self.n_grid),
                "replicates": self.replicates,
                "estimators": list(self.estimators),
                "master_seed": self.master_seed,
                "output_path": self.output_path}


@dataclass
class MCReport:
    """Raw replicate rows plus the aggregate blocks."""

    config: MCConfig
    truth: dict
    rows: list
    blocks: list
    gaps: list

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "truth": self.truth,
                "blocks": self.blocks, "gap_sqrt_n_alpha": self.gaps}

    def write(self) -> tuple[str, str]:
        """Write <output_path>.csv (raw rows) and <output_path>.json."""
        base = self.config.output_path
        if base is None:
            raise ParameterError("config has no output_path")
        csv_path, json_path = f"{base}.csv", f"{base}.json"
        write_rows_csv(csv_path, self.rows)
        with open(json_path, "w") as fh:
            json.dump(jsonable(self.to_dict()), fh, indent=2)
            fh.write("\n")
        return csv_path, json_path


def true_values(p: ModelParams) -> dict:
    _, s2, _, _ = nb_central_moments(p.marginal())
    _, se2, _, _ = nb_central_moments(p.innovation())
    _, sg2, _, _ = g_central_moments(p)
    return {"alpha": p.alpha, "mu": p.mu, "r": p.r,
            "mu_eps": (1.0 - p.alpha) * p.mu,
            "sigma_g2": sg2, "sigma_eps2": se2, "sigma2": s2}


def _blank_row(est: str, n: int, rep: int) -> dict:
    row = {"estimator": est, "n": n, "replicate": rep, "flags": "ok"}
    for f in _FLOAT_COLUMNS:
        row[f] = math.nan
    return row


def _replicate(task) -> tuple[int, int, list]:
    alpha, mu, r, n, rep, master_seed, estimators = task
    p = ModelParams(alpha=alpha, mu=mu, r=r)
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(n, rep)))
    series = simulate(p, n + 1, rng)
    rows = []
    for est in estimators:
        row = _blank_row(est, n, rep)
        try:
            if est == "cls" or est == "yw":
                fit = cls_means(series) if est == "cls" else yw_means(series)
                row.update(alpha_hat=fit.alpha_hat, mu_eps_hat=fit.mu_eps_hat,
                           mu_hat=fit.mu_hat)
                if not fit.in_range:
                    row["flags"] = "out-of-range"
            elif est == "cls-var":
                means = cls_means(series)
                var = cls_variances(series, means)
                row.update(alpha_hat=means.alpha_hat,
                           mu_eps_hat=means.mu_eps_hat, mu_hat=means.mu_hat,
                           sigma_g2_hat=var.sigma_g2_hat,
                           sigma_eps2_hat=var.sigma_eps2_hat, r_hat=var.r_hat)
                tokens = []
                if not means.in_range:
                    tokens.append("out-of-range")
                if not var.r_defined:
                    tokens.append("r-undefined")
                if tokens:
                    row["flags"] = ";".join(tokens)
            elif est == "cml":
                fit = cml_fit(series)
                row.update(alpha_hat=fit.params.alpha, mu_hat=fit.params.mu,
                           mu_eps_hat=(1.0 - fit.params.alpha) * fit.params.mu,
                           r_hat=fit.params.r)
                tokens = []
                if not fit.converged:
                    tokens.append("non-converged")
                if fit.n_underflow:
                    tokens.append("underflow")
                if tokens:
                    row["flags"] = ";".join(tokens)
        except DegenerateSeriesError:
            row["flags"] = "degenerate"
        rows.append(row)
    return n, rep, rows


def _worker_count() -> int:
    raw = os.environ.get("NBINAR_THREADS")
    if raw is None or raw.strip() == "":
        return 1
    try:
        k = int(raw)
    except ValueError:
        raise ParameterError(f"NBINAR_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ParameterError(f"NBINAR_THREADS must be >= 0, got {k}")
    if k == 0:
        return os.cpu_count() or 1
    return k


def run_experiment(cfg: MCConfig) -> MCReport:
    """Run every (n, replicate) cell, aggregate, and write outputs if the
    config names an output path."""
    tasks = [(cfg.params.alpha, cfg.params.mu, cfg.params.r, n, rep,
              cfg.master_seed, cfg.estimators)
             for n in cfg.n_grid for rep in range(cfg.replicates)]
    workers = _worker_count()
    if workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=chunk))
    else:
        results = [_replicate(t) for t in tasks]
    results.sort(key=lambda item: (item[0], item[1]))
    rows = [row for _, _, chunk_rows in results for row in chunk_rows]

    truth = true_values(cfg.params)
    cov = predicted_cov(cfg.params)
    predicted = {"cls": cov.sigma_means, "yw": cov.sigma_means,
                 "cls-var": cov.sigma_vars, "cml": None}
    blocks, gaps = summarize(rows, truth, predicted)
    report = MCReport(config=cfg, truth=truth, rows=rows, blocks=blocks,
                      gaps=gaps)
    if cfg.output_path is not None:
        report.write()
    return report


def _is_failed(row: dict) -> bool:
    return "degenerate" in row["flags"]


def summarize(rows: list, truth: dict, predicted: dict | None = None) -> tuple[list, list]:
    """Aggregate a raw replicate table into per-(estimator, n) blocks.

    Returns (blocks, gap_blocks); the gap blocks hold quantiles of
    sqrt(n) |alpha_hat_yw - alpha_hat_cls| on replicates where both ran.
    """
    predicted = predicted or {}
    keys = sorted({(row["estimator"], row["n"]) for row in rows},
                  key=lambda t: (ESTIMATORS.index(t[0]), t[1]))
    blocks = []
    for est, n in keys:
        sub = [r for r in rows if r["estimator"] == est and r["n"] == n]
        ok = [r for r in sub if not _is_failed(r)]
        if not ok:
            raise EmptyReportError(f"all replicates failed for {est} at n={n}")
        flag_counts: dict = {}
        for r in sub:
            flag_counts[r["flags"]] = flag_counts.get(r["flags"], 0) + 1

        fields = _BLOCK_FIELDS[est]
        mean, bias, quantiles = {}, {}, {}
        for f in fields:
            vals = np.array([r[f] for r in ok], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size:
                mean[f] = float(vals.mean())
                q = np.quantile(vals, [0.25, 0.5, 0.75])
                quantiles[f] = {"0.25": float(q[0]), "0.5": float(q[1]),
                                "0.75": float(q[2])}
            else:
                mean[f] = None
                quantiles[f] = {"0.25": None, "0.5": None, "0.75": None}
            key = f[: -len("_hat")]
            bias[f] = (mean[f] - truth[key]) if (mean[f] is not None and key in truth) else None

        cov_fields = _COV_FIELDS[est]
        errs = []
        for r in ok:
            vec = [r[f] - truth[f[: -len("_hat")]] for f in cov_fields]
            if all(math.isfinite(v) for v in vec):
                errs.append([math.sqrt(n) * v for v in vec])
        emp_cov = None
        if len(errs) >= 2:
            emp_cov = np.cov(np.asarray(errs).T, ddof=1)
            emp_cov = np.atleast_2d(emp_cov)
        pred = predicted.get(est)
        rel_dev = max_dev = None
        if emp_cov is not None and pred is not None:
            pred = np.asarray(pred, dtype=float)
            rel_dev = np.abs(emp_cov - pred) / np.abs(pred)
            max_dev = float(rel_dev.max())

        blocks.append({
            "estimator": est, "n": n, "replicates": len(sub),
            "included": len(ok), "excluded": len(sub) - len(ok),
            "flag_counts": dict(sorted(flag_counts.items())),
            "mean": mean, "bias": bias, "quantiles": quantiles,
            "scaled_error_cov": None if emp_cov is None else emp_cov.tolist(),
            "predicted_cov": None if pred is None else np.asarray(pred).tolist(),
            "relative_deviation": None if rel_dev is None else rel_dev.tolist(),
            "max_relative_deviation": max_dev,
        })

    gaps = []
    ests = {row["estimator"] for row in rows}
    if "cls" in ests and "yw" in ests:
        for n in sorted({row["n"] for row in rows}):
            by_rep: dict = {}
            for r in rows:
                if r["n"] == n and r["estimator"] in ("cls", "yw") and not _is_failed(r):
                    by_rep.setdefault(r["replicate"], {})[r["estimator"]] = r
            diffs = [math.sqrt(n) * abs(pair["yw"]["alpha_hat"] - pair["cls"]["alpha_hat"])
                     for pair in by_rep.values() if len(pair) == 2]
            if diffs:
                q = np.quantile(np.array(diffs), [0.25, 0.5, 0.75])
                gaps.append({"n": n, "replicates": len(diffs),
                             "quantiles": {"0.25": float(q[0]), "0.5": float(q[1]),
                                           "0.75": float(q[2])}})
    return blocks, gaps


def write_rows_csv(path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row["estimator"], row["n"], row["replicate"],
                             *(repr(float(row[f])) for f in _FLOAT_COLUMNS),
                             row["flags"]])


def jsonable(value):
    """Recursively convert to strict-JSON types (NaN/inf become null)."""
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value
