"""Fast invariant suite behind ``nbinar selftest``.

Every check is an exact identity or a fixed-seed statistical bound evaluated
at a small parameter grid; the whole suite runs in seconds.  ``mutate=True``
deliberately corrupts the functional-equation residual to demonstrate that
the suite can fail.
"""

from __future__ import annotations

import sys

import numpy as np

from .distributions import (
    NBParams,
    nb_central_moments,
    nb_pgf,
    nb_pmf,
    nb_pmf_vector,
    nb_sample,
    nb_support_bound,
)
from .estimation import predicted_cov
from .process import transition_prob, transition_table
from .thinning import (
    ModelParams,
    g_central_moments,
    g_pgf,
    g_pmf,
    h_fold,
    odot_pgf,
    odot_to_star,
    star_to_odot,
    thin_conditional_pmf,
    thin_sample,
)

__all__ = ["PARAM_GRID", "tv_to_pmf", "run_selftest"]

PARAM_GRID = (
    ModelParams(alpha=0.3, mu=1.5, r=0.8),
    ModelParams(alpha=0.5, mu=2.0, r=1.0),
    ModelParams(alpha=0.7, mu=4.0, r=2.5),
)

_S_GRID = [round(0.05 * i, 2) for i in range(21)]


def tv_to_pmf(values, pmf: np.ndarray) -> float:
    """Total variation distance between the empirical law of ``values`` and a
    pmf given on the window {0, ..., len(pmf)-1}, with the two tail masses
    compared as a single bucket."""
    values = np.asarray(values)
    kmax = len(pmf) - 1
    counts = np.bincount(np.minimum(values, kmax + 1), minlength=kmax + 2)
    freq = counts / values.size
    tail_p = max(0.0, 1.0 - float(np.sum(pmf)))
    inner = float(np.abs(freq[: kmax + 1] - pmf).sum())
    return 0.5 * (inner + abs(freq[kmax + 1] - tail_p))


def _functional_equation(mutate: bool):
    worst = 0.0
    for p in PARAM_GRID:
        marginal, innovation = p.marginal(), p.innovation()
        for s in _S_GRID:
            lhs = nb_pgf(marginal, s)
            rhs = nb_pgf(marginal, g_pgf(p, s)) * nb_pgf(innovation, s)
            worst = max(worst, abs(lhs - rhs))
    if mutate:
        worst += 1e-6
    return worst <= 1e-12, f"max residual {worst:.3e} (tolerance 1e-12)"


def _operator_equivalence():
    worst = 0.0
    for p in PARAM_GRID:
        a = star_to_odot(p)
        for s in _S_GRID:
            worst = max(worst, abs(g_pgf(p, s) - odot_pgf(a.beta, a.theta, s)))
    return worst <= 1e-14, f"max pgf-form gap {worst:.3e}"


def _round_trip():
    worst = 0.0
    for p in PARAM_GRID:
        back = odot_to_star(star_to_odot(p))
        worst = max(worst, abs(back.alpha - p.alpha), abs(back.mu - p.mu) / p.mu)
    return worst <= 1e-14, f"max round-trip error {worst:.3e}"


def _h_fold_identities():
    worst_bridge = 0.0
    worst_semi = 0.0
    for p in PARAM_GRID:
        a = star_to_odot(p)
        for h in range(1, 7):
            hp = h_fold(p, h)
            worst_bridge = max(
                worst_bridge,
                abs(hp.beta_h - hp.alpha_h * hp.q_tilde_h),
                abs((1.0 - (1.0 - hp.beta_h) * hp.theta) - hp.q_tilde_h),
            )
            nxt = h_fold(p, h + 1)
            for s in _S_GRID:
                lhs = odot_pgf(a.beta, a.theta, odot_pgf(hp.beta_h, hp.theta, s))
                worst_semi = max(worst_semi, abs(lhs - odot_pgf(nxt.beta_h, nxt.theta, s)))
    ok = worst_bridge <= 1e-13 and worst_semi <= 1e-12
    return ok, f"bridge {worst_bridge:.3e}, semigroup {worst_semi:.3e}"


def _thin_normalization():
    worst = 0.0
    for p in PARAM_GRID:
        for h in (1, 5):
            for x in (0, 1, 5, 20):
                total = sum(thin_conditional_pmf(p, x, h, k) for k in range(150))
                worst = max(worst, abs(total - 1.0))
    return worst <= 1e-10, f"max |sum - 1| = {worst:.3e}"


def _transition_invariants():
    p = ModelParams(alpha=0.5, mu=2.0, r=1.0)
    gap_hand = abs(transition_prob(p, 1, 1, 1) - 0.25)
    details = [f"p11 gap {gap_hand:.3e}"]
    ok = gap_hand <= 1e-14

    for params in PARAM_GRID:
        table = transition_table(params, None, 1)
        tail = float(table.tail_mass[: 21].max())
        ok = ok and tail <= 1e-9
    details.append(f"tail(last grid point) {tail:.3e}")

    # square the one-step law on a buffered window so intermediate states
    # beyond J do not leak out of the product, then crop
    table1 = transition_table(p, 180, 1)
    table2 = transition_table(p, 80, 2)
    square = (table1.probs @ table1.probs)[:81, :81]
    ck = float(np.abs(table2.probs - square).max())
    ok = ok and ck <= 1e-8
    details.append(f"Chapman-Kolmogorov {ck:.3e}")

    kmax = table1.max_state
    pi = nb_pmf_vector(p.marginal(), kmax)
    resid = float(np.abs(pi @ table1.probs - pi).max())
    ok = ok and resid <= 1e-8
    details.append(f"stationary residual {resid:.3e}")
    return ok, "; ".join(details)


def _moment_consistency():
    worst = 0.0
    for p in PARAM_GRID:
        marginal = p.marginal()
        kmax = nb_support_bound(marginal, 1e-18)
        k = np.arange(kmax + 1, dtype=float)
        pmf = nb_pmf_vector(marginal, kmax)
        mean = float(k @ pmf)
        brute = [mean] + [float(((k - mean) ** m) @ pmf) for m in (2, 3, 4)]
        closed = nb_central_moments(marginal)
        for b, c in zip(brute, closed):
            worst = max(worst, abs(b - c) / abs(c))

        gmean, gm2, gm3, gm4 = g_central_moments(p)
        ks = np.arange(200, dtype=float)
        gpmf = np.array([g_pmf(p, int(i)) for i in range(200)])
        bmean = float(ks @ gpmf)
        gbrute = [bmean] + [float(((ks - bmean) ** m) @ gpmf) for m in (2, 3, 4)]
        for b, c in zip(gbrute, (gmean, gm2, gm3, gm4)):
            worst = max(worst, abs(b - c) / abs(c))
    return worst <= 1e-10, f"max relative moment gap {worst:.3e}"


def _variance_identity():
    worst = 0.0
    for p in PARAM_GRID:
        _, s2, _, _ = nb_central_moments(p.marginal())
        _, se2, _, _ = nb_central_moments(p.innovation())
        _, sg2, _, _ = g_central_moments(p)
        c2 = p.mu * sg2 + se2
        worst = max(worst, abs(c2 - (1.0 - p.alpha**2) * s2) / s2)
    p = ModelParams(alpha=0.5, mu=2.0, r=1.0)
    _, s2, _, _ = nb_central_moments(p.marginal())
    _, se2, _, _ = nb_central_moments(p.innovation())
    _, sg2, _, _ = g_central_moments(p)
    separation = abs((p.mu * sg2 + se2) - p.alpha * (1.0 - p.alpha) * s2)
    ok = worst <= 1e-12 and separation > 0.1
    return ok, f"identity residual {worst:.3e}, alternative-form gap {separation:.3f}"


def _covariance_structure():
    ok = True
    for p in PARAM_GRID:
        cov = predicted_cov(p)
        for mat in (cov.sigma_means, cov.sigma_alpha_mu, cov.sigma_vars):
            ok = ok and np.allclose(mat, mat.T, rtol=0, atol=1e-9 * abs(mat).max())
            ok = ok and (np.diag(mat) >= 0).all()
    return ok, "all predicted covariance matrices symmetric with non-negative diagonal"


def _sampler_law():
    rng = np.random.default_rng(20250815)
    nb = NBParams(r=1.0, mu=2.0)
    draws = nb_sample(nb, rng, size=200_000)
    tv_nb = tv_to_pmf(draws, nb_pmf_vector(nb, 60))

    p = ModelParams(alpha=0.5, mu=2.0, r=1.0)
    thin = np.array([thin_sample(p, 3, rng) for _ in range(200_000)])
    pmf = np.array([thin_conditional_pmf(p, 3, 1, k) for k in range(40)])
    tv_thin = tv_to_pmf(thin, pmf)
    ok = tv_nb < 0.01 and tv_thin < 0.01
    return ok, f"TV(marginal) {tv_nb:.4f}, TV(thinning) {tv_thin:.4f}"


def run_selftest(mutate: bool = False, stream=None) -> bool:
    """Run every suite, print one PASS/FAIL line each, return overall success."""
    stream = stream or sys.stdout
    suites = [
        ("functional-equation", lambda: _functional_equation(mutate)),
        ("operator-pgf-equivalence", _operator_equivalence),
        ("reparameterization-round-trip", _round_trip),
        ("h-fold-bridge-and-semigroup", _h_fold_identities),
        ("thinning-pmf-normalization", _thin_normalization),
        ("transition-law", _transition_invariants),
        ("moment-consistency", _moment_consistency),
        ("stationary-variance-identity", _variance_identity),
        ("covariance-structure", _covariance_structure),
        ("sampler-law", _sampler_law),
    ]
    all_ok = True
    failures = []
    for name, fn in suites:
        ok, detail = fn()
        all_ok = all_ok and ok
        if not ok:
            failures.append(name)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    if all_ok:
        print(f"selftest: all {len(suites)} suites passed", file=stream)
    else:
        print(f"selftest: FAILED suites: {', '.join(failures)}", file=stream)
    return all_ok
