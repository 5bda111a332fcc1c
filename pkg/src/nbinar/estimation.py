"""Estimators for the negative binomial INAR(1) model.

Conditional least squares for the mean pair (alpha, mu_eps), Yule-Walker
moment matching, a second-stage least squares pass on squared residuals for
(sigma_G^2, sigma_eps^2) with derived sigma^2 and r estimators, conditional
maximum likelihood by simplex search, and the predicted asymptotic covariance
matrices for all of them.

Sum-index convention: for a series of length m the first observation is the
conditioning value X_0 and the regression sums run over the n = m - 1
transitions.  Yule-Walker uses the full-series mean and reports effective
sample size m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .distributions import (
    NBParams,
    ParameterError,
    nb_central_moments,
    nb_pmf_vector,
    nb_support_bound,
)
from .process import Series, transition_rows
from .thinning import ModelParams, g_central_moments

__all__ = [
    "DegenerateSeriesError",
    "MeanEstimates",
    "VarianceEstimates",
    "CovMatrices",
    "CmlFit",
    "cls_means",
    "yw_means",
    "cls_variances",
    "predicted_cov",
    "loglik",
    "cml_fit",
]

# log of the smallest positive double: sentinel for underflowing transitions
_LOG_UNDERFLOW = math.log(5e-324)


class DegenerateSeriesError(ValueError):
    """The series admits no well-defined estimator (constant regressor)."""


@dataclass(frozen=True)
class MeanEstimates:
    """Point estimates of (alpha, mu_eps) and the derived mu.

    mu_hat = mu_eps_hat / (1 - alpha_hat); estimates are reported raw and
    unclipped, with ``in_range`` flagging whether they fall in the parameter
    domain (alpha in (0, 1), mu_eps > 0).
    """

    alpha_hat: float
    mu_eps_hat: float
    mu_hat: float
    method: str
    n: int
    in_range: bool


@dataclass(frozen=True)
class VarianceEstimates:
    """Second-stage estimates of (sigma_G^2, sigma_eps^2) and derived values.

    ``sigma2_hat`` is (mu_hat sigma_G^2 + sigma_eps^2) / (1 - alpha^2);
    ``sigma2_hat_formula_a`` is the algebraically equivalent form
    (mu_eps sigma_G^2 + (1 - alpha) sigma_eps^2) / ((1 - alpha)^2 (1 + alpha)),
    reported separately.  ``r_hat`` = mu_eps^2 / (sigma_eps^2 - mu_eps) is
    defined only under overdispersion (sigma_eps^2 > mu_eps); otherwise it is
    NaN and ``r_defined`` is False.
    """

    sigma_g2_hat: float
    sigma_eps2_hat: float
    sigma2_hat: float
    sigma2_hat_formula_a: float
    r_hat: float
    r_defined: bool
    residual_mode: str
    n: int


@dataclass(frozen=True)
class CovMatrices:
    """Predicted asymptotic covariance matrices of the sqrt(n)-scaled errors.

    sigma_means for (alpha_hat, mu_eps_hat), sigma_alpha_mu for
    (alpha_hat, mu_hat), sigma_vars for (sigma_G^2_hat, sigma_eps^2_hat).
    """

    sigma_means: np.ndarray
    sigma_alpha_mu: np.ndarray
    sigma_vars: np.ndarray


@dataclass(frozen=True)
class CmlFit:
    """Result of a conditional maximum likelihood fit."""

    params: ModelParams
    loglik: float
    n_iter: int
    converged: bool
    n_underflow: int
    message: str
    init: ModelParams


def _regression_sums(x: np.ndarray):
    prev = x[:-1]
    n = prev.size
    sx = prev.sum()
    sxx = prev @ prev
    den = n * sxx - sx * sx
    return prev, n, sx, den


def cls_means(series: Series) -> MeanEstimates:
    """Least squares fit of X_t on (X_{t-1}, 1).

    alpha_hat = (n sum X_{t-1} X_t - sum X_{t-1} sum X_t)
                / (n sum X_{t-1}^2 - (sum X_{t-1})^2),
    mu_eps_hat = (sum X_t - alpha_hat sum X_{t-1}) / n.
    """
    x = series.values.astype(float)
    if x.size < 3:
        raise ParameterError("need at least 3 observations")
    prev, n, sx, den = _regression_sums(x)
    if den == 0:
        raise DegenerateSeriesError("constant regressor: slope undefined")
    curr = x[1:]
    sy = curr.sum()
    alpha = (n * (prev @ curr) - sx * sy) / den
    mu_eps = (sy - alpha * sx) / n
    mu = mu_eps / (1.0 - alpha) if alpha != 1.0 else math.nan
    in_range = (0.0 < alpha < 1.0) and mu_eps > 0.0
    return MeanEstimates(alpha_hat=float(alpha), mu_eps_hat=float(mu_eps),
                         mu_hat=float(mu), method="cls", n=n, in_range=in_range)


def yw_means(series: Series) -> MeanEstimates:
    """Moment matching through the lag-1 sample autocorrelation.

    alpha_hat = sum (X_t - xbar)(X_{t+1} - xbar) / sum (X_t - xbar)^2 with the
    mean and denominator over the full series; mu_hat = xbar and
    mu_eps_hat = (1 - alpha_hat) xbar.
    """
    x = series.values.astype(float)
    if x.size < 3:
        raise ParameterError("need at least 3 observations")
    xbar = x.mean()
    d = x - xbar
    den = d @ d
    if den == 0:
        raise DegenerateSeriesError("constant series: zero sample variance")
    alpha = (d[:-1] @ d[1:]) / den
    mu = xbar
    mu_eps = (1.0 - alpha) * xbar
    in_range = (0.0 < alpha < 1.0) and mu_eps > 0.0
    return MeanEstimates(alpha_hat=float(alpha), mu_eps_hat=float(mu_eps),
                         mu_hat=float(mu), method="yw", n=int(x.size),
                         in_range=in_range)


def cls_variances(series: Series, means: MeanEstimates | None = None, *,
                  known_alpha: float | None = None,
                  known_mu_eps: float | None = None) -> VarianceEstimates:
    """Least squares fit of the squared residuals on (X_{t-1}, 1).

    Residuals are U_t = X_t - alpha X_{t-1} - mu_eps with (alpha, mu_eps)
    either estimated by ``cls_means`` (default, or pass ``means``) or supplied
    as known values via the keywords, in which case the derived quantities use
    the known values too.
    """
    x = series.values.astype(float)
    if x.size < 3:
        raise ParameterError("need at least 3 observations")
    if (known_alpha is None) != (known_mu_eps is None):
        raise ParameterError("known_alpha and known_mu_eps must be given together")
    if known_alpha is not None:
        alpha, mu_eps = float(known_alpha), float(known_mu_eps)
        mode = "known-means"
    else:
        if means is None:
            means = cls_means(series)
        alpha, mu_eps = means.alpha_hat, means.mu_eps_hat
        mode = "estimated-means"

    prev, n, sx, den = _regression_sums(x)
    if den == 0:
        raise DegenerateSeriesError("constant regressor: slope undefined")
    u2 = (x[1:] - alpha * prev - mu_eps) ** 2
    su = u2.sum()
    sigma_g2 = (n * (prev @ u2) - sx * su) / den
    sigma_eps2 = (su - sigma_g2 * sx) / n

    if alpha != 1.0:
        mu = mu_eps / (1.0 - alpha)
        one_m_a2 = 1.0 - alpha * alpha
        sigma2 = (mu * sigma_g2 + sigma_eps2) / one_m_a2 if one_m_a2 != 0.0 else math.nan
        sigma2_a = (mu_eps * sigma_g2 + (1.0 - alpha) * sigma_eps2) \
            / ((1.0 - alpha) ** 2 * (1.0 + alpha)) if one_m_a2 != 0.0 else math.nan
    else:
        sigma2 = sigma2_a = math.nan
    r_defined = sigma_eps2 > mu_eps and mu_eps > 0.0
    r_hat = mu_eps * mu_eps / (sigma_eps2 - mu_eps) if r_defined else math.nan
    return VarianceEstimates(sigma_g2_hat=float(sigma_g2),
                             sigma_eps2_hat=float(sigma_eps2),
                             sigma2_hat=float(sigma2),
                             sigma2_hat_formula_a=float(sigma2_a),
                             r_hat=float(r_hat), r_defined=bool(r_defined),
                             residual_mode=mode, n=n)


def _expectations_rx(p: ModelParams) -> tuple[float, float, float]:
    """E[R(X) X^m] for m = 2, 1, 0 by truncated pmf summation.

    R(x) = 2 sigma_G^4 x^2 + (m4_G + 4 sigma_G^2 sigma_eps^2 - 3 sigma_G^4) x
           + (m4_eps - sigma_eps^4)
    is the conditional variance of the squared residual given X_{t-1} = x.
    """
    _, sg2, _, g_m4 = g_central_moments(p)
    _, se2, _, e_m4 = nb_central_moments(p.innovation())
    c2 = 2.0 * sg2 * sg2
    c1 = g_m4 + 4.0 * sg2 * se2 - 3.0 * sg2 * sg2
    c0 = e_m4 - se2 * se2
    marginal = p.marginal()
    # degree-4 polynomial weight: tighten the geometric tail rule accordingly
    kmax = nb_support_bound(marginal, 1e-18)
    k = np.arange(kmax + 1, dtype=float)
    pmf = nb_pmf_vector(marginal, kmax)
    rx = (c2 * k * k + c1 * k + c0) * pmf
    return float(rx @ (k * k)), float(rx @ k), float(rx.sum())


def predicted_cov(p: ModelParams) -> CovMatrices:
    """Predicted asymptotic covariances for the regression estimators.

    sigma_means is assembled from (sigma_G^2, sigma_eps^2, sigma^2, m3 of X,
    c^2 = mu sigma_G^2 + sigma_eps^2); sigma_alpha_mu is J sigma_means J' with
    J = (1-alpha)^{-1} [[1-alpha, 0], [mu, 1]]; sigma_vars is
    Phi^{-1} Sigma_1 Phi^{-T} with Phi the (X, 1) second-moment matrix and
    Sigma_1 the R(X)-weighted version of it.
    """
    mu, alpha = p.mu, p.alpha
    mean_x, s2, m3x, _ = nb_central_moments(p.marginal())
    _, sg2, _, _ = g_central_moments(p)
    _, se2, _, _ = nb_central_moments(p.innovation())
    c2 = mu * sg2 + se2
    s4 = s2 * s2

    s11 = (sg2 * m3x + c2 * s2) / s4
    s12 = -(mu * sg2 * m3x + mu * c2 * s2 - sg2 * s4) / s4
    s22 = (mu * mu * sg2 * m3x + mu * mu * c2 * s2 + se2 * s4 - mu * sg2 * s4) / s4
    sigma_means = np.array([[s11, s12], [s12, s22]])

    abar = 1.0 - alpha
    jac = np.array([[1.0, 0.0], [mu / abar, 1.0 / abar]])
    sigma_alpha_mu = jac @ sigma_means @ jac.T

    ex = mean_x
    ex2 = s2 + mean_x * mean_x
    phi = np.array([[ex2, ex], [ex, 1.0]])
    rx2, rx1, rx0 = _expectations_rx(p)
    sigma_1 = np.array([[rx2, rx1], [rx1, rx0]])
    phi_inv = np.linalg.inv(phi)
    sigma_vars = phi_inv @ sigma_1 @ phi_inv.T
    return CovMatrices(sigma_means=sigma_means, sigma_alpha_mu=sigma_alpha_mu,
                       sigma_vars=sigma_vars)


def _pair_counts(x: np.ndarray):
    prev = x[:-1]
    curr = x[1:]
    jmax = int(curr.max())
    code = prev * (jmax + 1) + curr
    uniq, counts = np.unique(code, return_counts=True)
    i_idx = uniq // (jmax + 1)
    j_idx = uniq % (jmax + 1)
    return i_idx, j_idx, counts, jmax


def _loglik_counts(p: ModelParams, i_idx, j_idx, counts, jmax) -> tuple[float, int]:
    rows = np.unique(i_idx)
    table = transition_rows(p, rows, jmax, 1)
    pv = table[np.searchsorted(rows, i_idx), j_idx]
    under = pv <= 0.0
    logs = np.where(under, _LOG_UNDERFLOW, np.log(np.where(under, 1.0, pv)))
    return float(counts @ logs), int(counts[under].sum())


def loglik(series: Series, p: ModelParams) -> float:
    """Conditional log-likelihood given X_0: sum of log one-step transition
    probabilities.  Transitions whose probability underflows to zero
    contribute the finite sentinel log(5e-324) each."""
    x = series.values
    if x.size < 2:
        raise ParameterError("need at least 2 observations")
    value, _ = _loglik_counts(p, *_pair_counts(x))
    return value


def _auto_init(series: Series) -> ModelParams:
    x = series.values.astype(float)
    alpha0, mu0 = 0.5, max(float(x.mean()), 0.1)
    try:
        yw = yw_means(series)
        if math.isfinite(yw.alpha_hat):
            alpha0 = min(max(yw.alpha_hat, 0.01), 0.99)
        if math.isfinite(yw.mu_hat) and yw.mu_hat > 0:
            mu0 = yw.mu_hat
    except DegenerateSeriesError:
        pass
    r0 = 1.0
    try:
        var = cls_variances(series)
        if var.r_defined and math.isfinite(var.r_hat):
            r0 = min(max(var.r_hat, 0.01), 100.0)
    except DegenerateSeriesError:
        pass
    return ModelParams(alpha=alpha0, mu=mu0, r=r0)


def cml_fit(series: Series, init: ModelParams | None = None) -> CmlFit:
    """Maximize the conditional log-likelihood by Nelder-Mead simplex search
    over (logit alpha, log mu, log r).

    The default start is the Yule-Walker alpha (clipped to (0.01, 0.99)) and
    mu, with r from the moment estimator clipped positive; degenerate series
    fall back to (0.5, series mean, 1).  Convergence means the simplex
    collapsed below 1e-6 in the transformed space within 500 iterations.
    """
    x = series.values
    if x.size < 2:
        raise ParameterError("need at least 2 observations")
    if init is None:
        init = _auto_init(series)
    pairs = _pair_counts(x)

    def unpack(t):
        t = np.clip(t, -30.0, 30.0)
        return ModelParams(alpha=1.0 / (1.0 + math.exp(-t[0])),
                           mu=math.exp(t[1]), r=math.exp(t[2]))

    def nll(t):
        value, _ = _loglik_counts(unpack(t), *pairs)
        return -value

    t0 = np.array([math.log(init.alpha / (1.0 - init.alpha)),
                   math.log(init.mu), math.log(init.r)])
    res = minimize(nll, t0, method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-9,
                            "maxiter": 500, "maxfev": 10000})
    params = unpack(res.x)
    value, n_under = _loglik_counts(params, *pairs)
    return CmlFit(params=params, loglik=value, n_iter=int(res.nit),
                  converged=bool(res.success), n_underflow=n_under,
                  message=str(res.message), init=init)
