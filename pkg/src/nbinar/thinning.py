"""Expectation thinning operators for the negative binomial INAR(1) model.

Applying the operator to a count x draws x iid copies of a count variable G
with the linear-fractional pgf

    Psi_G(s) = 1 - alpha (1 - s) / (1 + (1 - alpha) mu (1 - s) / r),

and sums them.  An equivalent parameterization uses beta = alpha r /
(r + (1 - alpha) mu) and theta = mu / (mu + r):

    Psi_G(s) = 1 - beta (1 - s) / (1 - (1 - beta) theta s).

G is a mixture: 0 with probability 1 - beta, otherwise a shifted geometric
with success probability 1 - (1 - beta) theta.  Composing the operator h
times stays in the family with parameters (beta_h, theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    NBParams,
    ParameterError,
    ShiftedGeomParams,
    _check_count,
    _check_unit_interval,
    coeff_A,
    coeff_B,
)

__all__ = [
    "ModelParams",
    "AltParams",
    "HFoldParams",
    "star_to_odot",
    "odot_to_star",
    "odot_pgf",
    "odot_sample",
    "g_pmf",
    "g_pgf",
    "g_central_moments",
    "h_fold",
    "thin_conditional_pmf",
    "thin_sample",
]


@dataclass(frozen=True)
class ModelParams:
    """Process parameters: thinning rate alpha in (0, 1), marginal mean mu > 0,
    shape r > 0."""

    alpha: float
    mu: float
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and 0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ParameterError(f"mu must be positive and finite, got {self.mu}")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ParameterError(f"r must be positive and finite, got {self.r}")

    @property
    def q_tilde(self) -> float:
        """r / (r + (1 - alpha) mu), in (0, 1)."""
        return self.r / (self.r + (1.0 - self.alpha) * self.mu)

    @property
    def theta(self) -> float:
        return self.mu / (self.mu + self.r)

    def marginal(self) -> NBParams:
        """Stationary marginal NB(r, mu)."""
        return NBParams(r=self.r, mu=self.mu)

    def innovation(self) -> NBParams:
        """Innovation law NB(r, (1 - alpha) mu)."""
        return NBParams(r=self.r, mu=(1.0 - self.alpha) * self.mu)


@dataclass(frozen=True)
class AltParams:
    """Operator parameters (beta, theta, r) equivalent to ModelParams."""

    beta: float
    theta: float
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and 0.0 < self.beta < 1.0):
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if not (math.isfinite(self.theta) and 0.0 < self.theta < 1.0):
            raise ParameterError(f"theta must lie in (0, 1), got {self.theta}")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ParameterError(f"r must be positive and finite, got {self.r}")


@dataclass(frozen=True)
class HFoldParams:
    """Parameters of the h-fold composed operator.

    Satisfies the bridge identities beta_h = alpha^h * q_tilde_h and
    1 - (1 - beta_h) theta = q_tilde_h.
    """

    h: int
    alpha_h: float
    q_tilde_h: float
    beta_h: float
    theta: float


def star_to_odot(p: ModelParams) -> AltParams:
    """Map (alpha, mu, r) to the equivalent (beta, theta, r)."""
    beta = p.alpha * p.r / (p.r + (1.0 - p.alpha) * p.mu)
    return AltParams(beta=beta, theta=p.theta, r=p.r)


def odot_to_star(a: AltParams) -> ModelParams:
    """Inverse map: alpha = beta / (1 - (1-beta) theta), mu = theta r / (1-theta)."""
    alpha = a.beta / (1.0 - (1.0 - a.beta) * a.theta)
    mu = a.theta * a.r / (1.0 - a.theta)
    return ModelParams(alpha=alpha, mu=mu, r=a.r)


def odot_pgf(beta: float, theta: float, s: float) -> float:
    """pgf of the (beta, theta) operator count: 1 - beta (1-s) / (1 - (1-beta) theta s)."""
    s = _check_unit_interval(s)
    return 1.0 - beta * (1.0 - s) / (1.0 - (1.0 - beta) * theta * s)


def g_pmf(p: ModelParams, k: int) -> float:
    """pmf of the thinning count G.

    P(G = 0) = 1 - beta and P(G = k) = beta (1 - bt) bt^(k-1) for k >= 1,
    where bt = (1 - beta) theta.
    """
    k = _check_count(k)
    a = star_to_odot(p)
    bt = (1.0 - a.beta) * a.theta
    if k == 0:
        return 1.0 - a.beta
    return a.beta * (1.0 - bt) * bt ** (k - 1)


def g_pgf(p: ModelParams, s: float) -> float:
    """pgf of G in the (alpha, mu, r) form."""
    s = _check_unit_interval(s)
    return 1.0 - p.alpha * (1.0 - s) / (1.0 + (1.0 - p.alpha) * p.mu * (1.0 - s) / p.r)


def g_central_moments(p: ModelParams) -> tuple[float, float, float, float]:
    """Mean and second/third/fourth central moments of G.

    Computed exactly from the mixture form of the pmf: with probability
    1 - beta, G = 0; otherwise G is shifted geometric with success
    probability 1 - (1 - beta) theta, whose raw moments are closed-form.
    """
    a = star_to_odot(p)
    geom = ShiftedGeomParams(p=(1.0 - a.beta) * a.theta)
    k1, k2, k3, k4 = geom.raw_moments()
    e1 = a.beta * k1
    e2 = a.beta * k2
    e3 = a.beta * k3
    e4 = a.beta * k4
    m2 = e2 - e1 * e1
    m3 = e3 - 3.0 * e1 * e2 + 2.0 * e1**3
    m4 = e4 - 4.0 * e1 * e3 + 6.0 * e1 * e1 * e2 - 3.0 * e1**4
    return e1, m2, m3, m4


def h_fold(p: ModelParams, h: int) -> HFoldParams:
    """Parameters (alpha^h, q_tilde_h, beta_h, theta) of the h-fold operator.

    beta_h = beta^h (1-theta) / ((1 - (1-beta) theta)^h - beta^h theta); since
    beta = alpha q_tilde and 1 - (1-beta) theta = q_tilde, the quotient
    collapses to alpha^h (1-theta) / (1 - theta alpha^h), evaluated with
    log1p for the subtraction.  Far into the tail (h log alpha < -30) the
    bridge identity beta_h = alpha^h q_tilde_h is used directly.
    """
    hh = _check_count(h, "h")
    if hh < 1:
        raise ParameterError(f"h must be a positive integer, got {h!r}")
    theta = p.theta
    alpha_h = p.alpha**hh
    q_h = p.r / (p.r + (1.0 - alpha_h) * p.mu)
    log_alpha_h = hh * math.log(p.alpha)
    if log_alpha_h < -30.0:
        beta_h = alpha_h * q_h
    else:
        beta_h = math.exp(log_alpha_h + math.log1p(-theta) - math.log1p(-theta * alpha_h))
    return HFoldParams(h=hh, alpha_h=alpha_h, q_tilde_h=q_h, beta_h=beta_h, theta=theta)


def thin_conditional_pmf(p: ModelParams, x: int, h: int, k: int) -> float:
    """P(h-fold thinning of x equals k).

    For k = 0 this is (1 - beta_h)^x; for k >= 1 it is
    sum_{i=1..min(k,x)} coeff_A(x, i, beta_h) coeff_B(k, i, 1 - (1-beta_h) theta).
    """
    x = _check_count(x, "x")
    k = _check_count(k, "k")
    hp = h_fold(p, h)
    if x == 0:
        return 1.0 if k == 0 else 0.0
    if k == 0:
        return (1.0 - hp.beta_h) ** x
    y = 1.0 - (1.0 - hp.beta_h) * hp.theta
    total = 0.0
    for i in range(1, min(k, x) + 1):
        total += coeff_A(x, i, hp.beta_h) * coeff_B(k, i, y)
    return total


def odot_sample(beta: float, theta: float, x: int, rng: np.random.Generator) -> int:
    """Apply the (beta, theta) operator to the count x: the number of nonzero
    contributors is Binomial(x, beta), and their total exceeds that count by a
    NegBinomial(count, 1 - (1-beta) theta) number of extras."""
    if x == 0:
        return 0
    n = int(rng.binomial(x, beta))
    if n == 0:
        return 0
    q = 1.0 - (1.0 - beta) * theta
    return n + int(rng.negative_binomial(n, q))


def odot_sample_array(beta: float, theta: float, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized ``odot_sample`` over an array of counts."""
    x = np.asarray(x)
    n = rng.binomial(x, beta)
    out = n.astype(np.int64)
    mask = out > 0
    if mask.any():
        q = 1.0 - (1.0 - beta) * theta
        out[mask] += rng.negative_binomial(n[mask], q)
    return out


def thin_sample(p: ModelParams, x: int, rng: np.random.Generator) -> int:
    """Draw the thinning of x, distributed as a sum of x iid copies of G."""
    x = _check_count(x, "x")
    a = star_to_odot(p)
    return odot_sample(a.beta, a.theta, x, rng)
