"""Negative binomial and shifted geometric primitives.

The negative binomial NB(r, mu) is parameterized by shape r > 0 and mean
mu > 0, with theta = mu / (mu + r) in (0, 1), pmf

    P(X = k) = Gamma(k + r) / (k! Gamma(r)) * (1 - theta)^r theta^k,

and variance mu * (mu / r + 1).  The combinatorial kernels ``coeff_A`` and
``coeff_B`` are the building blocks of every conditional law in this package;
``coeff_B`` accepts real-valued indices because the transition formulas use it
with a non-integer index r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln as log_gamma

__all__ = [
    "TAIL_TOL",
    "ParameterError",
    "NBParams",
    "ShiftedGeomParams",
    "log_gamma",
    "nb_pmf",
    "nb_pmf_vector",
    "nb_pgf",
    "nb_sample",
    "nb_central_moments",
    "nb_support_bound",
    "coeff_A",
    "coeff_B",
]

# Geometric tail domination: NB(r, mu) tail sums are truncated at the smallest
# K past the mode with pmf(K) / (1 - theta) < TAIL_TOL.
TAIL_TOL = 1e-14


class ParameterError(ValueError):
    """A parameter or index lies outside its domain."""


def _check_count(k, name: str = "k") -> int:
    try:
        kk = int(k)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a non-negative integer, got {k!r}") from None
    if kk != k or kk < 0:
        raise ParameterError(f"{name} must be a non-negative integer, got {k!r}")
    return kk


def _check_unit_interval(s, name: str = "s") -> float:
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {s}")
    return s


@dataclass(frozen=True)
class NBParams:
    """Negative binomial with shape ``r`` and mean ``mu``, both positive."""

    r: float
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise ParameterError(f"r must be positive and finite, got {self.r}")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ParameterError(f"mu must be positive and finite, got {self.mu}")

    @property
    def theta(self) -> float:
        """Success-probability style parameter mu / (mu + r), in (0, 1)."""
        return self.mu / (self.mu + self.r)


@dataclass(frozen=True)
class ShiftedGeomParams:
    """Geometric on {1, 2, ...} with pmf (1 - p) p^(k-1)."""

    p: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and 0.0 < self.p < 1.0):
            raise ParameterError(f"p must lie in (0, 1), got {self.p}")

    def pmf(self, k: int) -> float:
        k = _check_count(k)
        if k < 1:
            return 0.0
        return (1.0 - self.p) * self.p ** (k - 1)

    def pgf(self, s: float) -> float:
        s = _check_unit_interval(s)
        return (1.0 - self.p) * s / (1.0 - self.p * s)

    def raw_moments(self) -> tuple[float, float, float, float]:
        """First four raw moments E[K^m], m = 1..4, in closed form."""
        p = self.p
        pbar = 1.0 - p
        m1 = 1.0 / pbar
        m2 = (1.0 + p) / pbar**2
        m3 = (1.0 + 4.0 * p + p * p) / pbar**3
        m4 = (1.0 + 11.0 * p + 11.0 * p * p + p**3) / pbar**4
        return m1, m2, m3, m4


def nb_pmf(params: NBParams, k: int) -> float:
    """P(X = k) for X ~ NB(r, mu), evaluated in log space.

    Equals ``coeff_B(k + r, r, 1 - theta)``.
    """
    k = _check_count(k)
    r = params.r
    theta = params.theta
    logp = (
        float(log_gamma(k + r) - log_gamma(k + 1.0) - log_gamma(r))
        + r * math.log1p(-theta)
        + (k * math.log(theta) if k else 0.0)
    )
    return math.exp(logp)


def nb_pmf_vector(params: NBParams, kmax: int) -> np.ndarray:
    """pmf values for k = 0..kmax as an array."""
    kmax = _check_count(kmax, "kmax")
    r = params.r
    theta = params.theta
    k = np.arange(kmax + 1)
    logp = (
        log_gamma(k + r)
        - log_gamma(k + 1.0)
        - log_gamma(r)
        + r * math.log1p(-theta)
        + k * math.log(theta)
    )
    return np.exp(logp)


def nb_pgf(params: NBParams, s: float) -> float:
    """E[s^X] = (1 + mu (1 - s) / r)^(-r) for s in [0, 1]."""
    s = _check_unit_interval(s)
    return (1.0 + params.mu * (1.0 - s) / params.r) ** (-params.r)


def nb_sample(params: NBParams, rng: np.random.Generator, size=None):
    """Draw from NB(r, mu) as a Poisson with Gamma(r, scale mu/r) mean."""
    lam = rng.gamma(shape=params.r, scale=params.mu / params.r, size=size)
    return rng.poisson(lam)


def nb_central_moments(params: NBParams) -> tuple[float, float, float, float]:
    """Mean and second/third/fourth central moments of NB(r, mu).

    Returns
    -------
    (mean, m2, m3, m4) : tuple of floats
        mean = mu, m2 = mu(mu/r + 1), m3 = mu(mu/r + 1)(2 mu/r + 1),
        m4 = mu(mu/r + 1)[1 + 3 mu(mu/r + 1)(1 + 2/r)].
    """
    mu, r = params.mu, params.r
    v = mu * (mu / r + 1.0)
    m3 = v * (2.0 * mu / r + 1.0)
    m4 = v * (1.0 + 3.0 * v * (1.0 + 2.0 / r))
    return mu, v, m3, m4


def nb_support_bound(params: NBParams, tol: float = TAIL_TOL) -> int:
    """Smallest K past the pmf mode with pmf(K) / (1 - theta) < tol.

    Beyond the mode the pmf ratio pmf(k+1)/pmf(k) = theta (k+r)/(k+1) is
    bounded by a constant < 1, so the tail beyond K is dominated by a
    geometric series with sum < pmf(K) / (1 - theta) up to that constant.
    """
    if not (0.0 < tol < 1.0):
        raise ParameterError(f"tol must lie in (0, 1), got {tol}")
    r = params.r
    theta = params.theta
    pk = (1.0 - theta) ** r  # pmf(0)
    bound = 1.0 / (1.0 - theta)
    k = 0
    while k < 10**7:
        past_mode = theta * (k + r) / (k + 1.0) <= 1.0
        if past_mode and pk * bound < tol:
            return k
        pk *= theta * (k + r) / (k + 1.0)
        k += 1
    raise RuntimeError("tail truncation bound not reached")


def coeff_A(n: int, i: int, y: float) -> float:
    """Binomial kernel C(n, i) y^i (1 - y)^(n - i), log-space internally."""
    n = _check_count(n, "n")
    if int(i) != i or i < 0 or i > n:
        raise ParameterError(f"i must lie in 0..{n}, got {i!r}")
    i = int(i)
    y = float(y)
    if not 0.0 < y < 1.0:
        raise ParameterError(f"y must lie in (0, 1), got {y}")
    logv = (
        float(log_gamma(n + 1.0) - log_gamma(i + 1.0) - log_gamma(n - i + 1.0))
        + (i * math.log(y) if i else 0.0)
        + ((n - i) * math.log1p(-y) if n - i else 0.0)
    )
    return math.exp(logv)


def coeff_B(n: float, l: float, y: float) -> float:
    """Kernel Gamma(n) / (Gamma(l) Gamma(n - l + 1)) * y^l (1 - y)^(n - l).

    Indices are real-valued with n >= l > 0; for integer n, l this is
    C(n-1, l-1) y^l (1-y)^(n-l).
    """
    n = float(n)
    l = float(l)
    if not (math.isfinite(l) and l > 0.0):
        raise ParameterError(f"l must be positive, got {l}")
    if not (math.isfinite(n) and n >= l):
        raise ParameterError(f"n must satisfy n >= l, got n={n}, l={l}")
    y = float(y)
    if not 0.0 < y < 1.0:
        raise ParameterError(f"y must lie in (0, 1), got {y}")
    logv = (
        float(log_gamma(n) - log_gamma(l) - log_gamma(n - l + 1.0))
        + l * math.log(y)
        + (n - l) * math.log1p(-y)
    )
    return math.exp(logv)
