"""The stationary negative binomial INAR(1) process.

The recursion is X_{t+1} = thin(X_t) + eps_{t+1} where thin applies the
(alpha, mu, r) operator and the innovations are iid NB(r, (1 - alpha) mu).
Started from X_0 ~ NB(r, mu) the process is strictly stationary with NB(r, mu)
marginal, autocorrelation alpha^k, and explicit h-step transition laws built
from the kernels coeff_A and coeff_B.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    NBParams,
    ParameterError,
    _check_count,
    _check_unit_interval,
    coeff_A,
    coeff_B,
    log_gamma,
    nb_sample,
    nb_support_bound,
)
from .thinning import ModelParams, h_fold, odot_sample, odot_sample_array, star_to_odot

__all__ = [
    "Series",
    "TransitionTable",
    "simulate",
    "transition_prob",
    "transition_rows",
    "transition_table",
    "default_max_state",
    "conditional_moments",
    "conditional_pgf",
    "joint_pgf",
    "autocorrelation",
    "ma_sample",
    "read_series",
    "write_series",
]


@dataclass
class Series:
    """A time-ordered vector of non-negative integer counts."""

    values: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ParameterError("series must be a non-empty one-dimensional array")
        if not np.issubdtype(v.dtype, np.integer):
            rounded = np.asarray(np.rint(v), dtype=np.int64)
            if not np.array_equal(rounded, v):
                raise ParameterError("series entries must be integers")
            v = rounded
        else:
            v = v.astype(np.int64)
        if (v < 0).any():
            raise ParameterError("series entries must be non-negative")
        self.values = v

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass
class TransitionTable:
    """Dense h-step transition probabilities on states 0..max_state.

    ``tail_mass[i]`` is the probability of leaving the truncation window from
    state i, so each row plus its tail mass sums to one.
    """

    h: int
    max_state: int
    probs: np.ndarray
    tail_mass: np.ndarray = field(init=False)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.tail_mass = np.maximum(0.0, 1.0 - self.probs.sum(axis=1))

    def to_csv(self, path) -> None:
        """Write the table with a header row of destination states."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["from_state", *range(self.max_state + 1), "tail_mass"])
            for i in range(self.max_state + 1):
                writer.writerow([i, *(repr(float(v)) for v in self.probs[i]),
                                 repr(float(self.tail_mass[i]))])


def simulate(p: ModelParams, n: int, rng: np.random.Generator) -> Series:
    """Simulate n observations of the stationary process.

    X_0 is drawn from the NB(r, mu) marginal, then
    X_{t+1} = thin(X_t) + eps_{t+1} with eps ~ NB(r, (1 - alpha) mu) iid.
    """
    n = _check_count(n, "n")
    if n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    a = star_to_odot(p)
    x = np.empty(n, dtype=np.int64)
    x[0] = nb_sample(p.marginal(), rng)
    eps = nb_sample(p.innovation(), rng, size=n - 1) if n > 1 else ()
    for t in range(1, n):
        x[t] = odot_sample(a.beta, a.theta, int(x[t - 1]), rng) + eps[t - 1]
    meta = {"alpha": p.alpha, "mu": p.mu, "r": p.r, "mode": "stationary"}
    return Series(x, meta=meta)


def transition_prob(p: ModelParams, i: int, j: int, h: int = 1) -> float:
    """h-step transition probability P(X_{t+h} = j | X_t = i).

    With q = q_tilde_h and b = alpha^h q: for i = 0 the value is
    coeff_B(j + r, r, q); for i >= 1 it is

        coeff_A(i, 0, b) coeff_B(j + r, r, q)
        + sum_{k=1..j} coeff_B(j - k + r, r, q)
          sum_{l=1..min(i,k)} coeff_A(i, l, b) coeff_B(k, l, q).
    """
    i = _check_count(i, "i")
    j = _check_count(j, "j")
    hp = h_fold(p, h)
    q = hp.q_tilde_h
    r = p.r
    if i == 0:
        return coeff_B(j + r, r, q)
    b = hp.alpha_h * q
    total = coeff_A(i, 0, b) * coeff_B(j + r, r, q)
    for k in range(1, j + 1):
        inner = 0.0
        for l in range(1, min(i, k) + 1):
            inner += coeff_A(i, l, b) * coeff_B(k, l, q)
        total += coeff_B(j - k + r, r, q) * inner
    return total


def transition_rows(p: ModelParams, rows, j_max: int, h: int = 1) -> np.ndarray:
    """Transition probabilities for each origin state in ``rows``, vectorized.

    Evaluates the same formula as ``transition_prob`` for all destinations
    j = 0..j_max at once: the thinning pmf row is assembled from the
    coeff_A / coeff_B kernels and convolved with the h-step innovation pmf.
    """
    j_max = _check_count(j_max, "j_max")
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 1 or rows.size == 0 or (rows < 0).any():
        raise ParameterError("rows must be a non-empty vector of states")
    hp = h_fold(p, h)
    q = hp.q_tilde_h
    r = p.r
    b = hp.alpha_h * q
    imax = int(rows.max())
    m = j_max + 1

    j = np.arange(m)
    log_e = log_gamma(j + r) - log_gamma(r) - log_gamma(j + 1.0) \
        + r * math.log(q) + j * math.log1p(-q)
    e = np.exp(log_e)

    # binomial kernel rows A[t, l] = coeff_A(rows[t], l, b)
    A = np.zeros((rows.size, imax + 1))
    log_b = math.log(b)
    log_bbar = math.log1p(-b)
    for t, i in enumerate(rows):
        l = np.arange(i + 1)
        A[t, : i + 1] = np.exp(
            log_gamma(i + 1.0) - log_gamma(l + 1.0) - log_gamma(i - l + 1.0)
            + l * log_b + (i - l) * log_bbar
        )

    # thinning pmf W[t, k] for k = 0..j_max; coeff_B(k, l, q) vanishes for k < l
    W = np.zeros((rows.size, m))
    W[:, 0] = A[:, 0]
    if imax >= 1 and j_max >= 1:
        l = np.arange(1, imax + 1)[:, None].astype(float)
        k = np.arange(1, m)[None, :].astype(float)
        logB = log_gamma(k) - log_gamma(l) - log_gamma(k - l + 1.0) \
            + l * math.log(q) + (k - l) * math.log1p(-q)
        B = np.where(k >= l, np.exp(logB), 0.0)
        W[:, 1:] = A[:, 1:] @ B

    # convolve with the innovation pmf: P[t, j] = sum_k W[t, k] e[j - k]
    E = np.zeros((m, m))
    for k in range(m):
        E[k, k:] = e[: m - k]
    return W @ E


def default_max_state(p: ModelParams) -> int:
    """Default table truncation: twice the NB(r, mu) tail bound at 1e-12."""
    return 2 * nb_support_bound(p.marginal(), 1e-12)


def transition_table(p: ModelParams, max_state: int | None = None, h: int = 1) -> TransitionTable:
    """Dense transition table on 0..max_state with declared per-row tail mass."""
    if max_state is None:
        max_state = default_max_state(p)
    max_state = _check_count(max_state, "max_state")
    if max_state > 5000:
        raise ParameterError(f"max_state {max_state} exceeds the supported bound 5000")
    probs = transition_rows(p, np.arange(max_state + 1), max_state, h)
    return TransitionTable(h=int(h), max_state=max_state, probs=probs)


def conditional_moments(p: ModelParams, x: int, h: int = 1) -> tuple[float, float]:
    """Conditional mean and variance of X_{t+h} given X_t = x.

    mean = alpha^h x + mu (1 - alpha^h);
    var = (2 mu / r + 1) alpha^h (1 - alpha^h) x
          + mu (1 - alpha^h) (1 + (1 - alpha^h) mu / r).
    """
    x = _check_count(x, "x")
    ah = p.alpha ** _check_positive_h(h)
    mean = ah * x + p.mu * (1.0 - ah)
    var = (2.0 * p.mu / p.r + 1.0) * ah * (1.0 - ah) * x \
        + p.mu * (1.0 - ah) * (1.0 + (1.0 - ah) * p.mu / p.r)
    return mean, var


def conditional_pgf(p: ModelParams, x: int, h: int, s: float) -> float:
    """E[s^{X_{t+h}} | X_t = x] in closed form."""
    x = _check_count(x, "x")
    s = _check_unit_interval(s)
    hp = h_fold(p, h)
    q = hp.q_tilde_h
    denom = 1.0 - (1.0 - q) * s
    return (1.0 - hp.alpha_h * q * (1.0 - s) / denom) ** x * (q / denom) ** p.r


def joint_pgf(p: ModelParams, s1: float, s2: float) -> float:
    """Joint pgf E[s1^{X_t} s2^{X_{t+1}}] of adjacent states.

    The displayed form is symmetric in (s1, s2): the stationary process is
    time reversible.
    """
    s1 = _check_unit_interval(s1, "s1")
    s2 = _check_unit_interval(s2, "s2")
    r, mu, alpha = p.r, p.mu, p.alpha
    abar_mu = (1.0 - alpha) * mu
    # group (s1 + s2) and (s1 * s2) so the swap symmetry holds bitwise
    inner = (
        (r + mu) * (r + abar_mu)
        - abar_mu * (r + mu) * (s1 + s2)
        + mu * (abar_mu - r * alpha) * (s1 * s2)
    ) / (r * r)
    return inner ** (-r)


def autocorrelation(p: ModelParams, k: int) -> float:
    """Lag-k autocorrelation alpha^k (k = 0 returns 1)."""
    k = _check_count(k)
    return 1.0 if k == 0 else p.alpha**k


def ma_sample(p: ModelParams, J: int, rng: np.random.Generator, size=None):
    """Draw from the J-truncated moving-average representation.

    Returns sum_{j=0..J} of the (beta_j, theta) operator applied to
    independent innovations (the j = 0 term is the innovation itself);
    as J grows the law converges to the NB(r, mu) marginal.
    """
    J = _check_count(J, "J")
    eps_params = p.innovation()
    total = nb_sample(eps_params, rng, size=size)
    for j in range(1, J + 1):
        hp = h_fold(p, j)
        eps = nb_sample(eps_params, rng, size=size)
        if size is None:
            total += odot_sample(hp.beta_h, hp.theta, int(eps), rng)
        else:
            total = total + odot_sample_array(hp.beta_h, hp.theta, eps, rng)
    return total


def _check_positive_h(h) -> int:
    hh = _check_count(h, "h")
    if hh < 1:
        raise ParameterError(f"h must be a positive integer, got {h!r}")
    return hh


def write_series(path, series: Series) -> None:
    """Write one integer per line."""
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(v)) for v in series.values))
        fh.write("\n")


def _is_plain_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def read_series(path) -> Series:
    """Read a series file: one integer per line, or CSV with a column ``x``."""
    with open(path, newline="") as fh:
        text = fh.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"series file {path} is empty")
    if "," in lines[0] or not _is_plain_int(lines[0]):
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or "x" not in reader.fieldnames:
            raise ValueError(f"CSV series file {path} must have a column named 'x'")
        values = [int(row["x"]) for row in reader]
    else:
        values = [int(ln) for ln in lines]
    return Series(np.asarray(values, dtype=np.int64))
