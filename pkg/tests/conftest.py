"""Shared helpers for the test suite."""

import numpy as np

from nbinar import ModelParams

# (alpha, mu, r) triples exercised throughout; the middle one has
# hand-checkable values (q_tilde = 0.5, beta = 0.25, theta = 2/3)
PARAM_TRIPLES = [(0.3, 1.5, 0.8), (0.5, 2.0, 1.0), (0.7, 4.0, 2.5)]

S_GRID = np.linspace(0.0, 1.0, 21)


def models():
    return [ModelParams(a, m, r) for a, m, r in PARAM_TRIPLES]


def tv_to_pmf(values, pmf):
    """Total variation between an empirical sample and a pmf callable.

    Mass of the pmf beyond the largest observed value is lumped into a
    tail bucket so the comparison is over a proper distribution.
    """
    values = np.asarray(values)
    kmax = int(values.max())
    counts = np.bincount(values, minlength=kmax + 1) / values.size
    probs = np.array([pmf(k) for k in range(kmax + 1)])
    tail = max(0.0, 1.0 - probs.sum())
    return 0.5 * (np.abs(counts - probs).sum() + tail)
