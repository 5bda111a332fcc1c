"""Tests for simulation, transition laws, pgfs, and series I/O."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nbinar import (
    ModelParams,
    NBParams,
    ParameterError,
    Series,
    autocorrelation,
    conditional_moments,
    conditional_pgf,
    g_pgf,
    h_fold,
    joint_pgf,
    ma_sample,
    nb_pgf,
    nb_pmf,
    nb_pmf_vector,
    nb_support_bound,
    read_series,
    simulate,
    thin_conditional_pmf,
    transition_prob,
    transition_table,
    write_series,
)
from nbinar.process import default_max_state, transition_rows
from nbinar.thinning import odot_pgf

from conftest import S_GRID, models, tv_to_pmf

P_HAND = ModelParams(0.5, 2.0, 1.0)


def trans_order_1_reference(alpha, mu, i, j):
    # geometric-marginal one-step law, coded with integer binomials only
    q = 1.0 / (1.0 + (1.0 - alpha) * mu)
    return trans_order_h_reference(alpha, mu, 1, i, j, q_override=q)


def trans_order_h_reference(alpha, mu, h, i, j, q_override=None):
    a_h = alpha ** h
    q_h = q_override if q_override is not None else 1.0 / (1.0 + (1.0 - a_h) * mu)
    if i == 0:
        return q_h * (1.0 - q_h) ** j

    def A(n, ii, y):
        return math.comb(n, ii) * y ** ii * (1.0 - y) ** (n - ii)

    def B(n, l, y):
        return math.comb(n - 1, l - 1) * y ** l * (1.0 - y) ** (n - l)

    total = A(i, 0, a_h * q_h) * B(j + 1, 1, q_h)
    for k in range(1, j + 1):
        inner = sum(A(i, l, a_h * q_h) * B(k, l, q_h)
                    for l in range(1, min(i, k) + 1))
        total += B(j - k + 1, 1, q_h) * inner
    return total


def test_series_validation():
    with pytest.raises(ParameterError):
        Series(np.array([]))
    with pytest.raises(ParameterError):
        Series(np.array([1.5, 2.0]))
    with pytest.raises(ParameterError):
        Series(np.array([1, -2]))
    with pytest.raises(ParameterError):
        Series(np.array([[1, 2]]))
    s = Series(np.array([1.0, 2.0]))  # integral floats are accepted
    assert len(s) == 2 and s.values.dtype.kind == "i"


def test_simulate_shape_and_determinism():
    s1 = simulate(P_HAND, 500, np.random.default_rng(42))
    s2 = simulate(P_HAND, 500, np.random.default_rng(42))
    s3 = simulate(P_HAND, 500, np.random.default_rng(43))
    assert len(s1) == 500
    assert np.array_equal(s1.values, s2.values)
    assert not np.array_equal(s1.values, s3.values)
    assert np.all(s1.values >= 0)


def test_simulate_stationary_law_and_autocorrelation():
    rng = np.random.default_rng(42)
    x = simulate(P_HAND, 200_000, rng).values
    marg = P_HAND.marginal()
    assert tv_to_pmf(x, lambda k: nb_pmf(marg, k)) < 0.01
    xc = x - x.mean()
    denom = float(np.sum(xc * xc))
    lag1 = float(np.sum(xc[:-1] * xc[1:])) / denom
    lag2 = float(np.sum(xc[:-2] * xc[2:])) / denom
    assert abs(lag1 - 0.5) < 0.02
    assert abs(lag2 - 0.25) < 0.02


def test_simulate_near_independence_limit():
    rng = np.random.default_rng(9)
    x = simulate(ModelParams(1e-9, 2.0, 1.0), 20_000, rng).values
    xc = x - x.mean()
    lag1 = float(np.sum(xc[:-1] * xc[1:])) / float(np.sum(xc * xc))
    assert abs(lag1) < 0.02


def test_transition_prob_hand_values():
    assert abs(transition_prob(P_HAND, 1, 1, 1) - 0.25) <= 1e-14
    assert abs(transition_prob(P_HAND, 0, 0, 1) - 0.5) <= 1e-14
    for j in range(6):
        # i = 0 row is the innovation law, here geometric(1/2)
        assert_allclose(transition_prob(P_HAND, 0, j, 1), 0.5 ** (j + 1),
                        rtol=1e-13)


def test_transition_prob_matches_thinning_convolution():
    # independent route: thin the start state, convolve with the h-step
    # innovation total, which is NB(r, (1 - alpha^h) mu)
    for p in models():
        for h in (1, 2, 3):
            innov_h = NBParams(p.r, (1.0 - p.alpha ** h) * p.mu)
            innov_pmf = nb_pmf_vector(innov_h, 25)
            for i in (0, 1, 2, 5, 10):
                thin_pmf = np.array([thin_conditional_pmf(p, i, h, k)
                                     for k in range(26)])
                want = np.convolve(thin_pmf, innov_pmf)[:26]
                got = np.array([transition_prob(p, i, j, h)
                                for j in range(26)])
                assert_allclose(got, want, rtol=0.0, atol=1e-12)


def test_transition_prob_matches_geometric_reference():
    for alpha, mu in [(0.5, 2.0), (0.7, 4.0)]:
        p = ModelParams(alpha, mu, 1.0)
        for h in (1, 2, 4):
            for i in range(0, 16, 3):
                for j in range(0, 16, 3):
                    want = trans_order_h_reference(alpha, mu, h, i, j)
                    got = transition_prob(p, i, j, h)
                    assert abs(got - want) <= 1e-13
    assert abs(transition_prob(ModelParams(0.5, 2.0, 1.0), 4, 7, 1)
               - trans_order_1_reference(0.5, 2.0, 4, 7)) <= 1e-13


def test_transition_rows_match_scalar():
    p = ModelParams(0.7, 4.0, 2.5)
    rows = transition_rows(p, [0, 1, 5, 12], 30, h=2)
    for a, i in enumerate([0, 1, 5, 12]):
        want = [transition_prob(p, i, j, 2) for j in range(31)]
        assert_allclose(rows[a], want, rtol=1e-13, atol=1e-300)


def test_transition_table_structure():
    table = transition_table(P_HAND, 80, 1)
    assert table.probs.shape == (81, 81)
    assert np.all(table.probs > 0.0)  # every state reaches every state
    sums = table.probs.sum(axis=1) + table.tail_mass
    assert np.all(sums <= 1.0 + 1e-12)
    assert np.all(table.tail_mass[:21] <= 1e-9)
    with pytest.raises(ParameterError):
        transition_table(P_HAND, 6000)


def test_transition_table_chapman_kolmogorov():
    # square the one-step law on a buffered window so intermediate states
    # beyond the crop do not leak out of the product
    one = transition_table(P_HAND, 180, 1).probs
    two = transition_table(P_HAND, 80, 2).probs
    assert np.max(np.abs((one @ one)[:81, :81] - two)) <= 1e-8


def test_transition_table_preserves_stationary_law():
    table = transition_table(P_HAND, 180, 1)
    pi = nb_pmf_vector(P_HAND.marginal(), 180)
    residual = np.abs((pi @ table.probs)[:80] - pi[:80])
    assert np.max(residual) <= 1e-8


def test_default_max_state_covers_marginal():
    for p in models():
        J = default_max_state(p)
        assert nb_pmf_vector(p.marginal(), J).sum() >= 1.0 - 1e-11


def test_conditional_moments_hand_values():
    mean, var = conditional_moments(P_HAND, 3, 1)
    assert_allclose([mean, var], [2.5, 5.75], rtol=1e-13)


def test_conditional_moments_match_transition_row():
    for p in models():
        jmax = 4 * nb_support_bound(p.marginal(), 1e-14) + 40
        for h in (1, 3):
            rows = transition_rows(p, [0, 3, 10], jmax, h)
            j = np.arange(jmax + 1, dtype=float)
            for a, x in enumerate([0, 3, 10]):
                mean = float(np.sum(rows[a] * j))
                var = float(np.sum(rows[a] * (j - mean) ** 2))
                assert_allclose(conditional_moments(p, x, h), [mean, var],
                                rtol=1e-8)


def test_conditional_moments_forget_start_state():
    mean, var = conditional_moments(P_HAND, 17, 60)
    assert_allclose([mean, var], [2.0, 6.0], rtol=1e-8)


def test_conditional_pgf_series_oracle():
    p = ModelParams(0.5, 2.0, 1.0)
    row = transition_rows(p, [4], 400, h=2)[0]
    j = np.arange(401, dtype=float)
    for s in (0.3, 0.7):
        want = float(np.sum(row * s ** j))
        assert_allclose(conditional_pgf(p, 4, 2, s), want, rtol=1e-10)
    assert conditional_pgf(p, 4, 2, 1.0) == 1.0


def test_conditional_pgf_derivative_is_conditional_mean():
    p = ModelParams(0.7, 4.0, 2.5)
    eps = 1e-6
    fd = (conditional_pgf(p, 5, 1, 1.0) - conditional_pgf(p, 5, 1, 1.0 - eps)) / eps
    mean, _ = conditional_moments(p, 5, 1)
    assert_allclose(fd, mean, rtol=1e-4)


def test_conditional_pgf_factors_into_thinning_and_innovations():
    # start-state part is the h-fold operator pgf raised to x; the rest is
    # the accumulated innovation pgf, a product over thinned innovations
    for p in models():
        innov = p.innovation()
        for h in range(1, 6):
            hp = h_fold(p, h)
            for s in (0.0, 0.25, 0.5, 0.75, 1.0):
                zero_part = conditional_pgf(p, 0, h, s)
                product = 1.0
                for j in range(h):
                    if j == 0:
                        inner = s
                    else:
                        hj = h_fold(p, j)
                        inner = odot_pgf(hj.beta_h, hj.theta, s)
                    product *= nb_pgf(innov, inner)
                assert abs(zero_part - product) <= 1e-12
                g_part = odot_pgf(hp.beta_h, hp.theta, s) ** 3
                assert abs(conditional_pgf(p, 3, h, s) - g_part * zero_part) <= 1e-12


def test_joint_pgf_marginalization_and_symmetry():
    for p in models():
        marg = p.marginal()
        assert abs(joint_pgf(p, 1.0, 1.0) - 1.0) <= 1e-14
        for s in S_GRID:
            assert_allclose(joint_pgf(p, s, 1.0), nb_pgf(marg, s), rtol=1e-13)
            assert_allclose(joint_pgf(p, 1.0, s), nb_pgf(marg, s), rtol=1e-13)
        for s1 in (0.1, 0.5, 0.9):
            for s2 in (0.2, 0.6, 1.0):
                assert joint_pgf(p, s1, s2) == joint_pgf(p, s2, s1)


def test_joint_pgf_series_oracle():
    # E[s1^X0 s2^X1] by summing the stationary law against transition rows
    p = P_HAND
    jmax = 200
    pi = nb_pmf_vector(p.marginal(), jmax)
    rows = transition_rows(p, list(range(jmax + 1)), jmax, 1)
    s1, s2 = 0.4, 0.8
    want = float((pi * s1 ** np.arange(jmax + 1)) @ (rows @ s2 ** np.arange(jmax + 1)))
    assert_allclose(joint_pgf(p, s1, s2), want, rtol=1e-10)


def test_autocorrelation_values():
    p = ModelParams(0.7, 4.0, 2.5)
    assert autocorrelation(p, 0) == 1.0
    for k in (1, 2, 5):
        assert_allclose(autocorrelation(p, k), 0.7 ** k, rtol=1e-14)


def test_ma_sample_truncation_at_zero_is_innovation():
    rng = np.random.default_rng(31)
    draws = ma_sample(P_HAND, 0, rng, size=100_000)
    innov = P_HAND.innovation()
    assert tv_to_pmf(draws, lambda k: nb_pmf(innov, k)) < 0.01


def test_ma_sample_approaches_marginal():
    rng = np.random.default_rng(20250815)
    draws = ma_sample(P_HAND, 50, rng, size=100_000)
    marg = P_HAND.marginal()
    assert tv_to_pmf(draws, lambda k: nb_pmf(marg, k)) < 0.015


def test_ma_pgf_product_residual_decreases():
    p = P_HAND
    marg, innov = p.marginal(), p.innovation()
    s = 0.5
    residuals = []
    for J in (0, 1, 2, 5, 10, 20, 50):
        product = nb_pgf(innov, s)
        for j in range(1, J + 1):
            hj = h_fold(p, j)
            product *= nb_pgf(innov, odot_pgf(hj.beta_h, hj.theta, s))
        residuals.append(abs(product - nb_pgf(marg, s)))
    assert all(a > b for a, b in zip(residuals, residuals[1:]))


def test_empirical_time_reversibility():
    rng = np.random.default_rng(20250815)
    x = simulate(P_HAND, 100_000, rng).values
    kmax = 15
    counts = np.zeros((kmax + 1, kmax + 1))
    mask = (x[:-1] <= kmax) & (x[1:] <= kmax)
    np.add.at(counts, (x[:-1][mask], x[1:][mask]), 1.0)
    total = counts.sum()
    tv = 0.5 * np.abs(counts - counts.T).sum() / total
    assert tv < 0.02


def test_series_io_round_trip(tmp_path):
    s = Series(np.array([3, 0, 1, 7]))
    path = tmp_path / "series.txt"
    write_series(path, s)
    assert path.read_text().splitlines() == ["3", "0", "1", "7"]
    back = read_series(path)
    assert np.array_equal(back.values, s.values)


def test_read_series_csv_column(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("t,x\n0,4\n1,5\n2,6\n")
    assert np.array_equal(read_series(path).values, [4, 5, 6])


def test_read_series_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1\nfoo\n")
    with pytest.raises(ValueError):
        read_series(bad)
    frac = tmp_path / "frac.txt"
    frac.write_text("1\n2.5\n")
    with pytest.raises(ValueError):
        read_series(frac)
    with pytest.raises(OSError):
        read_series(tmp_path / "missing.txt")
