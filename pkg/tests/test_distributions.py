"""Distribution fitting: frozen closed-form values and seeded round trips."""

import math

import numpy as np
import pytest

from lobforge.distributions import (
    COEF_CAP,
    ConstantParams,
    CountModel,
    DegenerateDistribution,
    GammaParams,
    fit_beta_binomial,
    fit_beta_fractions,
    fit_gamma,
    fit_negative_binomial,
    logistic_fit,
    logistic_prob,
    sample_beta_binomial,
    sample_count,
    sample_interarrival,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# gamma


def test_fit_gamma_two_point_sample():
    # mean 2, sample variance 2 -> shape 2, scale 1
    params = fit_gamma([1.0, 3.0])
    assert params.shape == pytest.approx(2.0)
    assert params.scale == pytest.approx(1.0)


def test_fit_gamma_round_trip():
    g = rng(1)
    samples = g.gamma(2.0, 3e6, size=100_000)
    params = fit_gamma(samples)
    assert params.shape == pytest.approx(2.0, rel=0.05)
    assert params.scale == pytest.approx(3e6, rel=0.05)


def test_fit_gamma_degenerate():
    with pytest.raises(DegenerateDistribution):
        fit_gamma([5.0])
    with pytest.raises(DegenerateDistribution):
        fit_gamma([5.0, 5.0, 5.0])
    with pytest.raises(DegenerateDistribution):
        fit_gamma([1.0, -2.0])


def test_sample_interarrival_mean():
    g = rng(2)
    params = GammaParams(shape=1.0, scale=2e8)
    draws = [sample_interarrival(params, g) for _ in range(100_000)]
    assert np.mean(draws) == pytest.approx(2e8, rel=0.01)


def test_sample_interarrival_floor_and_validation():
    g = rng(3)
    assert sample_interarrival(GammaParams(2.0, 1e-9), g) == 1
    assert sample_interarrival(ConstantParams(0.4), g) == 1
    assert sample_interarrival(ConstantParams(7.9), g) == 7
    with pytest.raises(DegenerateDistribution):
        sample_interarrival(GammaParams(-1.0, 1.0), g)


# ---------------------------------------------------------------------------
# negative binomial


def test_fit_negative_binomial_round_trip():
    g = rng(4)
    samples = g.negative_binomial(4, 0.5, size=100_000)
    model = fit_negative_binomial(samples)
    assert model.family == "negbinom"
    assert model.r == pytest.approx(4.0, rel=0.05)
    assert model.p == pytest.approx(0.5, rel=0.05)


def test_fit_negative_binomial_poisson_fallback():
    g = rng(5)
    samples = g.poisson(3.0, size=50_000)
    model = fit_negative_binomial(samples)
    # Poisson variance hovers at the mean; either family must keep the mean
    assert model.mean == pytest.approx(3.0, rel=0.05)
    model = fit_negative_binomial([2, 2, 2, 2])
    assert model.family == "poisson" and model.mean == 2.0


def test_sample_count_matches_model():
    g = rng(6)
    nb = CountModel.negbinom(4.0, 0.5)
    draws = [sample_count(nb, g) for _ in range(100_000)]
    assert np.mean(draws) == pytest.approx(nb.mean, rel=0.02)
    po = CountModel.poisson(2.5)
    draws = [sample_count(po, g) for _ in range(50_000)]
    assert np.mean(draws) == pytest.approx(2.5, rel=0.03)
    assert sample_count(CountModel.poisson(0.0), g) == 0


def test_fit_negative_binomial_rejects_bad_input():
    with pytest.raises(DegenerateDistribution):
        fit_negative_binomial([])
    with pytest.raises(DegenerateDistribution):
        fit_negative_binomial([1, -1])


# ---------------------------------------------------------------------------
# beta-binomial


def test_beta_binomial_round_trip():
    g = rng(7)
    n = 12
    p = g.beta(2.0, 5.0, size=80_000)
    samples = g.binomial(n, p)
    alpha, beta = fit_beta_binomial(samples, n)
    assert alpha == pytest.approx(2.0, rel=0.1)
    assert beta == pytest.approx(5.0, rel=0.1)


def test_beta_binomial_binomial_data_pins_mean():
    g = rng(8)
    n = 20
    samples = g.binomial(n, 0.3, size=100_000)
    alpha, beta = fit_beta_binomial(samples, n)
    assert alpha > 1e3 and beta > 1e3  # binomial limit
    assert n * alpha / (alpha + beta) == pytest.approx(samples.mean(), rel=0.02)


def test_beta_binomial_edge_cases():
    assert fit_beta_binomial([], 10) == (1.0, 1.0)
    a, b = fit_beta_binomial([0, 0, 0], 10)
    assert a / (a + b) < 1e-4  # mass pinned at zero
    with pytest.raises(DegenerateDistribution):
        fit_beta_binomial([11], 10)
    # maximal overdispersion: all mass at the edges exceeds the feasible var
    a, b = fit_beta_binomial([0] * 50 + [10] * 50, 10)
    assert (a, b) == (1.0, 1.0)


def test_beta_fractions_round_trip():
    g = rng(9)
    u = g.beta(2.0, 6.0, size=60_000)
    alpha, beta = fit_beta_fractions(u)
    assert alpha == pytest.approx(2.0, rel=0.05)
    assert beta == pytest.approx(6.0, rel=0.05)


def test_sample_beta_binomial_support():
    g = rng(10)
    draws = [sample_beta_binomial(7, 2.0, 5.0, g) for _ in range(5_000)]
    assert min(draws) >= 0 and max(draws) <= 7
    assert sample_beta_binomial(0, 2.0, 5.0, g) == 0


# ---------------------------------------------------------------------------
# logistic


def test_logistic_independent_labels_recover_base_rate():
    g = rng(11)
    x = g.normal(size=40_000)
    y = (g.random(40_000) < 0.3).astype(float)
    coef = logistic_fit(x, y)
    base = y.mean()
    assert 1.0 / (1.0 + math.exp(-coef[0])) == pytest.approx(base, abs=1e-3)
    assert abs(coef[1]) < 0.05


def test_logistic_recovers_known_coefficients():
    g = rng(12)
    x = g.normal(size=(60_000, 2))
    z = -0.5 + 1.2 * x[:, 0] - 0.7 * x[:, 1]
    y = (g.random(60_000) < 1.0 / (1.0 + np.exp(-z))).astype(float)
    coef = logistic_fit(x, y)
    assert coef[0] == pytest.approx(-0.5, abs=0.05)
    assert coef[1] == pytest.approx(1.2, abs=0.05)
    assert coef[2] == pytest.approx(-0.7, abs=0.05)


def test_logistic_separable_data_caps():
    x = np.concatenate([np.full(100, -1.0), np.full(100, 1.0)])
    y = np.concatenate([np.zeros(100), np.ones(100)])
    coef = logistic_fit(x, y)
    assert np.max(np.abs(coef)) == COEF_CAP


def test_logistic_symmetric_data_zero_intercept():
    g = rng(13)
    x = g.normal(size=30_000)
    y = (g.random(30_000) < 1.0 / (1.0 + np.exp(-2.0 * x))).astype(float)
    coef = logistic_fit(x, y)
    assert abs(coef[0]) < 0.05
    assert coef[1] == pytest.approx(2.0, abs=0.1)


def test_logistic_prob_matches_formula():
    coef = np.array([0.5, -1.0, 2.0])
    z = 0.5 - 1.0 * 0.3 + 2.0 * -0.2
    assert logistic_prob(coef, (0.3, -0.2)) == pytest.approx(
        1.0 / (1.0 + math.exp(-z))
    )
