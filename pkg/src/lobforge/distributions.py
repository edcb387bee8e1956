"""Closed-form and moment-matched distribution fits.

Everything here is deliberately free of iterative optimisation except the
logistic fit, which runs a damped Newton solve.  Sample variance uses
ddof=1 throughout.  Count distributions follow the numpy negative-binomial
convention: mean r(1-p)/p, variance r(1-p)/p^2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

COEF_CAP = 20.0  # logistic coefficients clamp here on separable data
PSEUDO_MAX = 1e6  # alpha/beta ceiling at the binomial limit


class DegenerateDistribution(ValueError):
    """The sample carries no information to fit the requested family."""


def nearest_rank(values, p: float):
    """Nearest-rank percentile: smallest value covering p percent of the mass."""
    vals = np.sort(np.asarray(values))
    if vals.size == 0:
        raise DegenerateDistribution("percentile of an empty sample")
    if not 0.0 < p <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {p}")
    k = math.ceil(p / 100.0 * vals.size)
    return vals[max(k, 1) - 1]


# ---------------------------------------------------------------------------
# gamma inter-arrival times


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float


@dataclass(frozen=True)
class ConstantParams:
    value: float


def fit_gamma(samples) -> GammaParams:
    """Moment match: shape = mean^2/var, scale = var/mean."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise DegenerateDistribution("need at least two samples")
    if np.any(x <= 0):
        raise DegenerateDistribution("gamma samples must be positive")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if var <= 0.0:
        raise DegenerateDistribution("zero variance")
    return GammaParams(shape=mean * mean / var, scale=var / mean)


def sample_interarrival(params, rng: np.random.Generator) -> int:
    """Draw one inter-arrival time in integer nanoseconds, floored at 1."""
    if isinstance(params, ConstantParams):
        dt = params.value
    else:
        if params.shape <= 0 or params.scale <= 0:
            raise DegenerateDistribution(
                f"invalid gamma parameters ({params.shape}, {params.scale})"
            )
        dt = rng.gamma(params.shape, params.scale)
    return max(1, int(dt))


# ---------------------------------------------------------------------------
# counts: negative binomial with Poisson limit


@dataclass(frozen=True)
class CountModel:
    """Non-negative integer law: negative binomial, or Poisson fallback."""

    family: str  # "negbinom" | "poisson"
    r: float = 0.0
    p: float = 0.0
    mean: float = 0.0

    @classmethod
    def negbinom(cls, r: float, p: float) -> "CountModel":
        return cls("negbinom", r=r, p=p, mean=r * (1 - p) / p)

    @classmethod
    def poisson(cls, mean: float) -> "CountModel":
        return cls("poisson", mean=mean)

    @property
    def variance(self) -> float:
        if self.family == "poisson":
            return self.mean
        return self.r * (1 - self.p) / (self.p * self.p)


def fit_negative_binomial(samples) -> CountModel:
    """Moment match (r, p); variance at or below the mean degrades to Poisson."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise DegenerateDistribution("empty sample")
    if np.any(x < 0):
        raise DegenerateDistribution("counts must be non-negative")
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    if mean <= 0.0:
        return CountModel.poisson(0.0)
    if var <= mean:
        # no overdispersion to model
        return CountModel.poisson(mean)
    p = mean / var
    r = mean * mean / (var - mean)
    return CountModel.negbinom(r, p)


def sample_count(model: CountModel, rng: np.random.Generator) -> int:
    if model.family == "poisson":
        if model.mean <= 0.0:
            return 0
        return int(rng.poisson(model.mean))
    return int(rng.negative_binomial(model.r, model.p))


# ---------------------------------------------------------------------------
# beta-binomial


def fit_beta_binomial(samples, n: int) -> tuple[float, float]:
    """Moment-matched (alpha, beta) for counts over {0..n}.

    Underdispersed samples (at or below binomial variance) pin the fit to
    the binomial limit with large pseudo-counts preserving the mean;
    overdispersion beyond the feasible maximum falls back to the uniform
    (1, 1) prior.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0 or n < 1:
        return 1.0, 1.0
    if np.any((x < 0) | (x > n)):
        raise DegenerateDistribution(f"samples must lie in [0, {n}]")
    m1 = float(x.mean())
    if m1 <= 0.0 or m1 >= n:
        # all mass at a support edge: binomial limit at the boundary
        frac = min(max(m1 / n, 1e-6), 1.0 - 1e-6)
        return PSEUDO_MAX * frac, PSEUDO_MAX * (1.0 - frac)
    var = float(x.var(ddof=1)) if x.size > 1 else 0.0
    binom_var = m1 * (1.0 - m1 / n)
    if var <= binom_var:
        frac = m1 / n
        return PSEUDO_MAX * frac, PSEUDO_MAX * (1.0 - frac)
    m2 = float((x * x).mean())
    denom = n * (m2 / m1 - m1 - 1.0) + m1
    if denom == 0.0:
        frac = m1 / n
        return PSEUDO_MAX * frac, PSEUDO_MAX * (1.0 - frac)
    alpha = (n * m1 - m2) / denom
    beta = (n - m1) * (n - m2 / m1) / denom
    if alpha <= 0.0 or beta <= 0.0:
        return 1.0, 1.0
    return min(alpha, PSEUDO_MAX), min(beta, PSEUDO_MAX)


def fit_beta_fractions(fractions) -> tuple[float, float]:
    """Beta (alpha, beta) for values in [0, 1]; used for scaled queue positions."""
    u = np.asarray(fractions, dtype=float)
    if u.size == 0:
        return 1.0, 1.0
    if np.any((u < 0) | (u > 1)):
        raise DegenerateDistribution("fractions must lie in [0, 1]")
    mean = float(u.mean())
    var = float(u.var(ddof=1)) if u.size > 1 else 0.0
    mean = min(max(mean, 1e-6), 1.0 - 1e-6)
    cap = mean * (1.0 - mean)
    if var <= 0.0 or var >= cap:
        if var <= 0.0:
            return PSEUDO_MAX * mean, PSEUDO_MAX * (1.0 - mean)
        return 1.0, 1.0
    common = cap / var - 1.0
    alpha = mean * common
    beta = (1.0 - mean) * common
    return min(alpha, PSEUDO_MAX), min(beta, PSEUDO_MAX)


def sample_beta_binomial(
    n: int, alpha: float, beta: float, rng: np.random.Generator
) -> int:
    if n <= 0:
        return 0
    return int(rng.binomial(n, rng.beta(alpha, beta)))


# ---------------------------------------------------------------------------
# logistic regression


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def logistic_fit(features, labels, max_iter: int = 100, tol: float = 1e-8):
    """Binary logistic fit by damped Newton iteration.

    `features` is (n, k) without an intercept column; the returned array
    is (k+1,) with the intercept first.  Coefficients clamp to +/-20 when
    the data are separable, with a warning.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree on sample count")
    if X.shape[0] == 0:
        raise DegenerateDistribution("empty sample")
    Xb = np.hstack([np.ones((X.shape[0], 1)), X])
    k = Xb.shape[1]
    coef = np.zeros(k)

    def nll(c):
        z = Xb @ c
        # log(1 + exp(z)) - y*z, computed stably
        return float(np.sum(np.logaddexp(0.0, z) - y * z))

    loss = nll(coef)
    for _ in range(max_iter):
        z = Xb @ coef
        mu = sigmoid(z)
        grad = Xb.T @ (mu - y)
        if float(np.max(np.abs(grad))) < tol:
            break
        w = mu * (1.0 - mu)
        hess = Xb.T @ (Xb * w[:, None]) + 1e-10 * np.eye(k)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        for _ in range(30):
            trial = coef - scale * step
            trial_loss = nll(trial)
            if trial_loss <= loss:
                coef, loss = trial, trial_loss
                break
            scale *= 0.5
        else:
            break
        if np.any(np.abs(coef) > COEF_CAP):
            log.warning("logistic fit hit the coefficient cap; data separable")
            coef = np.clip(coef, -COEF_CAP, COEF_CAP)
            break
    return coef


def logistic_prob(coef, features) -> float:
    """P(label=1) for one observation under fitted coefficients."""
    z = coef[0]
    for c, x in zip(coef[1:], features):
        z += c * x
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)
