"""Pareto-smoothed importance sampling.

All weights are handled on the log scale. ``smooth_weights`` fits a generalized
Pareto distribution (GPD) to the largest raw ratios, replaces them by fitted
quantiles and truncates at the largest raw ratio. The fitted shape ``khat``
doubles as the reliability diagnostic: above ``KHAT_THRESHOLD`` the smoothed
estimate should not be trusted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatchError, GpdFitError, NonFiniteError

KHAT_THRESHOLD = 0.7
MIN_DRAWS = 25
MIN_TAIL = 5


@dataclass(frozen=True)
class GpdFit:
    khat: float
    sigma: float


@dataclass(frozen=True)
class SmoothedWeights:
    """Smoothed log weights for one observation (not normalized).

    ``flag`` is ``None`` for a regular fit, otherwise one of
    ``"too_few_draws"``, ``"degenerate_tail"`` or ``"fit_failed"``; flagged
    results carry ``khat = inf`` and unsmoothed weights.
    """

    log_weights: np.ndarray
    khat: float
    tail_size: int
    raw_max: float
    flag: Optional[str] = None

    def normalized(self) -> np.ndarray:
        """Log weights normalized to sum to one."""
        return self.log_weights - logsumexp(self.log_weights)


def tail_length(S: int) -> int:
    """Number of largest ratios replaced by GPD quantiles."""
    return int(math.ceil(min(0.2 * S, 3.0 * math.sqrt(S))))


def fit_generalized_pareto(exceedances) -> GpdFit:
    """Fit a GPD to threshold exceedances.

    Uses the Zhang & Stephens (2009) empirical-Bayes estimator: the profile
    likelihood in ``b = -k / sigma`` is integrated over a fixed quadrature grid
    and the posterior mean of ``b`` gives ``k`` and ``sigma`` in closed form.
    A weak prior pulls ``k`` towards 0.5 with the weight of 10 observations,
    which only matters for short tails.

    Parameters
    ----------
    exceedances : array_like
        Nonnegative amounts by which the tail values exceed the threshold.
        Order does not matter.

    Returns
    -------
    GpdFit
        ``khat`` in the usual parameterization (positive means heavy tail).
    """
    x = np.sort(np.asarray(exceedances, dtype=float).reshape(-1))
    n = x.shape[0]
    if n < MIN_TAIL:
        raise GpdFitError(f"need at least {MIN_TAIL} exceedances, got {n}")
    if not np.all(np.isfinite(x)):
        raise GpdFitError("exceedances must be finite")
    if x[0] < 0:
        raise GpdFitError("exceedances must be nonnegative")
    if x[-1] <= 0 or x[-1] == x[0]:
        raise GpdFitError("zero-variance tail: all exceedances are equal")

    grid_size = 30 + int(math.sqrt(n))
    quartile = x[int(n / 4 + 0.5) - 1]
    if quartile <= 0:
        quartile = x[x > 0][0]
    j = np.arange(1, grid_size + 1, dtype=float)
    b = 1.0 / x[-1] + (1.0 - np.sqrt(grid_size / (j - 0.5))) / (3.0 * quartile)
    k = np.mean(np.log1p(-b[:, None] * x[None, :]), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prof = n * (np.log(-b / k) - k - 1.0)
    ok = np.isfinite(prof)
    if not np.any(ok):
        raise GpdFitError("profile likelihood is not finite anywhere on the grid")
    b, prof = b[ok], prof[ok]
    weights = np.exp(prof - logsumexp(prof))
    b_hat = float(np.sum(weights * b))
    k_hat = float(np.mean(np.log1p(-b_hat * x)))
    if b_hat == 0.0:
        sigma = float(np.mean(x))
    else:
        sigma = -k_hat / b_hat
    k_hat = (n * k_hat + 10 * 0.5) / (n + 10)
    if not (np.isfinite(k_hat) and np.isfinite(sigma) and sigma > 0):
        raise GpdFitError(f"invalid GPD estimate k={k_hat}, sigma={sigma}")
    return GpdFit(k_hat, sigma)


def gpd_quantile(p, khat: float, sigma: float) -> np.ndarray:
    """Inverse CDF of GPD(khat, sigma) with location 0."""
    p = np.asarray(p, dtype=float)
    if abs(khat) < 1e-12:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-khat * np.log1p(-p)) / khat


def smooth_weights(raw_log_ratios) -> SmoothedWeights:
    """Pareto-smooth one vector of raw log importance ratios.

    The ``M = ceil(min(0.2 S, 3 sqrt(S)))`` largest values are replaced by GPD
    quantiles at plotting positions ``(j - 0.5) / M``; the GPD is fit to their
    exceedances over the next-largest value. Smoothed values are capped at the
    raw maximum and every other entry is returned unchanged.
    """
    lr = np.asarray(raw_log_ratios, dtype=float).reshape(-1)
    S = lr.shape[0]
    if not np.all(np.isfinite(lr)):
        bad = int(np.flatnonzero(~np.isfinite(lr))[0])
        raise NonFiniteError(f"non-finite log ratio at draw {bad}", index=bad)
    raw_max = float(lr.max()) if S else -np.inf
    M = tail_length(S)
    if S < MIN_DRAWS:
        warnings.warn(f"only {S} draws; importance ratios are not smoothed", stacklevel=2)
        return SmoothedWeights(lr.copy(), np.inf, M, raw_max, "too_few_draws")

    order = np.argsort(lr, kind="stable")
    tail_idx = order[S - M :]
    cutoff = lr[order[S - M - 1]]
    tail = lr[tail_idx]
    exceed = np.exp(tail - raw_max) - np.exp(cutoff - raw_max)
    if np.all(exceed == exceed[0]):
        return SmoothedWeights(lr.copy(), np.inf, M, raw_max, "degenerate_tail")
    try:
        fit = fit_generalized_pareto(np.maximum(exceed, 0.0))
    except GpdFitError:
        return SmoothedWeights(lr.copy(), np.inf, M, raw_max, "fit_failed")

    probs = (np.arange(1, M + 1) - 0.5) / M
    q = gpd_quantile(probs, fit.khat, fit.sigma)
    smoothed = np.log(q + np.exp(cutoff - raw_max)) + raw_max
    out = lr.copy()
    out[tail_idx] = np.minimum(smoothed, raw_max)
    return SmoothedWeights(out, fit.khat, M, raw_max)


def plain_importance_log_ratios(loglik_row) -> np.ndarray:
    """Log ratios for leaving one observation out of full-posterior draws."""
    return -np.asarray(loglik_row, dtype=float)


def corrected_importance_log_ratios(loglik_row, log_p_full, log_q) -> np.ndarray:
    """Log ratios for leave-one-out from draws of a posterior approximation.

    ``log_p_full`` is the unnormalized full-data log posterior and ``log_q``
    the approximation's log density, both at the same draws. When the two are
    equal this returns exactly ``plain_importance_log_ratios(loglik_row)``.
    """
    ll = np.asarray(loglik_row, dtype=float)
    lp = np.asarray(log_p_full, dtype=float)
    lq = np.asarray(log_q, dtype=float)
    if not (ll.shape == lp.shape == lq.shape):
        raise DimensionMismatchError(
            f"shape mismatch: loglik {ll.shape}, log_p_full {lp.shape}, log_q {lq.shape}"
        )
    if not np.all(np.isfinite(lq)):
        bad = int(np.flatnonzero(~np.isfinite(lq))[0])
        raise NonFiniteError(f"approximation density is not finite at draw {bad}", index=bad)
    return -ll + (lp - lq)


def self_normalized_log_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    return lw - logsumexp(lw)
