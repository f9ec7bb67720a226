"""Probability-proportional-to-size subsampling of LOO contributions.

Observations are drawn with replacement with probabilities ``pi_tilde``
proportional to ``-log p(y_i | y)`` (or a cheap plug-in version of it) and the
drawn contributions are inverse-probability weighted (Hansen-Hurwitz).

Notation used below, for the ``m`` drawn contributions ``x_j`` with selection
probabilities ``pi_j`` and ``t_j = x_j / pi_j``:

* average-scale estimate:   ``elpd_avg_hat = mean(t) / n``
* subsampling variance:     ``sum_j (t_j - mean(t))**2 / (n**2 m (m - 1))``
* pointwise variance:       ``sum_j x_j**2 / pi_j / (n m)
                              + sum_j (t_j - mean(t))**2 / (n**2 m (m - 1))
                              - (sum_j t_j / (n m))**2``

The subsampling variance is on the average scale; multiply its square root by
``n`` for a sum-scale standard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .estimators import ElpdReport, PointwiseLogLik, psis_loo_pointwise
from .model import Dataset, ModelSpec, log_likelihood_pointwise
from .psis import KHAT_THRESHOLD


@dataclass(frozen=True)
class SubsamplePlan:
    pi_tilde: np.ndarray
    indices: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        pi = np.asarray(self.pi_tilde, dtype=float).reshape(-1)
        idx = np.asarray(self.indices, dtype=int).reshape(-1)
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi_tilde must be nonnegative and sum to one")
        if idx.size == 0:
            raise ValueError("a plan needs at least one drawn index")
        if idx.min() < 0 or idx.max() >= pi.shape[0]:
            raise ValueError("drawn index out of range")
        if np.any(pi[idx] <= 0):
            raise ValueError("drawn an observation with zero selection probability")
        pi.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "pi_tilde", pi)
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return self.indices.shape[0]

    @property
    def n(self) -> int:
        return self.pi_tilde.shape[0]

    def same_as(self, other: "SubsamplePlan") -> bool:
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.pi_tilde, other.pi_tilde
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "m": self.m,
            "n": self.n,
            "indices": self.indices.tolist(),
            "pi_tilde": [float(p) for p in self.pi_tilde],
        }


@dataclass(frozen=True)
class SubsampledElpd:
    elpd_avg_hat: float
    elpd_sum_hat: float
    subsampling_variance: Optional[float]
    sigma_loo_sq_hat: Optional[float]
    m: int
    n: int
    clamped: bool = False


def compute_pps_probabilities(log_densities) -> np.ndarray:
    """Normalized selection probabilities ``pi_i = -log p_i / sum_j(-log p_j)``.

    Every entry must be a strictly negative log probability.
    """
    x = np.asarray(log_densities, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("need at least one observation")
    if not np.all(np.isfinite(x)):
        raise ValueError("log densities must be finite")
    if np.any(x >= 0):
        bad = int(np.flatnonzero(x >= 0)[0])
        raise ValueError(f"log density at observation {bad} is {x[bad]}, must be < 0")
    size = -x
    return size / size.sum()


def pps_probabilities_from_point(theta, model: ModelSpec, data: Dataset) -> np.ndarray:
    """Size measure from the log-likelihood at a point estimate (e.g. Laplace mean)."""
    return compute_pps_probabilities(log_likelihood_pointwise(theta, model, data))


def pps_probabilities_from_lppd(loglik: PointwiseLogLik) -> np.ndarray:
    """Size measure from the full-posterior log predictive density."""
    return compute_pps_probabilities(logsumexp(loglik.values, axis=1) - np.log(loglik.S))


def draw_subsample(pi_tilde, m: int, seed=0) -> SubsamplePlan:
    """Draw ``m`` observation indices i.i.d. from ``pi_tilde`` (with replacement)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    pi = np.asarray(pi_tilde, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.choice(pi.shape[0], size=int(m), replace=True, p=pi)
    return SubsamplePlan(pi, idx, seed if isinstance(seed, (int, np.integer)) else None)


def _weighted_terms(plan: SubsamplePlan, pointwise_hat):
    x = np.asarray(pointwise_hat, dtype=float).reshape(-1)
    if x.shape[0] != plan.m:
        raise ValueError(f"{x.shape[0]} contributions for a plan with m={plan.m}")
    return x, x / plan.pi_tilde[plan.indices]


def subsampling_variance(plan: SubsamplePlan, pointwise_hat, elpd_avg_hat: float):
    """Variance of the average-scale subsampled estimate; ``None`` when m < 2."""
    _, t = _weighted_terms(plan, pointwise_hat)
    m, n = plan.m, plan.n
    if m < 2:
        return None
    return float(np.sum((t - n * elpd_avg_hat) ** 2) / (n * n * m * (m - 1)))


def sigma_loo_sq_subsampled(plan: SubsamplePlan, pointwise_hat, clamp: bool = True):
    """Estimate of the pointwise variance of LOO contributions from the subsample.

    The raw estimate is design-unbiased for the population variance of the
    contributions. Returns ``(value, clamped)``; with ``clamp`` negative
    estimates (possible for small ``m``) become zero and are flagged.
    ``(None, False)`` when m < 2.
    """
    x, t = _weighted_terms(plan, pointwise_hat)
    m, n = plan.m, plan.n
    if m < 2:
        return None, False
    first = np.sum(x * x / plan.pi_tilde[plan.indices]) / (n * m)
    second = np.sum((t - t.mean()) ** 2) / (n * n * m * (m - 1))
    third = (np.sum(t) / (n * m)) ** 2
    value = float(first + second - third)
    if clamp and value < 0:
        return 0.0, True
    return value, False


def subsampled_elpd(plan: SubsamplePlan, pointwise_hat) -> SubsampledElpd:
    """Hansen-Hurwitz ELPD estimate with its subsampling and pointwise variances."""
    _, t = _weighted_terms(plan, pointwise_hat)
    n = plan.n
    avg = float(np.mean(t) / n)
    var = subsampling_variance(plan, pointwise_hat, avg)
    sig, clamped = sigma_loo_sq_subsampled(plan, pointwise_hat)
    return SubsampledElpd(avg, n * avg, var, sig, plan.m, n, clamped)


def elpd_psis_loo_subsampled(
    loglik: PointwiseLogLik,
    plan: SubsamplePlan,
    log_p_full=None,
    log_q=None,
    refit=None,
    model: str = "",
) -> ElpdReport:
    """PSIS-LOO evaluated only on the subsampled observations.

    Each distinct drawn observation is smoothed once; duplicates reuse the
    value. Contributions with ``khat > 0.7`` are replaced by ``refit(i)`` when
    a callback is given.
    """
    if plan.n != loglik.n:
        raise ValueError(f"plan covers {plan.n} observations, log-likelihood has {loglik.n}")
    uniq, inverse = np.unique(plan.indices, return_inverse=True)
    vals, khat, flags = psis_loo_pointwise(loglik, log_p_full, log_q, rows=uniq)
    n_refits = 0
    if refit is not None:
        for j in np.flatnonzero(khat > KHAT_THRESHOLD):
            vals[j] = refit(int(uniq[j]))
            n_refits += 1
    pointwise = vals[inverse]
    est = subsampled_elpd(plan, pointwise)
    notes = [f"observation {i}: {f}" for i, f in flags]
    if est.clamped:
        notes.append("negative pointwise-variance estimate clamped to 0")
    if est.subsampling_variance is None:
        notes.append("subsampling variance undefined for m = 1")
    return ElpdReport(
        estimator="psis_loo_subsampled",
        elpd_sum=est.elpd_sum_hat,
        elpd_avg=est.elpd_avg_hat,
        se_loo=float("nan") if est.sigma_loo_sq_hat is None else float(np.sqrt(est.n * est.sigma_loo_sq_hat)),
        pointwise=pointwise,
        n=est.n,
        observation_index=plan.indices,
        khat=khat[inverse],
        subsampling_se=None if est.subsampling_variance is None else float(est.n * np.sqrt(est.subsampling_variance)),
        n_refits=n_refits,
        model=model,
        plan=plan,
        flags=tuple(notes),
    )
