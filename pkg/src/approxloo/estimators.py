"""Full-data ELPD estimators and pairwise model comparison.

Every estimator returns an :class:`ElpdReport` on both scales: ``elpd_sum`` is
the sum of pointwise contributions and ``elpd_avg = elpd_sum / n``. Standard
errors use the population variance of the pointwise contributions,
``se_loo = sqrt(n * var(pointwise))``, on the sum scale.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, DimensionMismatchError
from .inference import McmcConfig, PosteriorDraws, sample_posterior_mcmc
from .model import Dataset, ModelSpec, log_likelihood_matrix, log_likelihood_pointwise
from .psis import (
    KHAT_THRESHOLD,
    corrected_importance_log_ratios,
    plain_importance_log_ratios,
    smooth_weights,
)

ESTIMATORS = ("loo_exact", "kfold", "is_loo", "psis_loo", "waic", "dic", "psis_loo_subsampled")
PROVENANCES = ("full-posterior-mcmc", "laplace-sample")


@dataclass(frozen=True)
class PointwiseLogLik:
    """``values[i, s] = log p(y_i | theta_s)``."""

    values: np.ndarray
    provenance: str = "full-posterior-mcmc"

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(vals)):
            raise ValueError("pointwise log-likelihood must be finite")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_draws(cls, draws: PosteriorDraws, model: ModelSpec, data: Dataset):
        prov = "full-posterior-mcmc" if draws.method_tag == "mcmc" else "laplace-sample"
        return cls(log_likelihood_matrix(draws.draws, model, data), prov)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def S(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ElpdReport:
    estimator: str
    elpd_sum: float
    elpd_avg: float
    se_loo: float
    pointwise: np.ndarray
    n: int
    observation_index: np.ndarray
    khat: Optional[np.ndarray] = None
    subsampling_se: Optional[float] = None
    n_refits: int = 0
    model: str = ""
    penalty: Optional[float] = None
    pointwise_mcse: Optional[np.ndarray] = None
    plan: object = None
    flags: tuple = field(default_factory=tuple)

    @property
    def n_high_khat(self) -> int:
        return 0 if self.khat is None else int(np.sum(self.khat > KHAT_THRESHOLD))


@dataclass(frozen=True)
class ComparisonRow:
    model_a: str
    model_b: str
    elpd_diff: float
    se_diff: float
    subsampling_se_diff: Optional[float] = None
    estimator: str = ""


def _report(estimator, pointwise, *, model="", **extra) -> ElpdReport:
    pointwise = np.asarray(pointwise, dtype=float)
    n = pointwise.shape[0]
    total = float(np.sum(pointwise))
    se = float(np.sqrt(n * np.var(pointwise)))
    return ElpdReport(
        estimator=estimator,
        elpd_sum=total,
        elpd_avg=total / n,
        se_loo=se,
        pointwise=pointwise,
        n=n,
        observation_index=np.arange(n),
        model=model,
        **extra,
    )


def _require_full_posterior(loglik: PointwiseLogLik, name: str):
    if loglik.provenance != "full-posterior-mcmc":
        raise ValueError(f"{name} needs full-posterior draws, got {loglik.provenance}")


def _log_mean_exp_with_mcse(ll_row, chains: int, n_batches: int = 10):
    """log(mean(exp(ll))) and its Monte Carlo SE via batch means within chains."""
    S = ll_row.shape[0]
    value = float(logsumexp(ll_row) - np.log(S))
    per_chain = S // chains
    n_b = max(1, min(n_batches, per_chain // 10))
    size = per_chain // n_b
    if size == 0:
        return value, np.nan
    shaped = ll_row[: chains * per_chain].reshape(chains, per_chain)[:, : n_b * size]
    batches = np.exp(logsumexp(shaped.reshape(chains * n_b, size), axis=1) - np.log(size) - value)
    if batches.shape[0] < 2:
        return value, np.nan
    return value, float(np.std(batches, ddof=1) / np.sqrt(batches.shape[0]))


def _child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _predict_held_out(model, train: Dataset, test: Dataset, config: McmcConfig):
    draws, report = sample_posterior_mcmc(model, train, config)
    ll = log_likelihood_matrix(draws.draws, model, test)
    return [_log_mean_exp_with_mcse(row, draws.chains) for row in ll]


def loo_refit_pointwise(model: ModelSpec, data: Dataset, i: int, config: McmcConfig = McmcConfig()):
    """Exact ``log p(y_i | y_{-i})`` by refitting without observation ``i``.

    Returns ``(value, mcse)``.
    """
    cfg = replace(config, seed=_child_seed(config.seed, 0, i))
    try:
        (out,) = _predict_held_out(model, data.drop([i]), data.subset([i]), cfg)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"refit without observation {i} failed: {exc}", {**exc.diagnostics, "observation": i}
        ) from exc
    return out


def make_refit(model: ModelSpec, data: Dataset, config: McmcConfig = McmcConfig()):
    """Refit callback for :func:`elpd_psis_loo`'s fallback."""
    return lambda i: loo_refit_pointwise(model, data, i, config)[0]


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def elpd_loo_exact(
    model: ModelSpec, data: Dataset, config: McmcConfig = McmcConfig(), n_jobs: int = 1
) -> ElpdReport:
    """Brute-force leave-one-out: ``n`` posterior refits."""
    if data.n < 2:
        raise ValueError("exact LOO needs at least two observations")
    res = _map(lambda i: loo_refit_pointwise(model, data, i, config), range(data.n), n_jobs)
    vals = np.array([r[0] for r in res])
    mcse = np.array([r[1] for r in res])
    return _report("loo_exact", vals, model=model.name, n_refits=data.n, pointwise_mcse=mcse)


def kfold_assignment(n: int, K: int, seed) -> np.ndarray:
    """Fold label per observation; fold sizes differ by at most one."""
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % K
    return folds


def elpd_kfold(
    model: ModelSpec,
    data: Dataset,
    K: int = 10,
    config: McmcConfig = McmcConfig(),
    seed: int = 0,
    n_jobs: int = 1,
) -> ElpdReport:
    """K-fold cross-validation with seeded random folds."""
    folds = kfold_assignment(data.n, K, seed)

    def run(k):
        test = np.flatnonzero(folds == k)
        train = np.flatnonzero(folds != k)
        if train.size == 0:
            raise ValueError(f"fold {k} leaves no training rows")
        cfg = replace(config, seed=_child_seed(config.seed, 1, k))
        try:
            return test, _predict_held_out(model, data.subset(train), data.subset(test), cfg)
        except ConvergenceError as exc:
            raise ConvergenceError(f"refit for fold {k} failed: {exc}", exc.diagnostics) from exc

    vals = np.empty(data.n)
    mcse = np.empty(data.n)
    for test, out in _map(run, range(K), n_jobs):
        vals[test] = [o[0] for o in out]
        mcse[test] = [o[1] for o in out]
    return _report("kfold", vals, model=model.name, n_refits=K, pointwise_mcse=mcse)


def elpd_is_loo(loglik: PointwiseLogLik, model: str = "") -> ElpdReport:
    """Importance-sampling LOO with raw ratios ``1 / p(y_i | theta_s)``.

    With raw ratios the self-normalized estimate collapses to the harmonic
    mean of the pointwise likelihoods.
    """
    _require_full_posterior(loglik, "IS-LOO")
    ll = loglik.values
    vals = -(logsumexp(-ll, axis=1) - np.log(loglik.S))
    return _report("is_loo", vals, model=model)


def psis_loo_pointwise(
    loglik: PointwiseLogLik,
    log_p_full=None,
    log_q=None,
    rows: Optional[Sequence[int]] = None,
    return_weights: bool = False,
):
    """PSIS estimate of ``log p(y_i | y_{-i})`` for the requested rows.

    Returns ``(pointwise, khat, flags)`` and, with ``return_weights``, also the
    normalized smoothed log weights as an array of shape (len(rows), S).
    """
    if (log_q is None) != (log_p_full is None):
        raise ValueError("log_p_full and log_q must be given together")
    ll = loglik.values
    rows = np.arange(loglik.n) if rows is None else np.asarray(rows, dtype=int)
    if log_q is not None:
        log_p_full = np.asarray(log_p_full, dtype=float)
        log_q = np.asarray(log_q, dtype=float)
        if log_p_full.shape != (loglik.S,) or log_q.shape != (loglik.S,):
            raise DimensionMismatchError("log_p_full and log_q must have one entry per draw")
    vals = np.empty(rows.shape[0])
    khat = np.empty(rows.shape[0])
    flags = []
    weights = np.empty((rows.shape[0], loglik.S)) if return_weights else None
    for j, i in enumerate(rows):
        row = ll[i]
        if log_q is None:
            ratios = plain_importance_log_ratios(row)
        else:
            ratios = corrected_importance_log_ratios(row, log_p_full, log_q)
        sw = smooth_weights(ratios)
        lw = sw.normalized()
        vals[j] = logsumexp(lw + row)
        khat[j] = sw.khat
        if sw.flag:
            flags.append((int(i), sw.flag))
        if return_weights:
            weights[j] = lw
    if return_weights:
        return vals, khat, flags, weights
    return vals, khat, flags


def elpd_psis_loo(
    loglik: PointwiseLogLik,
    log_p_full=None,
    log_q=None,
    refit: Optional[Callable[[int], float]] = None,
    model: str = "",
) -> ElpdReport:
    """Pareto-smoothed importance-sampling LOO.

    Plain mode (no ``log_q``) expects full-posterior draws. Passing the
    full-data log posterior and the approximation's log density at each draw
    switches to approximation-corrected ratios. Observations with
    ``khat > 0.7`` are recomputed with ``refit(i)`` when a callback is given.
    """
    if log_q is None:
        _require_full_posterior(loglik, "plain PSIS-LOO")
    vals, khat, flags = psis_loo_pointwise(loglik, log_p_full, log_q)
    n_refits = 0
    if refit is not None:
        for i in np.flatnonzero(khat > KHAT_THRESHOLD):
            vals[i] = refit(int(i))
            n_refits += 1
    return _report(
        "psis_loo",
        vals,
        model=model,
        khat=khat,
        n_refits=n_refits,
        flags=tuple(f"observation {i}: {f}" for i, f in flags),
    )


def waic(loglik: PointwiseLogLik, model: str = "") -> ElpdReport:
    """WAIC on the ELPD scale: ``lppd - V`` with ``V`` the summed draw variance."""
    _require_full_posterior(loglik, "WAIC")
    ll = loglik.values
    lppd = logsumexp(ll, axis=1) - np.log(loglik.S)
    var = np.var(ll, axis=1, ddof=1) if loglik.S > 1 else np.zeros(loglik.n)
    return _report("waic", lppd - var, model=model, penalty=float(np.sum(var)))


def dic_effective_parameters(loglik: PointwiseLogLik, loglik_at_mean) -> float:
    """``p_e = 2 * sum_i [log p(y_i | theta_bar) - mean_s log p(y_i | theta_s)]``."""
    return float(2.0 * np.sum(np.asarray(loglik_at_mean) - loglik.values.mean(axis=1)))


def dic(loglik_at_mean, p_e: float, model: str = "") -> ElpdReport:
    """DIC on the ELPD scale: plug-in log-likelihood at the posterior mean minus ``p_e``."""
    ll_mean = np.asarray(loglik_at_mean, dtype=float)
    n = ll_mean.shape[0]
    return _report("dic", ll_mean - p_e / n, model=model, penalty=float(p_e))


def dic_from_draws(draws: PosteriorDraws, model: ModelSpec, data: Dataset) -> ElpdReport:
    loglik = PointwiseLogLik.from_draws(draws, model, data)
    _require_full_posterior(loglik, "DIC")
    ll_mean = log_likelihood_pointwise(draws.mean(), model, data)
    return dic(ll_mean, dic_effective_parameters(loglik, ll_mean), model=model.name)


def _diff(a: ElpdReport, b: ElpdReport):
    if a.plan is not None or b.plan is not None:
        from .subsampling import subsampled_elpd

        if a.plan is None or b.plan is None or not a.plan.same_as(b.plan):
            raise ValueError("subsampled reports can only be compared on an identical plan")
        est = subsampled_elpd(a.plan, a.pointwise - b.pointwise)
        sub_se = None if est.subsampling_variance is None else est.n * np.sqrt(est.subsampling_variance)
        se = np.nan if est.sigma_loo_sq_hat is None else np.sqrt(est.n * est.sigma_loo_sq_hat)
        return est.elpd_sum_hat, float(se), sub_se
    if a.n != b.n or not np.array_equal(a.observation_index, b.observation_index):
        raise ValueError("reports cover different observations")
    d = a.pointwise - b.pointwise
    return float(np.sum(d)), float(np.sqrt(d.shape[0] * np.var(d))), None


def compare_models(reports: Sequence[ElpdReport], names: Optional[Sequence[str]] = None):
    """ELPD differences for every ordered pair of distinct reports.

    ``elpd_diff`` is ``a - b`` on the sum scale with
    ``se_diff = sqrt(n * var_i(a_i - b_i))``. Subsampled reports must share
    the same :class:`~approxloo.subsampling.SubsamplePlan`; their difference is
    estimated from the subsample and also carries a subsampling SE.
    """
    names = list(names) if names is not None else [
        r.model or f"model_{j}" for j, r in enumerate(reports)
    ]
    if len(names) != len(reports):
        raise ValueError("one name per report required")
    rows = []
    for ia, ib in itertools.permutations(range(len(reports)), 2):
        a, b = reports[ia], reports[ib]
        diff, se, sub_se = _diff(a, b)
        est = a.estimator if a.estimator == b.estimator else f"{a.estimator}/{b.estimator}"
        rows.append(ComparisonRow(names[ia], names[ib], diff, se, sub_se, est))
    return rows
