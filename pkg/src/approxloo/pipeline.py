"""End-to-end workflow: ingest, fit, estimate, subsample, compare, check calibration."""

from __future__ import annotations

import platform
import time
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy
from scipy.special import logsumexp

from .errors import ConfigError
from .estimators import (
    PointwiseLogLik,
    _child_seed,
    compare_models,
    dic_from_draws,
    elpd_is_loo,
    elpd_kfold,
    elpd_loo_exact,
    elpd_psis_loo,
    make_refit,
    psis_loo_pointwise,
    waic,
)
from .inference import (
    McmcConfig,
    laplace_approximate,
    laplace_log_density,
    sample_from_laplace,
    sample_posterior_mcmc,
)
from .io import RunConfig, ingest_csv
from .model import ModelSpec, log_likelihood_pointwise, log_posterior_batch
from .ppc import LooPitResult, ReferenceBands, kde_unit_interval, loo_pit, uniform_reference_bands
from .psis import KHAT_THRESHOLD
from .subsampling import compute_pps_probabilities, draw_subsample, elpd_psis_loo_subsampled

# keys for deriving independent per-stage seeds from the global seed
_SEED_FIT, _SEED_LOO, _SEED_KFOLD, _SEED_PLAN, _SEED_PIT, _SEED_BANDS = range(6)
FULL_POSTERIOR_ONLY = ("is_loo", "waic", "dic")


@dataclass
class PitSummary:
    result: LooPitResult
    grid: np.ndarray
    density: np.ndarray


@dataclass
class FittedModel:
    spec: ModelSpec
    loglik: PointwiseLogLik
    draws: object
    log_p_full: Optional[np.ndarray] = None
    log_q: Optional[np.ndarray] = None
    laplace: object = None
    convergence: Optional[dict] = None


@dataclass
class ReportBundle:
    config: RunConfig
    reports: dict = field(default_factory=dict)
    comparisons: dict = field(default_factory=dict)
    khat: dict = field(default_factory=dict)
    loo_pit: dict = field(default_factory=dict)
    reference_bands: Optional[ReferenceBands] = None
    timings: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    plan: object = None
    n: Optional[int] = None
    dropped_rows: Optional[int] = None
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    def manifest(self) -> dict:
        from . import __version__

        return {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "versions": {
                "approxloo": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "data": {"n": self.n, "dropped_rows": self.dropped_rows},
            "timings_seconds": self.timings,
            "convergence": self.convergence,
            "warnings": list(self.warnings),
            "subsample_plan": None if self.plan is None else self.plan.to_dict(),
            "loo_pit": {
                name: {
                    "ks_statistic": s.result.ks_statistic,
                    "ks_pvalue": s.result.ks_pvalue,
                    "verdict": s.result.ks_pvalue_band,
                    "randomized": s.result.randomized,
                }
                for name, s in self.loo_pit.items()
            },
            "status": "ok" if self.failed_stage is None else "failed",
            "failed_stage": self.failed_stage,
            "error": self.error,
        }


class PipelineError(Exception):
    """A stage of :func:`run_pipeline` failed; ``bundle`` holds what was finished."""

    def __init__(self, stage: str, cause: BaseException, bundle: ReportBundle):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.bundle = bundle


@contextmanager
def _stage(bundle: ReportBundle, name: str):
    start = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        bundle.failed_stage = name
        bundle.error = f"{type(exc).__name__}: {exc}"
        raise PipelineError(name, exc, bundle) from exc
    finally:
        bundle.timings[name] = bundle.timings.get(name, 0.0) + time.perf_counter() - start


def check_config(config: RunConfig):
    config.validate()
    if config.inference == "laplace":
        bad = [e for e in config.estimators if e in FULL_POSTERIOR_ONLY]
        if bad:
            raise ConfigError(f"{bad} need full-posterior MCMC draws; use inference = mcmc")


def _model_key(spec: ModelSpec, data) -> int:
    """Seed key that depends only on the model's content, not its position or name.

    Identical model definitions therefore get identical draws and compare to
    exactly zero.
    """
    columns = tuple(data.names[i] for i in spec.predictor_indices)
    text = repr((columns, float(spec.prior_location), float(spec.prior_scale)))
    return zlib.crc32(text.encode("utf-8"))


def _mcmc_config(config: RunConfig, seed: int) -> McmcConfig:
    return McmcConfig(
        chains=config.chains, iterations=config.iterations, warmup=config.warmup, seed=seed
    )


def _fit(spec: ModelSpec, data, config: RunConfig) -> FittedModel:
    seed = _child_seed(config.seed, _SEED_FIT, _model_key(spec, data))
    if config.inference == "mcmc":
        draws, report = sample_posterior_mcmc(spec, data, _mcmc_config(config, seed))
        conv = {
            "rhat": [float(r) for r in report.rhat],
            "max_rhat": float(report.max_rhat),
            "acceptance_rate": [float(a) for a in report.acceptance_rate],
        }
        return FittedModel(spec, PointwiseLogLik.from_draws(draws, spec, data), draws, convergence=conv)
    q = laplace_approximate(spec, data)
    draws = sample_from_laplace(q, config.laplace_draws, seed)
    return FittedModel(
        spec,
        PointwiseLogLik.from_draws(draws, spec, data),
        draws,
        log_p_full=log_posterior_batch(draws.draws, spec, data),
        log_q=laplace_log_density(q, draws.draws),
        laplace=q,
        convergence={"newton_iterations": q.n_iter, "grad_norm": q.grad_norm},
    )


def _size_log_densities(fitted: FittedModel, data, source: str) -> np.ndarray:
    """Per-observation log density whose negative is the PPS size measure."""
    if source == "lppd":
        ll = fitted.loglik
        return logsumexp(ll.values, axis=1) - np.log(ll.S)
    q = fitted.laplace if fitted.laplace is not None else laplace_approximate(fitted.spec, data)
    return log_likelihood_pointwise(q.mean, fitted.spec, data)


def _pps_probabilities(fitted, data, config: RunConfig):
    """Selection probabilities shared by every model of the run.

    With ``pps_model = average`` the size measure is the mean over models of
    ``-log p(y_i | ...)``; otherwise the named model's size measure is used.
    """
    source = config.pps_source
    if source == "auto":
        source = "laplace" if config.inference == "laplace" else "lppd"
    if config.pps_model == "average":
        chosen = fitted
    else:
        chosen = [fm for fm in fitted if fm.spec.name == config.pps_model]
    logd = np.mean([_size_log_densities(fm, data, source) for fm in chosen], axis=0)
    return compute_pps_probabilities(logd), source


def run_pipeline(config: RunConfig) -> ReportBundle:
    """Run the configured workflow and collect every result in a :class:`ReportBundle`.

    Raises :class:`~approxloo.errors.ConfigError` for invalid configurations
    and :class:`PipelineError` (carrying the partial bundle) when a stage fails.
    """
    check_config(config)
    bundle = ReportBundle(config)
    with _stage(bundle, "ingest"):
        columns = sorted({c for m in config.models for c in m.predictors})
        data, dropped = ingest_csv(config.dataset_path, config.outcome_column, columns)
        if config.standardize:
            data = data.standardized()
        bundle.n, bundle.dropped_rows = data.n, dropped
        specs = [
            ModelSpec.from_names(
                data, m.predictors, prior_scale=m.prior_scale, prior_location=m.prior_location, name=m.name
            )
            for m in config.models
        ]
    names = [s.name for s in specs]
    mcmc = _mcmc_config(config, config.seed)
    fitted = []
    for spec in specs:
        with _stage(bundle, "fit"):
            fitted.append(_fit(spec, data, config))
            bundle.convergence[spec.name] = fitted[-1].convergence
        bundle.reports[spec.name] = {}

    for fm in fitted:
        name = fm.spec.name
        j = _model_key(fm.spec, data)
        out = bundle.reports[name]
        for est in config.estimators:
            with _stage(bundle, est):
                if est == "psis_loo":
                    refit = None
                    if config.refit_high_khat:
                        refit = make_refit(fm.spec, data, replace(mcmc, seed=_child_seed(config.seed, _SEED_LOO, j)))
                    out[est] = elpd_psis_loo(fm.loglik, fm.log_p_full, fm.log_q, refit=refit, model=name)
                elif est == "waic":
                    out[est] = waic(fm.loglik, model=name)
                elif est == "is_loo":
                    out[est] = elpd_is_loo(fm.loglik, model=name)
                elif est == "dic":
                    out[est] = dic_from_draws(fm.draws, fm.spec, data)
                elif est == "loo_exact":
                    cfg = replace(mcmc, seed=_child_seed(config.seed, _SEED_LOO, j))
                    out[est] = elpd_loo_exact(fm.spec, data, cfg, n_jobs=config.n_jobs)
                elif est == "kfold":
                    cfg = replace(mcmc, seed=_child_seed(config.seed, _SEED_KFOLD, j))
                    out[est] = elpd_kfold(
                        fm.spec, data, config.kfold_k, cfg, seed=config.seed, n_jobs=config.n_jobs
                    )
        if "psis_loo" in out:
            bundle.khat[name] = (out["psis_loo"].observation_index, out["psis_loo"].khat)

    m = config.subsample_size(data.n)
    if m is not None:
        with _stage(bundle, "subsample"):
            pi, source = _pps_probabilities(fitted, data, config)
            plan = draw_subsample(pi, m, _child_seed(config.seed, _SEED_PLAN))
            bundle.plan = plan
            bundle.warnings.append(
                f"subsample plan (m={m}, size measure '{source}' from {config.pps_model}) "
                "shared by all models"
            )
            for fm in fitted:
                rep = elpd_psis_loo_subsampled(fm.loglik, plan, fm.log_p_full, fm.log_q, model=fm.spec.name)
                bundle.reports[fm.spec.name][rep.estimator] = rep
                if fm.spec.name not in bundle.khat:
                    uniq, first = np.unique(plan.indices, return_index=True)
                    bundle.khat[fm.spec.name] = (uniq, rep.khat[first])

    for name, by_est in bundle.reports.items():
        for est, rep in by_est.items():
            for flag in rep.flags:
                bundle.warnings.append(f"{name}/{est}: {flag}")
            if rep.n_high_khat:
                bundle.warnings.append(
                    f"{name}/{est}: {rep.n_high_khat} observation(s) with khat > {KHAT_THRESHOLD}"
                )

    with _stage(bundle, "compare"):
        estimators = [e for e in bundle.reports[names[0]]]
        for est in estimators:
            reps = [bundle.reports[n][est] for n in names]
            bundle.comparisons[est] = compare_models(reps, names)

    if config.loo_pit:
        with _stage(bundle, "loo_pit"):
            grid = np.linspace(0.0, 1.0, 101)
            for fm in fitted:
                j = _model_key(fm.spec, data)
                _, _, _, lw = psis_loo_pointwise(fm.loglik, fm.log_p_full, fm.log_q, return_weights=True)
                res = loo_pit(fm.loglik, lw, data.y, seed=_child_seed(config.seed, _SEED_PIT, j))
                bundle.loo_pit[fm.spec.name] = PitSummary(res, grid, kde_unit_interval(res.pit, grid))
            bundle.reference_bands = uniform_reference_bands(
                data.n, config.pit_replicates, grid, seed=_child_seed(config.seed, _SEED_BANDS)
            )
    return bundle
