"""
Comparing nested models
=======================

Three nested models are scored with PSIS-LOO and with 10-fold
cross-validation. Differences and their standard errors are computed from
the paired pointwise contributions.
"""

from approxloo import (
    McmcConfig,
    ModelSpec,
    PointwiseLogLik,
    compare_models,
    elpd_kfold,
    elpd_psis_loo,
    sample_posterior_mcmc,
)
from approxloo.datasets import load_fixture

data = load_fixture()
models = {
    "M1": ["x1"],
    "M2": ["x1", "x2"],
    "M3": ["x1", "x2", "x3"],
}
psis, kfold = [], []
for j, (name, cols) in enumerate(models.items()):
    spec = ModelSpec.from_names(data, cols, name=name)
    draws, _ = sample_posterior_mcmc(spec, data, McmcConfig(seed=10 + j))
    psis.append(elpd_psis_loo(PointwiseLogLik.from_draws(draws, spec, data), model=name))
    cfg = McmcConfig(iterations=2000, warmup=1000, seed=20 + j)
    kfold.append(elpd_kfold(spec, data, K=10, config=cfg, seed=0))

for label, reports in (("PSIS-LOO", psis), ("10-fold", kfold)):
    print(label)
    for rep, name in zip(reports, models):
        print(f"  {name}: {rep.elpd_sum:8.2f} (se {rep.se_loo:.2f})")
    for row in compare_models(reports, list(models)):
        if row.model_a == "M3":
            print(f"  M3 - {row.model_b}: {row.elpd_diff:6.2f} (se {row.se_diff:.2f})")
