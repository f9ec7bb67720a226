"""
Sampling a logistic-regression posterior
========================================

Fit one model two ways: adaptive random-walk Metropolis with four chains,
and a Gaussian (Laplace) approximation at the posterior mode.
"""

import numpy as np

from approxloo import McmcConfig, ModelSpec, laplace_approximate, sample_posterior_mcmc
from approxloo.datasets import make_synthetic_logistic

# 500 observations, three covariates, known coefficients
data = make_synthetic_logistic(500, [-0.5, 1.0, -0.8, 0.5], seed=1)
model = ModelSpec.from_names(data, ["x1", "x2", "x3"], name="full")

###############################################################################
# MCMC. Chains start from overdispersed draws around the mode; the proposal
# covariance adapts during warmup and is frozen afterwards.
draws, report = sample_posterior_mcmc(model, data, McmcConfig(seed=2))
print("draws:", draws.S, "from", draws.chains, "chains")
print("split R-hat:", np.round(report.rhat, 4))
print("acceptance:", np.round(report.acceptance_rate, 3))

###############################################################################
# Laplace approximation: Newton's method to the mode, then the inverse
# negative Hessian as covariance.
q = laplace_approximate(model, data)
print("Newton iterations:", q.n_iter)
print("posterior mean (MCMC):   ", np.round(draws.mean(), 3))
print("posterior mean (Laplace):", np.round(q.mean, 3))
print("posterior sd (MCMC):     ", np.round(draws.draws.std(axis=0), 3))
print("posterior sd (Laplace):  ", np.round(np.sqrt(np.diag(q.covariance)), 3))
