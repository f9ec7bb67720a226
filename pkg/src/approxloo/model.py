"""Bernoulli logistic regression: data containers, priors and exact densities.

The parameter vector is always laid out as ``theta = [alpha, beta_1, ..., beta_k]``
where ``alpha`` is the intercept and ``beta`` are the coefficients of the
predictors selected by a :class:`ModelSpec`.

Only single-trial (Bernoulli) outcomes are supported. A binomial likelihood with
``t`` trials would add ``log C(t, y)`` and replace ``y * eta - log1pexp(eta)``
by ``y * eta - t * log1pexp(eta)``; nothing else in the package depends on
``t = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError

LOG_2PI = float(np.log(2.0 * np.pi))

# above this the correction log1p(exp(-eta)) is below double precision
_LOG1PEXP_CUTOVER = 35.0


def log1pexp(eta):
    """Compute ``log(1 + exp(eta))`` without overflow."""
    eta = np.asarray(eta, dtype=float)
    small = np.log1p(np.exp(np.minimum(eta, _LOG1PEXP_CUTOVER)))
    return np.where(eta > _LOG1PEXP_CUTOVER, eta, small)


def expit(eta):
    """Logistic function, stable for large ``|eta|``."""
    eta = np.asarray(eta, dtype=float)
    return np.exp(-log1pexp(-eta))


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p), binary outcome ``y`` and column names."""

    X: np.ndarray
    y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        if X.ndim != 2:
            raise DimensionMismatchError(f"X must be 2-d, got shape {X.shape}")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.all(np.isfinite(X)):
            bad = int(np.argwhere(~np.isfinite(X))[0, 0])
            raise NonFiniteError(f"non-finite covariate in row {bad}", index=bad)
        if not np.all((y == 0.0) | (y == 1.0)):
            bad = int(np.flatnonzero((y != 0.0) & (y != 1.0))[0])
            raise ValueError(f"outcome must be 0/1, row {bad} has {y[bad]!r}")
        names = tuple(str(s) for s in self.names) if len(self.names) else tuple(
            f"x{j + 1}" for j in range(X.shape[1])
        )
        if len(names) != X.shape[1]:
            raise DimensionMismatchError(
                f"{len(names)} names given for {X.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        """Return the dataset restricted to ``rows`` (index array or mask)."""
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.names)

    def drop(self, rows) -> "Dataset":
        """Return the dataset without ``rows``."""
        keep = np.ones(self.n, dtype=bool)
        keep[np.asarray(rows)] = False
        return self.subset(keep)

    def standardized(self) -> "Dataset":
        """Center and scale every column to unit sample standard deviation.

        Constant columns are only centered.
        """
        mu = self.X.mean(axis=0) if self.n else np.zeros(self.p)
        sd = self.X.std(axis=0, ddof=1) if self.n > 1 else np.ones(self.p)
        sd = np.where(sd > 0, sd, 1.0)
        return Dataset((self.X - mu) / sd, self.y, self.names)


@dataclass(frozen=True)
class ModelSpec:
    """A candidate model: which columns enter the linear predictor, and the prior.

    ``predictor_indices`` are 0-based column indices into ``Dataset.X``. The same
    independent ``Normal(prior_location, prior_scale)`` prior is placed on the
    intercept and on every coefficient, on the raw covariate scale.
    """

    predictor_indices: tuple = ()
    prior_location: float = 0.0
    prior_scale: float = 2.5
    name: str = ""

    def __post_init__(self):
        idx = tuple(int(i) for i in self.predictor_indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate predictor indices {idx}")
        if any(i < 0 for i in idx):
            raise ValueError(f"negative predictor index in {idx}")
        if not (np.isfinite(self.prior_scale) and self.prior_scale > 0):
            raise ValueError(f"prior_scale must be positive, got {self.prior_scale}")
        if not np.isfinite(self.prior_location):
            raise ValueError("prior_location must be finite")
        object.__setattr__(self, "predictor_indices", idx)

    @classmethod
    def from_names(cls, data: Dataset, names: Sequence[str], **kwargs) -> "ModelSpec":
        lookup = {nm: j for j, nm in enumerate(data.names)}
        missing = [nm for nm in names if nm not in lookup]
        if missing:
            raise KeyError(f"unknown columns {missing}")
        return cls(tuple(lookup[nm] for nm in names), **kwargs)

    @property
    def dim(self) -> int:
        """Number of parameters (intercept plus coefficients)."""
        return len(self.predictor_indices) + 1

    def design(self, data: Dataset) -> np.ndarray:
        """Design matrix with a leading column of ones, shape (n, dim)."""
        if self.predictor_indices and max(self.predictor_indices) >= data.p:
            raise DimensionMismatchError(
                f"predictor index {max(self.predictor_indices)} out of range for p={data.p}"
            )
        cols = data.X[:, list(self.predictor_indices)]
        return np.column_stack([np.ones(data.n), cols]) if data.n else np.zeros((0, self.dim))


@dataclass(frozen=True)
class ParamVector:
    """Intercept plus coefficient vector; converts to and from the flat layout."""

    alpha: float
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if not (np.isfinite(self.alpha) and np.all(np.isfinite(beta))):
            raise NonFiniteError("parameter vector has non-finite entries")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", beta)

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.alpha], self.beta])

    @classmethod
    def from_array(cls, theta) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0], theta[1:])


def _as_theta(theta, model: ModelSpec) -> np.ndarray:
    if isinstance(theta, ParamVector):
        theta = theta.to_array()
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != model.dim:
        raise DimensionMismatchError(
            f"theta has {theta.shape[0]} entries, model expects {model.dim}"
        )
    return theta


def log_likelihood_pointwise(theta, model: ModelSpec, data: Dataset) -> np.ndarray:
    """Return ``log p(y_i | theta)`` for every observation, shape (n,)."""
    theta = _as_theta(theta, model)
    eta = model.design(data) @ theta
    return data.y * eta - log1pexp(eta)


def log_likelihood_matrix(draws, model: ModelSpec, data: Dataset) -> np.ndarray:
    """Pointwise log-likelihood for a batch of draws, shape (n, S).

    ``draws`` has shape (S, dim).
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"draws have {draws.shape[1]} columns, model expects {model.dim}"
        )
    eta = model.design(data) @ draws.T
    return data.y[:, None] * eta - log1pexp(eta)


def log_prior(theta, model: ModelSpec) -> float:
    theta = _as_theta(theta, model)
    z = (theta - model.prior_location) / model.prior_scale
    return float(-0.5 * np.sum(z * z) - model.dim * (np.log(model.prior_scale) + 0.5 * LOG_2PI))


def log_posterior_unnormalized(theta, model: ModelSpec, data: Dataset):
    """Unnormalized log posterior with its gradient and Hessian.

    Returns
    -------
    value : float
        ``sum_i log p(y_i | theta) + log p(theta)``; the prior is the normalized
        Gaussian density, the evidence is omitted.
    gradient : ndarray, shape (dim,)
    hessian : ndarray, shape (dim, dim)
        Negative definite for any finite ``prior_scale``.
    """
    theta = _as_theta(theta, model)
    Xd = model.design(data)
    with np.errstate(invalid="ignore", over="ignore"):
        eta = Xd @ theta
        ll = data.y * eta - log1pexp(eta)
    if not np.all(np.isfinite(ll)):
        bad = int(np.flatnonzero(~np.isfinite(ll))[0])
        raise NonFiniteError(f"non-finite log-likelihood at observation {bad}", index=bad)
    prec = 1.0 / model.prior_scale**2
    value = float(np.sum(ll)) + log_prior(theta, model)
    mu = expit(eta)
    grad = Xd.T @ (data.y - mu) - prec * (theta - model.prior_location)
    curv = mu * (1.0 - mu)
    hess = -(Xd.T * curv) @ Xd - prec * np.eye(model.dim)
    return value, grad, 0.5 * (hess + hess.T)


def log_posterior_batch(thetas, model: ModelSpec, data: Dataset) -> np.ndarray:
    """Unnormalized log posterior for each row of ``thetas`` (shape (C, dim))."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    ll = log_likelihood_matrix(thetas, model, data)
    z = (thetas - model.prior_location) / model.prior_scale
    lp = -0.5 * np.sum(z * z, axis=1) - model.dim * (np.log(model.prior_scale) + 0.5 * LOG_2PI)
    return ll.sum(axis=0) + lp
