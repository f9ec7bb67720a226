"""Posterior inference: adaptive random-walk Metropolis, split R-hat, Laplace.

MCMC chains are advanced in lock-step as a batch so that one log-density call
evaluates every chain; each chain nevertheless owns an independent random
stream spawned from the run seed, so results do not depend on batching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, DimensionMismatchError
from .model import (
    LOG_2PI,
    Dataset,
    ModelSpec,
    log_posterior_batch,
    log_posterior_unnormalized,
)


@dataclass(frozen=True)
class PosteriorDraws:
    """Draws stacked chain-major: rows ``c * per_chain ... (c + 1) * per_chain - 1``
    belong to chain ``c``."""

    draws: np.ndarray
    chains: int = 1
    method_tag: str = "mcmc"
    seed: Optional[int] = None

    def __post_init__(self):
        draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.chains < 1 or draws.shape[0] % self.chains:
            raise DimensionMismatchError(
                f"{draws.shape[0]} draws cannot be split into {self.chains} chains"
            )
        if self.method_tag not in ("mcmc", "laplace-sample"):
            raise ValueError(f"unknown method_tag {self.method_tag!r}")
        if self.method_tag == "laplace-sample" and self.chains != 1:
            raise ValueError("Laplace samples carry a single chain")
        if not np.all(np.isfinite(draws)):
            raise ValueError("posterior draws must be finite")
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)

    @property
    def S(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]

    @property
    def per_chain(self) -> int:
        return self.S // self.chains

    def chain_array(self) -> np.ndarray:
        """Draws reshaped to (chains, per_chain, dim)."""
        return self.draws.reshape(self.chains, self.per_chain, self.dim)

    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)


@dataclass(frozen=True)
class ConvergenceReport:
    rhat: np.ndarray
    divergent: np.ndarray
    acceptance_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def max_rhat(self) -> float:
        return float(np.max(self.rhat))


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    iterations: int = 4000
    warmup: int = 2000
    seed: int = 0
    target_accept: float = 0.234
    init: Optional[np.ndarray] = None
    # initial points are drawn from the Laplace approximation with its
    # covariance inflated by init_scale**2
    init_scale: float = 2.0
    # raise ConvergenceError when max split R-hat exceeds this (None: never)
    max_rhat: Optional[float] = None


@dataclass(frozen=True)
class LaplaceConfig:
    max_newton_iters: int = 100
    grad_tol: float = 1e-8


@dataclass(frozen=True)
class LaplaceApproximation:
    mean: np.ndarray
    covariance: np.ndarray
    log_det_cov: float
    mode_log_posterior: float
    chol: np.ndarray
    n_iter: int = 0
    grad_norm: float = 0.0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


# -- MCMC ---------------------------------------------------------------------


def _adaptation_points(warmup: int):
    """Warmup iterations at which the proposal covariance is re-estimated."""
    points = []
    t = 100
    while t < 0.8 * warmup:
        points.append(t)
        t *= 2
    if warmup >= 200:
        points.append(int(0.8 * warmup))
    return sorted(set(points))


def adaptive_metropolis(
    log_density: Callable[[np.ndarray], np.ndarray],
    init,
    iterations: int,
    warmup: int,
    seed=0,
    proposal_cov=None,
    target_accept: float = 0.234,
):
    """Run a batch of adaptive random-walk Metropolis chains.

    During warmup every chain tunes a global proposal scale by Robbins-Monro
    towards ``target_accept`` and periodically re-estimates its proposal
    covariance from its own recent warmup draws. Adaptation is frozen after
    warmup, so the retained draws come from a fixed Metropolis kernel.

    Parameters
    ----------
    log_density : callable
        Maps an array of shape (C, d) to log densities of shape (C,).
        ``-inf`` means zero density (the proposal is rejected).
    init : array_like, shape (C, d)
    iterations, warmup : int
        Total iterations per chain and how many of them are discarded.
    seed : int or SeedSequence
    proposal_cov : array_like, shape (d, d), optional
        Starting proposal covariance (identity when omitted).

    Returns
    -------
    draws : ndarray, shape (C, iterations - warmup, d)
    acceptance_rate : ndarray, shape (C,)
        Post-warmup acceptance rate.
    """
    init = np.atleast_2d(np.asarray(init, dtype=float))
    C, d = init.shape
    if iterations <= warmup:
        raise ValueError("iterations must exceed warmup")
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    gens = [np.random.default_rng(s) for s in seq.spawn(C)]
    z = np.stack([g.standard_normal((iterations, d)) for g in gens], axis=1)
    log_u = np.log(np.stack([g.random(iterations) for g in gens], axis=1))

    cov0 = np.eye(d) if proposal_cov is None else np.asarray(proposal_cov, dtype=float)
    L = np.broadcast_to(np.linalg.cholesky(cov0), (C, d, d)).copy()
    log_scale = np.full(C, np.log(2.38 / np.sqrt(d)))

    current = init.copy()
    current_lp = np.asarray(log_density(current), dtype=float)
    if not np.all(np.isfinite(current_lp)):
        bad = int(np.flatnonzero(~np.isfinite(current_lp))[0])
        raise ConvergenceError(
            f"chain {bad} starts at a point with non-finite log density",
            {"chain": bad, "iteration": 0},
        )

    n_keep = iterations - warmup
    out = np.empty((C, n_keep, d))
    warm_trace = np.empty((C, warmup, d))
    accepted = np.zeros(C)
    refresh = set(_adaptation_points(warmup))
    window_start = 0

    for t in range(iterations):
        step = np.einsum("cij,cj->ci", L, z[t]) * np.exp(log_scale)[:, None]
        proposal = current + step
        prop_lp = np.asarray(log_density(proposal), dtype=float)
        if np.any(np.isnan(prop_lp) | (prop_lp == np.inf)):
            bad = int(np.flatnonzero(np.isnan(prop_lp) | (prop_lp == np.inf))[0])
            raise ConvergenceError(
                f"chain {bad} hit a non-finite log density at iteration {t}",
                {"chain": bad, "iteration": t, "state": proposal[bad].tolist()},
            )
        log_ratio = prop_lp - current_lp
        accept = log_u[t] < log_ratio
        current = np.where(accept[:, None], proposal, current)
        current_lp = np.where(accept, prop_lp, current_lp)
        if t < warmup:
            warm_trace[:, t] = current
            alpha = np.exp(np.minimum(0.0, np.nan_to_num(log_ratio, nan=-np.inf)))
            log_scale += (alpha - target_accept) / (t + 1) ** 0.6
            if t + 1 in refresh:
                window = warm_trace[:, window_start : t + 1]
                for c in range(C):
                    emp = np.atleast_2d(np.cov(window[c], rowvar=False))
                    k = window.shape[1]
                    jitter = 1e-10 * max(np.trace(emp) / d, 1e-300)
                    reg = (k * emp + 5.0 * np.diag(np.diag(emp))) / (k + 5.0)
                    try:
                        L[c] = np.linalg.cholesky(reg + jitter * np.eye(d))
                    except np.linalg.LinAlgError:
                        pass
                window_start = (t + 1) // 2
        else:
            out[:, t - warmup] = current
            accepted += accept
    return out, accepted / n_keep


def gelman_rubin(draws) -> np.ndarray:
    """Split-chain potential scale reduction factor, one value per parameter.

    Accepts :class:`PosteriorDraws` or an array shaped (chains, draws) or
    (chains, draws, dim). Each chain is halved before computing the usual
    between/within variance ratio.
    """
    if isinstance(draws, PosteriorDraws):
        arr = draws.chain_array()
    else:
        arr = np.asarray(draws, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionMismatchError(f"expected (chains, draws, dim), got {arr.shape}")
    n_chains, n_draws, _ = arr.shape
    if n_chains < 2:
        raise ValueError("R-hat needs at least two chains")
    half = n_draws // 2
    if half < 4:
        raise ValueError("R-hat needs at least 8 draws per chain")
    split = np.concatenate([arr[:, :half], arr[:, n_draws - half :]], axis=0)
    within = split.var(axis=1, ddof=1).mean(axis=0)
    if np.any(within <= 0):
        raise ValueError("degenerate chains: zero within-chain variance")
    between = half * split.mean(axis=1).var(axis=0, ddof=1)
    var_plus = (half - 1) / half * within + between / half
    return np.sqrt(var_plus / within)


def _initial_points(model, data, config, rng):
    try:
        q = laplace_approximate(model, data)
    except (ConvergenceError, np.linalg.LinAlgError):
        return rng.uniform(-2, 2, size=(config.chains, model.dim)), None
    z = rng.standard_normal((config.chains, model.dim))
    return q.mean + config.init_scale * z @ q.chol.T, q.covariance


def sample_posterior_mcmc(model: ModelSpec, data: Dataset, config: McmcConfig = McmcConfig()):
    """Sample the posterior of ``model`` on ``data`` with adaptive Metropolis.

    Chains start from overdispersed draws of the Laplace approximation (unless
    ``config.init`` is given) and the Laplace covariance seeds the proposal.

    Returns
    -------
    (PosteriorDraws, ConvergenceReport)
    """
    if config.iterations <= config.warmup:
        raise ValueError("iterations must exceed warmup")
    seq = np.random.SeedSequence(config.seed)
    init_seq, chain_seq = seq.spawn(2)
    if config.init is not None:
        init = np.atleast_2d(np.asarray(config.init, dtype=float))
        if init.shape != (config.chains, model.dim):
            raise DimensionMismatchError(
                f"init must have shape {(config.chains, model.dim)}, got {init.shape}"
            )
        cov = None
    else:
        init, cov = _initial_points(model, data, config, np.random.default_rng(init_seq))

    chains, acc = adaptive_metropolis(
        lambda th: log_posterior_batch(th, model, data),
        init,
        config.iterations,
        config.warmup,
        seed=chain_seq,
        proposal_cov=cov,
        target_accept=config.target_accept,
    )
    draws = PosteriorDraws(
        chains.reshape(-1, model.dim), chains=config.chains, method_tag="mcmc", seed=config.seed
    )
    if config.chains >= 2 and draws.per_chain >= 8:
        rhat = gelman_rubin(draws)
    else:
        rhat = np.full(model.dim, np.nan)
    report = ConvergenceReport(rhat, np.zeros(config.chains, dtype=bool), acc)
    if config.max_rhat is not None and not np.all(rhat <= config.max_rhat):
        raise ConvergenceError(
            f"max split R-hat {np.nanmax(rhat):.4f} exceeds {config.max_rhat}",
            {"rhat": rhat.tolist(), "acceptance_rate": acc.tolist()},
        )
    return draws, report


# -- Laplace ------------------------------------------------------------------


def laplace_approximate(
    model: ModelSpec, data: Dataset, config: LaplaceConfig = LaplaceConfig()
) -> LaplaceApproximation:
    """Gaussian approximation at the posterior mode.

    The mode is found by Newton's method from ``theta = 0`` with step halving
    so the log posterior never decreases. The covariance is the inverse of the
    negative Hessian at the mode, obtained from its Cholesky factor.
    """
    theta = np.zeros(model.dim)
    value, grad, hess = log_posterior_unnormalized(theta, model, data)
    n_iter = 0
    while np.linalg.norm(grad) >= config.grad_tol:
        if n_iter >= config.max_newton_iters:
            raise ConvergenceError(
                f"Newton did not converge in {config.max_newton_iters} iterations",
                {"grad_norm": float(np.linalg.norm(grad)), "theta": theta.tolist()},
            )
        n_iter += 1
        try:
            factor = linalg.cho_factor(-hess, lower=True)
        except linalg.LinAlgError as exc:
            raise ConvergenceError(
                "negative Hessian is not positive definite", {"theta": theta.tolist()}
            ) from exc
        direction = linalg.cho_solve(factor, grad)
        t = 1.0
        for _ in range(60):
            cand = theta + t * direction
            c_value, c_grad, c_hess = log_posterior_unnormalized(cand, model, data)
            if c_value >= value:
                break
            t *= 0.5
        else:
            # no ascent possible at working precision
            break
        theta, value, grad, hess = cand, c_value, c_grad, c_hess
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm >= config.grad_tol:
        raise ConvergenceError(
            f"Newton stalled with gradient norm {grad_norm:.3e}",
            {"grad_norm": grad_norm, "theta": theta.tolist()},
        )
    try:
        chol_prec = np.linalg.cholesky(-hess)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("Hessian at the mode is not invertible") from exc
    inv_factor = linalg.solve_triangular(chol_prec, np.eye(model.dim), lower=True)
    cov = inv_factor.T @ inv_factor
    cov = 0.5 * (cov + cov.T)
    chol = np.linalg.cholesky(cov)
    log_det_cov = -2.0 * float(np.sum(np.log(np.diag(chol_prec))))
    return LaplaceApproximation(theta, cov, log_det_cov, value, chol, n_iter, grad_norm)


def laplace_log_density(q: LaplaceApproximation, theta) -> np.ndarray:
    """Multivariate normal log density of ``q`` at ``theta`` (shape (d,) or (S, d))."""
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if theta.shape[1] != q.dim:
        raise DimensionMismatchError(f"theta has dimension {theta.shape[1]}, q has {q.dim}")
    white = linalg.solve_triangular(q.chol, (theta - q.mean).T, lower=True)
    out = -0.5 * (q.dim * LOG_2PI + q.log_det_cov + np.sum(white * white, axis=0))
    return float(out[0]) if single else out


def sample_from_laplace(q: LaplaceApproximation, S: int, seed=0) -> PosteriorDraws:
    """Draw ``S`` i.i.d. samples from the Laplace approximation."""
    if S < 1:
        raise ValueError("S must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((S, q.dim))
    return PosteriorDraws(q.mean + z @ q.chol.T, chains=1, method_tag="laplace-sample", seed=seed)
