"""Metropolis-within-Gibbs sampler for the skew link model, and DIC.

Each iteration draws the coefficients exactly from their unified skew
posterior, then updates the unconstrained correlation parameters ``theta``
and the per-response skewness ``alpha_s`` jointly by a random-walk
Metropolis-Hastings step.

``theta`` holds the strictly lower entries of a unit-diagonal lower-triangular
``L`` (row-major, as ``np.tril_indices(M, -1)``); the correlation matrix is
``L L'`` rescaled to unit diagonal.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from ._linalg import nearest_correlation
from .errors import NumericalError, SkewLinkError, ValidationError
from .linkmodel import (
    LIK_FLOOR,
    likelihood_sn,
    likelihood_st,
    posterior_params,
    replicate_alpha,
    sample_beta_sun,
    sample_beta_sut,
)
from .mvprob import QMCSettings
from .skewdist import admissible

# a single lattice round; the log-likelihood noise this leaves is far below
# the scale of typical log acceptance ratios
CHAIN_ACCURACY = QMCSettings(abs_tol=0.0, rel_tol=1e-2, n_shifts=8, n_points=512, max_evals=8 * 509)
DEVIANCE_ACCURACY = QMCSettings(abs_tol=0.0, rel_tol=1e-3, n_shifts=12, n_points=4096, max_evals=2_000_000)


def n_corr_params(M):
    return M * (M - 1) // 2


def _dim_from_theta(k):
    M = int(round((1 + np.sqrt(1 + 8 * k)) / 2))
    if n_corr_params(M) != k:
        raise ValidationError(f"theta length {k} is not M(M-1)/2")
    return M


def theta_to_corr(theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be finite")
    M = _dim_from_theta(theta.size)
    L = np.eye(M)
    L[np.tril_indices(M, -1)] = theta
    P = L @ L.T
    d = np.sqrt(np.diag(P))
    C = P / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    return C


def corr_to_theta(corr):
    C = np.linalg.cholesky(np.asarray(corr, dtype=float))
    L = C / np.diag(C)[:, None]
    return L[np.tril_indices(C.shape[0], -1)]


def log_jacobian(theta):
    """Log determinant of the map from ``theta`` to the lower correlations."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    M = _dim_from_theta(theta.size)
    L = np.eye(M)
    L[np.tril_indices(M, -1)] = theta
    row = np.sum(L * L, axis=1)
    return float(-0.5 * (M + 1) * np.sum(np.log(row)))


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings.  ``df=None`` is the normal kernel.

    ``prior_mean``/``prior_cov`` default to ``0`` and ``25 I`` once the
    coefficient dimension is known.  ``alpha_free`` / ``corr_free`` switch
    the skewness and correlation blocks off (fixed at 0 and identity).
    """

    iterations: int = 10_000
    burn_in: int = 3_000
    h1: float = 0.09
    h2: float = 0.09
    seed: int = 0
    df: float = None
    prior_mean: np.ndarray = None
    prior_cov: np.ndarray = None
    prior_var_scale: float = 25.0
    alpha_prior_var: float = 16.0
    eta: float = 1.0
    accuracy: QMCSettings = field(default=CHAIN_ACCURACY)
    alpha_free: bool = True
    corr_free: bool = True

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValidationError("iterations must be positive")
        if not (0 <= int(self.burn_in) < int(self.iterations)):
            raise ValidationError("need 0 <= burn_in < iterations")
        if not (self.h1 > 0 and self.h2 > 0):
            raise ValidationError("proposal variances must be positive")
        if not (self.eta > 0):
            raise ValidationError("eta must be positive")
        if not (self.alpha_prior_var > 0) or not (self.prior_var_scale > 0):
            raise ValidationError("prior variances must be positive")
        if self.df is not None and not (self.df > 0):
            raise ValidationError("invalid df")
        if self.df is not None and np.isinf(self.df):
            object.__setattr__(self, "df", None)

    def prior(self, p):
        mu = np.zeros(p) if self.prior_mean is None else np.asarray(self.prior_mean, dtype=float).reshape(-1)
        Om = self.prior_var_scale * np.eye(p) if self.prior_cov is None else np.asarray(self.prior_cov, dtype=float)
        if mu.shape != (p,) or Om.shape != (p, p):
            raise ValidationError("coefficient prior does not match the design")
        return mu, Om


@dataclass(frozen=True)
class ChainState:
    theta: np.ndarray
    alpha_s: np.ndarray

    @property
    def corr(self):
        return theta_to_corr(self.theta) if self.theta.size else np.eye(self.alpha_s.size)


@dataclass(frozen=True)
class ChainDraws:
    beta: np.ndarray
    sigma_bar: np.ndarray
    alpha_s: np.ndarray
    accepted: int
    loglik: np.ndarray
    diagnostics: dict
    burn_in: int = 0

    @property
    def acceptance_rate(self):
        return self.accepted / max(len(self.loglik), 1)


class ChainError(NumericalError):
    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration


def model_loglik(data, beta, corr, alpha_s, config, seed=0, accuracy=None):
    """Log panel probability, floored at ``log(1e-300)``."""
    acc = config.accuracy if accuracy is None else accuracy
    if config.df is None:
        est = likelihood_sn(data, beta, corr, alpha_s, acc, seed)
    else:
        mu, Om = config.prior(data.p)
        est = likelihood_st(data, beta, corr, alpha_s, config.df, mu, Om, acc, seed)
    return float(np.log(min(max(est.value, LIK_FLOOR), 1.0 - LIK_FLOOR)))


def log_prior(theta, alpha_s, config):
    """Gaussian skewness prior plus the LKJ term and the Jacobian of ``theta``."""
    alpha_s = np.asarray(alpha_s, dtype=float)
    v = config.alpha_prior_var
    lp = float(np.sum(-0.5 * alpha_s**2 / v - 0.5 * np.log(2 * np.pi * v)))
    theta = np.asarray(theta, dtype=float)
    if theta.size:
        if config.eta != 1.0:
            _, logdet = np.linalg.slogdet(theta_to_corr(theta))
            lp += (config.eta - 1.0) * logdet
        lp += log_jacobian(theta)
    return lp


def log_target(theta, alpha_s, data, beta, config, seed=0, loglik=None):
    """Unnormalized log posterior of ``(theta, alpha_s)`` given the coefficients.

    ``loglik`` optionally replaces the model likelihood with a callable
    ``loglik(corr, alpha_s, seed)``.  Returns ``(value, log likelihood)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    corr = theta_to_corr(theta) if theta.size else np.eye(data.M)
    if loglik is None:
        ll = model_loglik(data, beta, corr, alpha_s, config, seed)
    else:
        ll = float(loglik(corr, alpha_s, seed))
    return ll + log_prior(theta, alpha_s, config), ll


def _admissible(state, n):
    return admissible(np.kron(np.eye(n), state.corr), replicate_alpha(state.alpha_s, n, state.alpha_s.size))


def mh_step(state, data, beta, config, rng, loglik=None):
    """One joint random-walk step on ``(theta, alpha_s)``.

    The current state's target is recomputed with a fresh seed.  Returns
    ``(state, accepted, info)`` where ``info`` has the log likelihood of the
    returned state and whether the admissibility guard fired.
    """
    seeds = rng.integers(0, 2**63, size=2)
    theta = state.theta
    alpha = state.alpha_s
    if config.corr_free and theta.size:
        theta = theta + np.sqrt(config.h2) * rng.standard_normal(theta.size)
    if config.alpha_free:
        alpha = alpha + np.sqrt(config.h1) * rng.standard_normal(alpha.size)
    log_u = np.log(rng.random())
    proposal = ChainState(theta, alpha)
    if not (config.corr_free and state.theta.size) and not config.alpha_free:
        _, ll = log_target(state.theta, state.alpha_s, data, beta, config, int(seeds[0]), loglik)
        return state, False, {"loglik": ll, "guard": False}
    if not _admissible(proposal, data.n):
        _, ll = log_target(state.theta, state.alpha_s, data, beta, config, int(seeds[0]), loglik)
        return state, False, {"loglik": ll, "guard": True}
    cur, ll_cur = log_target(state.theta, state.alpha_s, data, beta, config, int(seeds[0]), loglik)
    new, ll_new = log_target(theta, alpha, data, beta, config, int(seeds[1]), loglik)
    if log_u < new - cur:
        return proposal, True, {"loglik": ll_new, "guard": False}
    return state, False, {"loglik": ll_cur, "guard": False}


def acceptance_probability(log_target_current, log_target_proposal):
    return float(min(1.0, np.exp(min(log_target_proposal - log_target_current, 0.0))))


def initial_state(M):
    return ChainState(np.zeros(n_corr_params(M)), np.zeros(M))


def run_chain(data, config, loglik=None, progress=None):
    """Run the sampler; returns draws after burn-in plus per-iteration records."""
    rng = np.random.default_rng(config.seed)
    K, burn = int(config.iterations), int(config.burn_in)
    M, p = data.M, data.p
    mu, Om = config.prior(p)
    state = initial_state(M)
    J = n_corr_params(M)
    keep = K - burn
    betas = np.empty((keep, p))
    corrs = np.empty((keep, J))
    alphas = np.empty((keep, M))
    lls = np.empty(K)
    accepted = 0
    guards = 0
    methods = {}
    min_rate = np.inf
    tril = np.tril_indices(M, -1)
    for k in range(K):
        try:
            post = posterior_params(data, mu, Om, state.corr, state.alpha_s, config.df)
            sampler = sample_beta_sun if config.df is None else sample_beta_sut
            draw, diag = sampler(post, 1, rng, return_diagnostics=True)
            beta = draw[0]
            state, acc, info = mh_step(state, data, beta, config, rng, loglik)
        except SkewLinkError as exc:
            raise ChainError(k, exc) from exc
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise ChainError(k, exc) from exc
        accepted += int(acc)
        guards += int(info["guard"])
        methods[diag.method] = methods.get(diag.method, 0) + 1
        if np.isfinite(diag.acceptance_rate):
            min_rate = min(min_rate, diag.acceptance_rate)
        lls[k] = info["loglik"]
        if k >= burn:
            j = k - burn
            betas[j] = beta
            corrs[j] = state.corr[tril]
            alphas[j] = state.alpha_s
        if progress is not None:
            progress(k, state, acc)
    diagnostics = {
        "sampler_methods": methods,
        "min_sampler_acceptance": float(min_rate) if np.isfinite(min_rate) else float("nan"),
        "guard_rejections": guards,
    }
    return ChainDraws(betas, corrs, alphas, accepted, lls, diagnostics, burn)


@dataclass(frozen=True)
class DICReport:
    dic: float
    p_d: float
    d_bar: float
    d_at_mean: float


def posterior_mean_state(draws, M):
    """Posterior means, with the averaged correlation projected back to a correlation matrix."""
    beta = draws.beta.mean(axis=0)
    alpha = draws.alpha_s.mean(axis=0)
    corr = np.eye(M)
    if draws.sigma_bar.shape[1]:
        tril = np.tril_indices(M, -1)
        corr[tril] = draws.sigma_bar.mean(axis=0)
        corr = corr + np.tril(corr, -1).T
        corr = nearest_correlation(corr)
    return beta, corr, alpha


def dic(draws, data, config, seed=0, accuracy=DEVIANCE_ACCURACY):
    """DIC from retained draws; the deviance at retained draws uses the
    per-iteration log likelihoods recorded by :func:`run_chain`."""
    if draws.beta.shape[0] == 0:
        raise ValidationError("no retained draws")
    dev = -2.0 * draws.loglik[draws.burn_in :]
    d_bar = float(np.mean(dev))
    beta, corr, alpha = posterior_mean_state(draws, data.M)
    try:
        d_mean = -2.0 * model_loglik(data, beta, corr, alpha, config, seed, accuracy)
    except SkewLinkError as exc:
        raise NumericalError(f"likelihood failed at the posterior mean: {exc}") from exc
    p_d = d_bar - d_mean
    return DICReport(d_mean + 2.0 * p_d, p_d, d_bar, d_mean)


def dic_from_deviances(deviances, d_at_mean):
    d_bar = float(np.mean(deviances))
    p_d = d_bar - d_at_mean
    return DICReport(d_at_mean + 2.0 * p_d, p_d, d_bar, float(d_at_mean))


def with_overrides(config, **kw):
    return replace(config, **kw)
