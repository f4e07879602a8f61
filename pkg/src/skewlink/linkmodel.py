"""Multivariate skew-normal / skew-t link model for binary panels.

Latent ``Y* = X beta + eps`` with ``y = 1(Y* > 0)``.  The error is skew-elliptical
with scale ``I_n (x) Sigma`` and a skewness vector ``alpha`` of length ``nM``
(usually one value per response, tiled over observations).  The probability
of a whole panel is a single ``(nM+1)``-variate normal or t distribution
function, and the coefficient posterior under a normal (or t) prior is
unified skew-normal (or skew-t) with closed-form parameters.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from ._linalg import check_symmetric, cov_to_corr, robust_cholesky, symmetric_sqrt
from .errors import ValidationError
from .mvprob import GaussianProblem, ProbEstimate, StudentProblem, mvn_cdf, mvt_cdf
from .skewdist import SkewEllipticalParams, delta_from_alpha, sample_sn
from .truncsample import TruncationProblem, sample_tmvn, sample_tmvt

LIK_FLOOR = 1e-300


@dataclass(frozen=True)
class ModelData:
    """Binary panel ``y`` (n x M) and stacked design ``X`` (nM x p).

    Rows of ``X`` are observation-major: row ``i*M + j`` is observation i,
    response j.  With ``layout="blocks"`` the columns split into M equal
    blocks and response j may only load on block j.
    """

    y: np.ndarray
    X: np.ndarray
    layout: str = "shared"

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 1:
            y = y.reshape(1, -1)
        if y.ndim != 2 or y.size == 0:
            raise ValidationError("panel must be a nonempty n x M array")
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("panel entries must be 0 or 1")
        y = y.astype(np.int8)
        n, M = y.shape
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != n * M:
            raise ValidationError(f"design must have n*M = {n * M} rows, got {X.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("design has non-finite entries")
        if self.layout not in ("shared", "blocks"):
            raise ValidationError(f"unknown layout {self.layout!r}")
        if self.layout == "blocks":
            p = X.shape[1]
            if p % M:
                raise ValidationError("blocks layout needs p divisible by M")
            q = p // M
            mask = np.kron(np.ones((n, 1)), np.kron(np.eye(M), np.ones((1, q)))) == 0
            if np.any(X[mask] != 0):
                raise ValidationError("blocks layout: off-block design entries must be zero")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def M(self):
        return self.y.shape[1]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class SignStructure:
    signs: np.ndarray
    Dstar: np.ndarray

    @property
    def D(self):
        return np.diag(self.signs)


@dataclass(frozen=True)
class BorderedScale:
    SigmaStar: np.ndarray
    sigmaStar: np.ndarray
    SigmaStarBar: np.ndarray


@dataclass(frozen=True)
class SuePosterior:
    mu_post: np.ndarray
    Omega_post: np.ndarray
    Lambda_post: np.ndarray
    tau_post: np.ndarray
    Gamma_post: np.ndarray
    df: float = None
    omega: np.ndarray = None

    @property
    def kernel(self):
        return "normal" if self.df is None else "student"


def build_sign_structure(data):
    signs = 2.0 * data.y.reshape(-1) - 1.0
    Dstar = np.vstack([np.zeros((1, data.p)), signs[:, None] * data.X])
    return SignStructure(signs, Dstar)


def replicate_alpha(alpha, n, M):
    """Tile a per-response skewness vector over ``n`` observations."""
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape == (M,):
        return np.tile(a, n)
    if a.shape == (n * M,):
        return a
    raise ValidationError(f"alpha must have length M={M} or nM={n * M}")


def build_bordered_scale(Sigma, alpha_s, n, signs):
    """Bordered ``(nM+1)`` scale for a panel with sign vector ``signs``.

    ``alpha_s`` is per-response (length M, replicated) or full (length nM);
    ``delta`` is formed on the whole ``I_n (x) Sigma_bar`` block.  The border
    is ``+delta' D (I_n (x) sigma)``: the panel event is ``-D eps < D X beta`` and
    ``-D eps`` has skewness ``-D alpha``.
    """
    Sigma = check_symmetric(np.atleast_2d(np.asarray(Sigma, dtype=float)), "Sigma")
    M = Sigma.shape[0]
    signs = np.asarray(signs, dtype=float).reshape(-1)
    if signs.shape != (n * M,):
        raise ValidationError("sign vector has the wrong length")
    Sbar, sd = cov_to_corr(Sigma)
    alpha = replicate_alpha(alpha_s, n, M)
    # delta is formed on the whole block-diagonal correlation
    big = np.kron(np.eye(n), Sbar)
    delta = delta_from_alpha(alpha, big)
    sd_full = np.tile(sd, n)
    m = n * M + 1
    S = np.empty((m, m))
    S[0, 0] = 1.0
    S[0, 1:] = S[1:, 0] = signs * delta * sd_full
    S[1:, 1:] = np.kron(np.eye(n), Sigma) * np.outer(signs, signs)
    s = np.sqrt(np.diag(S))
    return BorderedScale(S, s, S / np.outer(s, s))


def _clamp(est, factor=2.0):
    v = min(max(factor * est.value, 0.0), 1.0)
    return ProbEstimate(v, factor * est.error, est.samples_used)


def likelihood_sn(data, beta, Sigma, alpha_s, accuracy=None, seed=0):
    """``2 Phi_{nM+1}(D* beta; Sigma*)``."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    ss = build_sign_structure(data)
    bs = build_bordered_scale(Sigma, alpha_s, data.n, ss.signs)
    est = mvn_cdf(GaussianProblem(ss.Dstar @ beta, bs.SigmaStar), accuracy, seed)
    return _clamp(est)


def likelihood_st(data, beta, Sigma, alpha_s, df, prior_mean, prior_cov, accuracy=None, seed=0):
    """``2 T_{nM+1}(c D* beta; Sigma*, nu+p)``, ``c = sqrt((nu+p)/(nu+q(beta)))``.

    ``q(beta)`` is the Mahalanobis distance of ``beta`` under the prior, so the
    panel probability depends on the prior: coefficients and latent errors are
    jointly elliptical and hence not independent.
    """
    if not (df > 0):
        raise ValidationError("invalid df")
    beta = np.asarray(beta, dtype=float).reshape(-1)
    p = beta.shape[0]
    diff = beta - np.asarray(prior_mean, dtype=float)
    L, _ = robust_cholesky(np.asarray(prior_cov, dtype=float))
    z = np.linalg.solve(L, diff)
    q = float(z @ z)
    ss = build_sign_structure(data)
    bs = build_bordered_scale(Sigma, alpha_s, data.n, ss.signs)
    c = np.sqrt((df + p) / (df + q))
    est = mvt_cdf(StudentProblem(c * (ss.Dstar @ beta), bs.SigmaStar, df=df + p), accuracy, seed)
    return _clamp(est)


def outcome_index(y):
    """Integer code of flattened panels (first entry most significant)."""
    y = np.asarray(y).reshape(np.shape(y)[0], -1) if np.ndim(y) > 1 else np.asarray(y).reshape(1, -1)
    k = y.shape[1]
    return y.astype(np.int64) @ (1 << np.arange(k - 1, -1, -1, dtype=np.int64))


def all_outcomes(n, M):
    """Every ``n x M`` binary panel, ordered by :func:`outcome_index`."""
    k = n * M
    codes = np.arange(2**k)
    bits = (codes[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return bits.reshape(-1, n, M)


def sample_latent_errors(Sigma, alpha_s, n, count, rng, df=None, scale_factor=None):
    """Errors of the latent regression, shape ``(count, nM)``.

    For the t kernel ``scale_factor`` multiplies the scale (one value per draw
    or a scalar) and ``df`` is the conditional degrees of freedom.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    M = Sigma.shape[0]
    params = SkewEllipticalParams(np.zeros(n * M), np.kron(np.eye(n), Sigma), replicate_alpha(alpha_s, n, M))
    eps = sample_sn(params, count, rng)
    if df is not None:
        w = rng.chisquare(df, count) / df
        eps = eps / np.sqrt(w)[:, None]
        if scale_factor is not None:
            eps = eps * np.sqrt(scale_factor)
    return eps


def simulate_panel(beta, Sigma, alpha_s, X, count, rng, df=None, prior_mean=None, prior_cov=None):
    """Simulated panels, shape ``(count, n, M)``."""
    beta = np.asarray(beta, dtype=float)
    M = np.atleast_2d(Sigma).shape[0]
    X = np.asarray(X, dtype=float)
    n = X.shape[0] // M
    factor = None
    dof = None
    if df is not None:
        if prior_mean is None or prior_cov is None:
            raise ValidationError("the skew-t link needs the coefficient prior (mean and covariance)")
        p = beta.shape[0]
        diff = beta - np.asarray(prior_mean, dtype=float)
        q = float(diff @ np.linalg.solve(np.asarray(prior_cov, dtype=float), diff))
        factor = (df + q) / (df + p)
        dof = df + p
    eps = sample_latent_errors(Sigma, alpha_s, n, count, rng, dof, factor)
    ystar = X @ beta + eps
    return (ystar > 0).astype(np.int8).reshape(count, n, M)


def generative_oracle(beta, Sigma, alpha_s, X, count, seed=None, df=None, prior_mean=None, prior_cov=None):
    """Empirical outcome frequencies from simulating the latent model.

    Returns an array of length ``2**(nM)`` indexed by :func:`outcome_index`.
    The t kernel needs the coefficient prior, which enters the conditional
    law of the errors given ``beta``.
    """
    rng = np.random.default_rng(seed)
    M = np.atleast_2d(Sigma).shape[0]
    nM = np.asarray(X).shape[0]
    if nM > 20:
        raise ValidationError("generative_oracle enumerates outcomes; nM must be small")
    counts = np.zeros(2**nM, dtype=np.int64)
    done = 0
    block = 200_000
    while done < count:
        k = min(block, count - done)
        ys = simulate_panel(beta, Sigma, alpha_s, X, k, rng, df, prior_mean, prior_cov)
        counts += np.bincount(outcome_index(ys.reshape(k, -1)), minlength=2**nM)
        done += k
    return counts / count


def posterior_params(data, prior_mean, prior_cov, Sigma, alpha_s, df=None):
    """Unified skew posterior of the coefficients given the dependence parameters."""
    mu = np.asarray(prior_mean, dtype=float).reshape(-1)
    Omega = check_symmetric(np.atleast_2d(np.asarray(prior_cov, dtype=float)), "prior_cov")
    if mu.shape != (data.p,) or Omega.shape != (data.p, data.p):
        raise ValidationError("prior dimensions do not match the design")
    if df is not None and not (df > 0):
        raise ValidationError("invalid df")
    ss = build_sign_structure(data)
    bs = build_bordered_scale(Sigma, alpha_s, data.n, ss.signs)
    omega = np.sqrt(np.diag(Omega))
    Lambda = (ss.Dstar * omega[None, :]) / bs.sigmaStar[:, None]
    tau = (ss.Dstar @ mu) / bs.sigmaStar
    df = None if df is None or np.isinf(df) else float(df)
    return SuePosterior(mu, Omega, Lambda, tau, bs.SigmaStarBar, df, omega)


def _representation(post):
    """Pieces of the additive representation ``mu + V0 + coef @ V1``."""
    Omega, om = post.Omega_post, post.omega
    Obar = Omega / np.outer(om, om)
    A = post.Gamma_post + post.Lambda_post @ Obar @ post.Lambda_post.T
    s = np.sqrt(np.diag(A))
    L, _ = robust_cholesky(A)
    G = (Omega / om[None, :]) @ post.Lambda_post.T
    AinvGt = cho_solve((L, True), G.T)
    cond = Omega - G @ AinvGt
    coef = AinvGt.T * s[None, :]
    R = A / np.outer(s, s)
    lower = -post.tau_post / s
    return coef, symmetric_sqrt(0.5 * (cond + cond.T)), R, lower


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_beta_sun(post, count, seed=None, return_diagnostics=False):
    """Exact draws from the unified skew-normal coefficient posterior."""
    if post.df is not None:
        raise ValidationError("sample_beta_sun needs the normal kernel")
    rng = _rng(seed)
    coef, root, R, lower = _representation(post)
    v0 = rng.standard_normal((count, root.shape[0])) @ root
    res = sample_tmvn(TruncationProblem(lower, R), count, rng)
    draws = post.mu_post + v0 + res.draws @ coef.T
    return (draws, res.diagnostics) if return_diagnostics else draws


def sample_beta_sut(post, count, seed=None, return_diagnostics=False):
    """Exact draws from the unified skew-t coefficient posterior."""
    if post.df is None:
        raise ValidationError("sample_beta_sut needs the student kernel")
    rng = _rng(seed)
    nu = post.df
    coef, root, R, lower = _representation(post)
    m = R.shape[0]
    dof = nu + m
    u0 = rng.standard_normal((count, root.shape[0])) @ root
    u0 = u0 / np.sqrt(rng.chisquare(dof, count) / dof)[:, None]
    res = sample_tmvt(TruncationProblem(lower, R, nu), count, rng)
    u1 = res.draws
    Lr, _ = robust_cholesky(R)
    z = np.linalg.solve(Lr, u1.T)
    quad = np.sum(z * z, axis=0)
    draws = post.mu_post + np.sqrt((nu + quad) / dof)[:, None] * u0 + u1 @ coef.T
    return (draws, res.diagnostics) if return_diagnostics else draws
