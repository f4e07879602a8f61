"""Skew-normal, skew-t and their unified (SUN / SUT) extensions.

Parametrization: location ``xi``, scale ``Sigma`` with ``sigma = diag(Sigma)**0.5``
and correlation ``Sigma_bar``, skewness ``alpha`` acting on ``sigma^-1 (x - xi)``.
A ``df`` of ``None`` selects the normal kernel, a positive number the
Student-t kernel.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr, stdtr

from ._linalg import as_square, check_symmetric, cov_to_corr, is_positive_definite, symmetric_sqrt
from .errors import DegenerateTruncationError, NotPositiveDefiniteError, ValidationError
from .mvprob import GaussianProblem, StudentProblem, mvn_cdf, mvt_cdf

ADMISSIBLE_TOL = 1e-10


def _check_df(df):
    if df is not None and not (df > 0):
        raise ValidationError("invalid df")
    return None if df is None or np.isinf(df) else float(df)


@dataclass(frozen=True)
class SkewEllipticalParams:
    xi: np.ndarray
    Sigma: np.ndarray
    alpha: np.ndarray
    df: float = None

    def __post_init__(self):
        Sigma = check_symmetric(as_square(self.Sigma, "Sigma"), "Sigma")
        d = Sigma.shape[0]
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if xi.shape != (d,) or alpha.shape != (d,):
            raise ValidationError(f"xi and alpha must have length {d}")
        if not is_positive_definite(Sigma):
            raise NotPositiveDefiniteError("Sigma is not positive definite")
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "df", _check_df(self.df))

    @property
    def dim(self):
        return self.xi.shape[0]

    @property
    def kernel(self):
        return "normal" if self.df is None else "student"

    @property
    def sigma(self):
        return np.sqrt(np.diag(self.Sigma))

    @property
    def Sigma_bar(self):
        return cov_to_corr(self.Sigma)[0]


@dataclass(frozen=True)
class UnifiedSkewParams:
    xi: np.ndarray
    Sigma: np.ndarray
    Lambda: np.ndarray
    tau: np.ndarray
    Gamma: np.ndarray
    df: float = None

    def __post_init__(self):
        Sigma = check_symmetric(as_square(self.Sigma, "Sigma"), "Sigma")
        Gamma = check_symmetric(as_square(self.Gamma, "Gamma"), "Gamma")
        d, m = Sigma.shape[0], Gamma.shape[0]
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        Lambda = np.asarray(self.Lambda, dtype=float).reshape(m, d)
        if xi.shape != (d,) or tau.shape != (m,):
            raise ValidationError("xi / tau have inconsistent lengths")
        if not np.allclose(np.diag(Gamma), 1.0, atol=1e-10):
            raise ValidationError("Gamma must have unit diagonal")
        if not is_positive_definite(Sigma):
            raise NotPositiveDefiniteError("Sigma is not positive definite")
        for name, val in (("Sigma", Sigma), ("Gamma", Gamma), ("xi", xi), ("tau", tau), ("Lambda", Lambda)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "df", _check_df(self.df))
        if not is_positive_definite(self.skew_cov):
            raise NotPositiveDefiniteError("Gamma + Lambda Sigma_bar Lambda^T is not positive definite")

    @property
    def dim(self):
        return self.xi.shape[0]

    @property
    def m(self):
        return self.tau.shape[0]

    @property
    def sigma(self):
        return np.sqrt(np.diag(self.Sigma))

    @property
    def Sigma_bar(self):
        return cov_to_corr(self.Sigma)[0]

    @property
    def skew_cov(self):
        return self.Gamma + self.Lambda @ self.Sigma_bar @ self.Lambda.T


def delta_from_alpha(alpha, Sigma_bar):
    """``delta = (1 + a' S a)^(-1/2) S a`` for correlation matrix ``S``."""
    S = as_square(Sigma_bar, "Sigma_bar")
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if not is_positive_definite(S):
        raise NotPositiveDefiniteError("Sigma_bar is not positive definite")
    Sa = S @ a
    return Sa / np.sqrt(1.0 + a @ Sa)


def admissible(Sigma_bar, alpha):
    """True iff ``Sigma_bar`` and ``Sigma_bar - delta delta^T`` are numerically PD."""
    try:
        S = np.asarray(Sigma_bar, dtype=float)
        if not is_positive_definite(S, ADMISSIBLE_TOL):
            return False
        delta = delta_from_alpha(alpha, S)
        return is_positive_definite(S - np.outer(delta, delta), ADMISSIBLE_TOL)
    except Exception:
        return False


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or (x.ndim == 1 and d == 1):
        pts = x.reshape(-1, 1)
        return pts, x.ndim == 0
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValidationError(f"points must have dimension {d}")
        return x.reshape(1, d), True
    if x.shape[1] != d:
        raise ValidationError(f"points must have dimension {d}")
    return x, False


def _out(vals, scalar):
    return float(vals[0]) if scalar else vals


def _quad_form(z, Sigma):
    L = np.linalg.cholesky(Sigma)
    w = np.linalg.solve(L, z.T)
    return np.sum(w * w, axis=0), np.sum(np.log(np.diag(L)))


def normal_logpdf(z, Sigma):
    """Centered multivariate normal log density at rows of ``z``."""
    q, half_logdet = _quad_form(z, Sigma)
    d = Sigma.shape[0]
    return -0.5 * q - half_logdet - 0.5 * d * np.log(2 * np.pi)


def student_logpdf(z, Sigma, df):
    """Centered multivariate t log density, returning ``(logpdf, quadratic form)``."""
    q, half_logdet = _quad_form(z, Sigma)
    d = Sigma.shape[0]
    out = (
        gammaln(0.5 * (df + d))
        - gammaln(0.5 * df)
        - 0.5 * d * np.log(df * np.pi)
        - half_logdet
        - 0.5 * (df + d) * np.log1p(q / df)
    )
    return out, q


def sn_pdf(x, params):
    if params.kernel != "normal":
        raise ValidationError("sn_pdf needs the normal kernel")
    z, scalar = _points(x, params.dim)
    z = z - params.xi
    dens = 2.0 * np.exp(normal_logpdf(z, params.Sigma)) * ndtr((z / params.sigma) @ params.alpha)
    return _out(dens, scalar)


def st_pdf(x, params):
    if params.kernel != "student":
        raise ValidationError("st_pdf needs the student kernel")
    nu, d = params.df, params.dim
    z, scalar = _points(x, d)
    z = z - params.xi
    logt, q = student_logpdf(z, params.Sigma, nu)
    arg = ((z / params.sigma) @ params.alpha) * np.sqrt((nu + d) / (q + nu))
    return _out(2.0 * np.exp(logt) * stdtr(nu + d, arg), scalar)


def bordered_scale(Sigma, delta):
    """``[[1, -delta' sigma], [-sigma delta, Sigma]]``."""
    sigma = np.sqrt(np.diag(Sigma))
    d = Sigma.shape[0]
    out = np.empty((d + 1, d + 1))
    out[0, 0] = 1.0
    out[0, 1:] = out[1:, 0] = -sigma * delta
    out[1:, 1:] = Sigma
    return out


def se_cdf(x, params, accuracy=None, seed=0):
    """Distribution function as one (d+1)-variate normal or t probability."""
    z, scalar = _points(x, params.dim)
    delta = delta_from_alpha(params.alpha, params.Sigma_bar)
    S = bordered_scale(params.Sigma, delta)
    vals = np.empty(z.shape[0])
    for i, row in enumerate(z):
        upper = np.concatenate([[0.0], row - params.xi])
        if params.kernel == "normal":
            est = mvn_cdf(GaussianProblem(upper, S), accuracy, seed)
        else:
            est = mvt_cdf(StudentProblem(upper, S, df=params.df), accuracy, seed)
        vals[i] = min(2.0 * est.value, 1.0)
    return _out(vals, scalar)


def _orthant(upper, cov, df, accuracy, seed):
    m = cov.shape[0]
    if m == 1:
        z = upper[0] / np.sqrt(cov[0, 0])
        return float(ndtr(z) if df is None else stdtr(df, z))
    if df is None:
        return mvn_cdf(GaussianProblem(upper, cov), accuracy, seed).value
    return mvt_cdf(StudentProblem(upper, cov, df=df), accuracy, seed).value


def _sue_pdf(x, params, accuracy, seed):
    d, df = params.dim, params.df
    z, scalar = _points(x, d)
    z = z - params.xi
    denom = _orthant(params.tau, params.skew_cov, df, accuracy, seed)
    if denom < 1e-300:
        raise DegenerateTruncationError()
    arg = params.tau + (z / params.sigma) @ params.Lambda.T
    if df is None:
        base = np.exp(normal_logpdf(z, params.Sigma))
        df_num = None
    else:
        logt, q = student_logpdf(z, params.Sigma, df)
        base = np.exp(logt)
        arg = arg * np.sqrt((df + d) / (q + df))[:, None]
        df_num = df + d
    num = np.array([_orthant(a, params.Gamma, df_num, accuracy, seed) for a in arg])
    return _out(base * num / denom, scalar)


def sun_pdf(x, params, accuracy=None, seed=0):
    if params.df is not None:
        raise ValidationError("sun_pdf needs the normal kernel")
    return _sue_pdf(x, params, accuracy, seed)


def sut_pdf(x, params, accuracy=None, seed=0):
    if params.df is None:
        raise ValidationError("sut_pdf needs the student kernel")
    return _sue_pdf(x, params, accuracy, seed)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_sn(params, count, seed=None):
    """Convolution-type draws ``xi + sigma (delta |Z0| + A Z)`` with
    ``A = (Sigma_bar - delta delta')^(1/2)``.  Returns shape ``(count, d)``.

    With a student-kernel ``params`` this still yields the skew-normal part,
    which :func:`sample_st` then rescales.
    """
    rng = _rng(seed)
    S = params.Sigma_bar
    delta = delta_from_alpha(params.alpha, S)
    A = symmetric_sqrt(S - np.outer(delta, delta))
    z0 = np.abs(rng.standard_normal(count))
    z = rng.standard_normal((count, params.dim)) @ A
    return params.xi + (z0[:, None] * delta + z) * params.sigma


def sample_st(params, count, seed=None):
    """Skew-t draws as a chi-square scale mixture of skew-normal draws."""
    if params.kernel != "student":
        raise ValidationError("sample_st needs the student kernel")
    rng = _rng(seed)
    x = sample_sn(params, count, rng) - params.xi
    w = rng.chisquare(params.df, count) / params.df
    return params.xi + x / np.sqrt(w)[:, None]
