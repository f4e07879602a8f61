"""Normal and Student-t distribution functions, univariate and multivariate.

Multivariate probabilities ``P(X <= upper)`` are computed by the
separation-of-variables transform to the unit cube (with Genz-Bretz variable
reordering) and integrated with randomly shifted rank-1 lattice rules.  The
spread of the estimates across independent shifts gives the error estimate.
A Student-t problem adds one radial coordinate to the cube instead of nesting
normal integrals.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincinv, log_ndtr, ndtr, ndtri, stdtr

from . import _lattice
from ._linalg import as_square, check_symmetric, jitter_levels
from ._univariate import log_interval_prob, log_pdf, truncated_mean
from .errors import DimensionLimitError, NotPositiveDefiniteError, ValidationError

ERROR_SIGMAS = 3.5
_BLOCK = 24
_U_MIN = 1e-300
_U_MAX = 1.0 - 2.0**-53


@dataclass(frozen=True)
class GaussianProblem:
    """``P(X + shift <= upper)`` for ``X ~ N(0, covariance)``."""

    upper: np.ndarray
    covariance: np.ndarray
    shift: np.ndarray = None

    def __post_init__(self):
        cov = check_symmetric(as_square(self.covariance, "covariance"), "covariance")
        d = cov.shape[0]
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if upper.shape != (d,):
            raise ValidationError(f"upper must have length {d}")
        if np.any(np.isnan(upper)):
            raise ValidationError("upper has NaN entries")
        shift = np.zeros(d) if self.shift is None else np.atleast_1d(np.asarray(self.shift, dtype=float))
        if shift.shape != (d,) or not np.all(np.isfinite(shift)):
            raise ValidationError(f"shift must be a finite vector of length {d}")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "shift", shift)

    @property
    def dim(self):
        return self.upper.shape[0]


@dataclass(frozen=True)
class StudentProblem(GaussianProblem):
    """Central multivariate t with dispersion ``covariance`` and ``df`` degrees of freedom."""

    df: float = field(default=np.inf)

    def __post_init__(self):
        super().__post_init__()
        if not (self.df > 0):
            raise ValidationError("invalid df")


@dataclass(frozen=True)
class ProbEstimate:
    value: float
    error: float
    samples_used: int


@dataclass(frozen=True)
class QMCSettings:
    """Accuracy controls for the lattice integrator.

    Integration stops once the error estimate is below
    ``max(abs_tol, rel_tol * value)`` or ``max_evals`` integrand evaluations
    have been spent.  Each round uses ``n_shifts`` random shifts of a lattice
    whose size (rounded down to a prime) doubles from ``n_points``.
    """

    abs_tol: float = 1e-4
    rel_tol: float = 0.0
    n_shifts: int = 12
    n_points: int = 4096
    max_evals: int = 10_000_000
    max_dim: int = 1000


def _settings(accuracy):
    if accuracy is None:
        return QMCSettings()
    if isinstance(accuracy, QMCSettings):
        return accuracy
    return QMCSettings(abs_tol=float(accuracy))


def std_normal_cdf(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise ValidationError("invalid argument")
    out = ndtr(x)
    return float(out) if out.ndim == 0 else out


def student_t_cdf(x, df):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise ValidationError("invalid argument")
    if not (df > 0):
        raise ValidationError("invalid df")
    out = ndtr(x) if np.isinf(df) else stdtr(df, x)
    return float(out) if np.ndim(out) == 0 else out


def _pivoted_cholesky(cov, lower, upper):
    """Cholesky factor with Genz-Bretz ordering: at each step the variable
    with the smallest conditional interval probability goes next.

    Raises NotPositiveDefiniteError when a conditional variance collapses.
    """
    d = cov.shape[0]
    c = cov.copy()
    a = lower.copy()
    b = upper.copy()
    perm = np.arange(d)
    L = np.zeros((d, d))
    y = np.zeros(d)
    tol = 1e-14 * max(np.max(np.diag(c)), 1e-300)
    # one-sided limits (the common case) skip the generic interval code
    side = "upper" if np.all(a == -np.inf) else "lower" if np.all(b == np.inf) else None
    for k in range(d):
        idx = slice(k, d)
        s = L[idx, :k] @ y[:k]
        v = np.diag(c)[idx] - np.einsum("ij,ij->i", L[idx, :k], L[idx, :k])
        if np.min(v) <= tol:
            raise NotPositiveDefiniteError()
        sd = np.sqrt(v)
        with np.errstate(invalid="ignore"):
            lo = (a[idx] - s) / sd
            hi = (b[idx] - s) / sd
        if side == "upper":
            logp = log_ndtr(hi)
        elif side == "lower":
            logp = log_ndtr(-lo)
        else:
            logp = log_interval_prob(lo, hi)
        i = k + int(np.argmin(logp))
        if i != k:
            for arr in (perm, a, b, y):
                arr[[k, i]] = arr[[i, k]]
            c[[k, i], :] = c[[i, k], :]
            c[:, [k, i]] = c[:, [i, k]]
            L[[k, i], :k] = L[[i, k], :k]
        j = i - k
        L[k, k] = sd[j]
        L[k + 1 :, k] = (c[k + 1 :, k] - L[k + 1 :, :k] @ L[k, :k]) / L[k, k]
        if side == "upper":
            y[k] = -np.exp(log_pdf(hi[j]) - logp[j])
        elif side == "lower":
            y[k] = np.exp(log_pdf(lo[j]) - logp[j])
        else:
            y[k] = truncated_mean(lo[j], hi[j])
    return perm, L, a, b


def reorder_cholesky(covariance, upper, lower=None):
    """Variable reordering plus Cholesky factor for ``P(lower <= X <= upper)``.

    Returns ``(perm, L, upper[perm])`` with ``L @ L.T == covariance[perm][:, perm]``.
    The jitter policy is applied when the plain factorization breaks down.
    """
    cov = check_symmetric(as_square(covariance, "covariance"), "covariance")
    upper = np.asarray(upper, dtype=float)
    lower = np.full_like(upper, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    for eps in jitter_levels(cov):
        try:
            perm, L, _, b = _pivoted_cholesky(cov + eps * np.eye(len(cov)), lower, upper)
            return perm, L, b
        except NotPositiveDefiniteError:
            continue
    raise NotPositiveDefiniteError()


def _reorder_with_lower(cov, lower, upper):
    for eps in jitter_levels(cov):
        try:
            return _pivoted_cholesky(cov + eps * np.eye(len(cov)), lower, upper)
        except NotPositiveDefiniteError:
            continue
    raise NotPositiveDefiniteError()


def _integrand(Ls, bs, w, df):
    """Separation-of-variables integrand at cube points ``w`` (shape (q, N)).

    ``Ls`` is the row-scaled (unit diagonal) factor and ``bs`` the scaled
    upper limits.  Normal problems use q = d - 1 coordinates; Student-t
    problems use the first coordinate for the radial variable.
    """
    d = Ls.shape[0]
    n = w.shape[1]
    if df is None:
        r = 1.0
        wy = w
    else:
        w0 = np.clip(w[0], 1e-16, 1 - 1e-16)
        r = np.sqrt(2.0 * gammaincinv(0.5 * df, w0) / df)
        wy = w[1:]
    y = np.empty((d - 1, n))
    e = ndtr(bs[0] * r) * np.ones(n)
    f = e.copy()
    for k0 in range(1, d, _BLOCK):
        k1 = min(k0 + _BLOCK, d)
        sblk = Ls[k0:k1, : k0 - 1] @ y[: k0 - 1] if k0 > 1 else np.zeros((k1 - k0, n))
        for k in range(k0, k1):
            y[k - 1] = ndtri(np.clip(wy[k - 1] * e, _U_MIN, _U_MAX))
            s = sblk[k - k0] + Ls[k, k0 - 1 : k] @ y[k0 - 1 : k]
            e = ndtr(bs[k] * r - s)
            f *= e
    return f


def _qmc_round(Ls, bs, df, n, n_shifts, seed, round_index):
    d = Ls.shape[0]
    q = d - 1 if df is None else d
    est = np.empty(n_shifts)
    if q == 0:
        est[:] = ndtr(bs[0])
        return est
    for j in range(n_shifts):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(round_index, j))))
        pts = _lattice.lattice_points(q, n, rng.random(q))
        pts = np.abs(2.0 * pts - 1.0)
        est[j] = _integrand(Ls, bs, pts, df).mean()
    return est


def _integrate(upper, cov, df, settings, seed):
    d = upper.shape[0]
    if d > settings.max_dim:
        raise DimensionLimitError(d, settings.max_dim)
    if np.any(upper == -np.inf):
        return ProbEstimate(0.0, 0.0, 0)
    keep = np.isfinite(upper)
    if not np.any(keep):
        return ProbEstimate(1.0, 0.0, 0)
    # variables with an infinite limit integrate out exactly
    upper = upper[keep]
    cov = cov[np.ix_(keep, keep)]
    d = upper.shape[0]
    if d == 1:
        z = upper[0] / np.sqrt(cov[0, 0])
        return ProbEstimate(float(ndtr(z) if df is None else stdtr(df, z)), 0.0, 0)

    _, L, _, b = _reorder_with_lower(cov, np.full(d, -np.inf), upper)
    diag = np.diag(L)
    Ls = L / diag[:, None]
    bs = b / diag

    total = 0.0
    mean = 0.0
    used = 0
    err = np.inf
    r = 0
    while True:
        n = _lattice.largest_prime_at_most(settings.n_points * 2**r)
        est = _qmc_round(Ls, bs, df, n, settings.n_shifts, seed, r)
        used += n * settings.n_shifts
        m = est.mean()
        var = est.var(ddof=1) / settings.n_shifts if settings.n_shifts > 1 else 0.0
        if r == 0 or var == 0.0:
            mean, total_var = m, var
        else:
            # inverse-variance pooling of successive rounds
            wt = total_var / (total_var + var) if (total_var + var) > 0 else 0.5
            mean = wt * m + (1 - wt) * mean
            total_var = wt * var
        err = ERROR_SIGMAS * np.sqrt(total_var)
        target = max(settings.abs_tol, settings.rel_tol * abs(mean))
        next_cost = _lattice.largest_prime_at_most(settings.n_points * 2 ** (r + 1)) * settings.n_shifts
        if err <= target or total_var == 0.0 or used + next_cost > settings.max_evals:
            break
        r += 1
    return ProbEstimate(float(np.clip(mean, 0.0, 1.0)), float(err), int(used))


def mvn_cdf(problem, accuracy=None, seed=0):
    """Estimate ``P(X + shift <= upper)`` for a :class:`GaussianProblem`."""
    upper = problem.upper - problem.shift
    return _integrate(upper, problem.covariance, None, _settings(accuracy), seed)


def mvt_cdf(problem, accuracy=None, seed=0):
    """Estimate the central multivariate-t probability of a :class:`StudentProblem`.

    An infinite ``df`` falls back to :func:`mvn_cdf`.
    """
    df = getattr(problem, "df", np.inf)
    if not (df > 0):
        raise ValidationError("invalid df")
    upper = problem.upper - problem.shift
    return _integrate(upper, problem.covariance, None if np.isinf(df) else float(df), _settings(accuracy), seed)
