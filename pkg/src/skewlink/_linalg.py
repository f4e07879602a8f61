import numpy as np

from .errors import NotPositiveDefiniteError, ValidationError

# Jitter policy: 1e-10 * trace/d on the diagonal, escalated x10 at most 3 times.
JITTER_BASE = 1e-10
JITTER_ESCALATIONS = 3


def as_square(a, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


def check_symmetric(a, name="matrix", rtol=1e-12):
    """Raise unless ``a`` is symmetric to ``rtol`` relative to its largest entry."""
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > rtol * scale:
        raise ValidationError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def jitter_levels(a):
    """Diagonal increments tried in order: 0, then the escalation ladder."""
    d = a.shape[0]
    base = JITTER_BASE * max(np.trace(a) / d, 1e-300)
    return [0.0] + [base * 10.0**k for k in range(JITTER_ESCALATIONS + 1)]


def robust_cholesky(a):
    """Lower Cholesky factor of ``a`` under the package jitter policy.

    Returns ``(L, jitter)`` where ``jitter`` is the diagonal increment that
    was needed (0.0 in the common case).
    """
    for eps in jitter_levels(a):
        try:
            return np.linalg.cholesky(a + eps * np.eye(a.shape[0])), eps
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError()


def is_positive_definite(a, tol=0.0):
    try:
        return bool(np.linalg.eigvalsh(a).min() > tol)
    except np.linalg.LinAlgError:
        return False


def symmetric_sqrt(a, clamp=-1e-10):
    """Symmetric square root via the eigen-decomposition.

    Eigenvalues in ``[clamp, 0)`` are treated as round-off and set to zero;
    anything more negative raises.
    """
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    if w.min() < clamp * max(1.0, w.max()):
        raise NotPositiveDefiniteError()
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def cov_to_corr(a):
    sd = np.sqrt(np.diag(a))
    return a / np.outer(sd, sd), sd


def solve_spd(chol, b):
    """Solve ``A x = b`` given the lower Cholesky factor of ``A``."""
    from scipy.linalg import cho_solve

    return cho_solve((chol, True), b)


def nearest_correlation(a, floor=1e-8):
    """Project a symmetric matrix onto correlation matrices.

    Eigenvalues are clipped at ``floor`` and the result is rescaled to unit
    diagonal.  Cheap and good enough for averaging MCMC draws.
    """
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, floor, None)
    b = (v * w) @ v.T
    c, _ = cov_to_corr(b)
    np.fill_diagonal(c, 1.0)
    return 0.5 * (c + c.T)
