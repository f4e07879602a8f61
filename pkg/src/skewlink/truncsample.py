"""Exact draws from normal and Student-t laws truncated below a level.

The default tier is accept-reject with a minimax exponentially tilted
proposal: coordinates are drawn sequentially from shifted univariate
truncated normals, and for the t law a radial variable ``R ~ chi_nu`` is drawn
first from a tilted (shifted, truncated) normal proposal.  The tilting
parameters solve a saddle-point system in which the log-weight ``psi`` is
concave in the sample point and convex in the shift, so ``exp(psi - psi*)`` is a
valid acceptance probability.

If the estimated acceptance rate is below ``MIN_ACCEPTANCE`` (or the saddle
point cannot be found) a coordinatewise Gibbs chain is used instead.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import root
from scipy.special import gammaln, log_ndtr

from ._linalg import as_square, check_symmetric, robust_cholesky
from ._univariate import density_ratios, log_interval_prob, log_pdf, trandn
from .errors import ValidationError
from .mvprob import _reorder_with_lower

MIN_ACCEPTANCE = 1e-4
PILOT_SIZE = 128
CHAIN_BURN_IN = 200
MAX_BATCH = 20_000


@dataclass(frozen=True)
class TruncationProblem:
    """Law ``N(0, scale)`` (or multivariate t with ``df``) restricted to ``x >= lower``."""

    lower: np.ndarray
    scale: np.ndarray
    df: float = None

    def __post_init__(self):
        scale = check_symmetric(as_square(self.scale, "scale"), "scale")
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        if lower.shape != (scale.shape[0],):
            raise ValidationError("lower has the wrong length")
        if np.any(np.isnan(lower)) or np.any(lower == np.inf):
            raise ValidationError("lower must be finite or -inf")
        if self.df is not None and not (self.df > 0):
            raise ValidationError("invalid df")
        df = None if self.df is None or np.isinf(self.df) else float(self.df)
        robust_cholesky(scale)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "df", df)

    @property
    def dim(self):
        return self.lower.shape[0]


@dataclass(frozen=True)
class TruncDiagnostics:
    method: str
    acceptance_rate: float
    proposals: int
    burn_in: int
    log_prob: float
    ess: float


@dataclass(frozen=True)
class TruncSample:
    draws: np.ndarray
    diagnostics: TruncDiagnostics


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


class _Tilting:
    """Saddle-point tilting for one problem, after variable reordering."""

    def __init__(self, problem):
        d = problem.dim
        self.d = d
        self.df = problem.df
        upper = np.full(d, np.inf)
        self.perm, L, a, _ = _reorder_with_lower(problem.scale, problem.lower, upper)
        diag = np.diag(L)
        self.L = L
        self.Lo = L / diag[:, None] - np.eye(d)
        self.ls = a / diag
        self.fin = np.isfinite(self.ls)
        self.ls0 = np.where(self.fin, self.ls, 0.0)
        if self.df is not None:
            nu = self.df
            self.rt = np.sqrt(nu)
            self.const = 0.5 * np.log(2 * np.pi) - gammaln(0.5 * nu) - (0.5 * nu - 1) * np.log(2.0)

    # -- saddle system -------------------------------------------------
    def _unpack(self, v):
        d = self.d
        x = np.zeros(d)
        mu = np.zeros(d)
        x[: d - 1] = v[: d - 1]
        if self.df is None:
            mu[: d - 1] = v[d - 1 :]
            return x, mu, None, None
        r = v[d - 1]
        mu[: d - 1] = v[d : 2 * d - 1]
        return x, mu, r, v[2 * d - 1]

    def _bounds(self, x, mu, r):
        rr = 1.0 if r is None else r / self.rt
        c = self.Lo @ x
        lt = self.ls * rr - c - mu
        return lt

    def psi(self, v):
        x, mu, r, eta = self._unpack(v)
        lt = self._bounds(x, mu, r)
        val = np.sum(log_interval_prob(lt, np.inf) + 0.5 * mu * mu - x * mu)
        if r is not None:
            nu = self.df
            val += (nu - 1) * np.log(r) - eta * r + 0.5 * eta * eta + log_ndtr(eta) + self.const
        return float(val)

    def equations(self, v):
        d, Lo = self.d, self.Lo
        x, mu, r, eta = self._unpack(v)
        lt = self._bounds(x, mu, r)
        logp = log_interval_prob(lt, np.inf)
        pl, _ = density_ratios(lt, np.inf, logp)
        g = pl
        lt0 = np.where(self.fin, lt, 0.0)
        C = pl * (g - lt0)
        n = d - 1
        Fx = -mu[:n] + (Lo.T @ g)[:n]
        Fmu = mu[:n] - x[:n] + g[:n]
        Jxx = -(Lo.T * C) @ Lo
        Jxmu = -np.eye(n) - (Lo.T * C)[:n, :n]
        top = np.hstack([Jxx[:n, :n], Jxmu])
        bottom = np.hstack([Jxmu.T, np.diag(1.0 - C[:n])])
        if r is None:
            return np.concatenate([Fx, Fmu]), np.vstack([top, bottom])
        nu, rt, ls0 = self.df, self.rt, self.ls0
        E = C * ls0 / rt
        H = -E
        Fr = (nu - 1) / r - eta - np.sum(pl * ls0) / rt
        m = np.exp(log_pdf(eta) - log_ndtr(eta))
        Feta = eta - r + m
        Jrr = -(nu - 1) / r**2 + np.sum(H * ls0) / rt
        Jee = 1.0 - m * (eta + m)
        xr = (Lo.T @ E)[:n]
        N = 2 * d
        J = np.zeros((N, N))
        ix = slice(0, n)
        imu = slice(d, d + n)
        J[ix, ix] = Jxx[:n, :n]
        J[ix, imu] = Jxmu
        J[imu, ix] = Jxmu.T
        J[imu, imu] = np.diag(1.0 - C[:n])
        J[ix, n] = J[n, ix] = xr
        J[imu, n] = J[n, imu] = E[:n]
        J[n, n] = Jrr
        J[n, N - 1] = J[N - 1, n] = -1.0
        J[N - 1, N - 1] = Jee
        F = np.concatenate([Fx, [Fr], Fmu, [Feta]])
        return F, J

    def _starts(self):
        d = self.d
        if self.df is None:
            yield np.zeros(2 * (d - 1))
            return
        v0 = np.zeros(2 * d)
        v0[d - 1] = v0[2 * d - 1] = self.rt
        yield v0
        # warm start from the normal-kernel saddle point
        normal = _Tilting.__new__(_Tilting)
        normal.__dict__.update(self.__dict__)
        normal.df = None
        v = next(normal._starts())
        if v.size:
            sol = root(normal.equations, v, jac=True, method="hybr")
            if sol.success:
                v1 = v0.copy()
                v1[: d - 1] = sol.x[: d - 1]
                v1[d : 2 * d - 1] = sol.x[d - 1 :]
                yield v1

    def _newton(self, v, max_iter=50):
        """Damped Newton iteration on the saddle equations."""
        d = self.d
        F, J = self.equations(v)
        norm = np.max(np.abs(F))
        for _ in range(max_iter):
            if not np.isfinite(norm):
                return v, False
            if norm < 1e-10:
                return v, True
            try:
                step = np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                return v, False
            t = 1.0
            while t > 1e-4:
                w = v - t * step
                if self.df is None or w[d - 1] > 0:
                    F2, J2 = self.equations(w)
                    norm2 = np.max(np.abs(F2))
                    if np.isfinite(norm2) and norm2 < norm:
                        break
                t *= 0.5
            else:
                return v, False
            v, F, J, norm = w, F2, J2, norm2
        return v, norm < 1e-8

    def solve(self):
        """Find the saddle point; returns False if the solver fails."""
        d = self.d
        for v0 in self._starts():
            if not v0.size:
                v = v0
                break
            with np.errstate(all="ignore"):
                v, ok = self._newton(v0)
                if not ok:
                    sol = root(self.equations, v0, jac=True, method="hybr")
                    v = sol.x
                    ok = sol.success
                F, _ = self.equations(v)
            ok = ok and np.all(np.isfinite(F)) and np.max(np.abs(F)) < 1e-6
            if self.df is not None:
                ok = ok and v[d - 1] > 0
            if ok:
                break
        else:
            return False
        self.v = v
        self.x, self.mu, self.r, self.eta = self._unpack(v)
        self.psi_star = self.psi(v)
        return True

    # -- proposals -----------------------------------------------------
    def propose(self, n, rng):
        """Draw ``n`` tilted proposals; returns (draws in original order, log weights)."""
        d, Lo = self.d, self.Lo
        logw = np.zeros(n)
        if self.df is None:
            rr = np.ones(n)
        else:
            eta = self.eta
            r = eta + trandn(np.full(n, -eta), np.full(n, np.inf), rng)
            r = np.maximum(r, 1e-300)
            rr = r / self.rt
            nu = self.df
            logw += (nu - 1) * np.log(r) - eta * r + 0.5 * eta * eta + log_ndtr(eta) + self.const
        Y = np.zeros((d, n))
        for k in range(d):
            c = Lo[k, :k] @ Y[:k] if k else 0.0
            lt = self.ls[k] * rr - c - self.mu[k]
            z = trandn(lt, np.inf, rng)
            Y[k] = self.mu[k] + z
            logw += log_interval_prob(lt, np.inf) + 0.5 * self.mu[k] ** 2 - self.mu[k] * Y[k]
        X = (self.L @ Y) / rr
        out = np.empty((n, d))
        out[:, self.perm] = X.T
        return out, logw


def _chain(problem, count, rng, burn_in):
    """Coordinatewise Gibbs sampler; the t law adds a gamma mixing step."""
    d, df = problem.dim, problem.df
    lower = problem.lower
    Lc, _ = robust_cholesky(problem.scale)
    Q = np.linalg.inv(Lc).T @ np.linalg.inv(Lc)
    qd = np.diag(Q)
    x = np.maximum(np.where(np.isfinite(lower), lower, 0.0), 0.0)
    out = np.empty((count, d))
    for it in range(burn_in + count):
        scale = 1.0
        if df is not None:
            w = rng.gamma(0.5 * (df + d), 2.0 / (1.0 + x @ Q @ x / df))
            scale = np.sqrt(df / w)
        for k in range(d):
            m = x[k] - (Q[k] @ x) / qd[k]
            s = scale / np.sqrt(qd[k])
            x[k] = m + s * trandn((lower[k] - m) / s, np.inf, rng)[0]
        if it >= burn_in:
            out[it - burn_in] = x
    return out


def _ess(y):
    n = y.shape[0]
    if n < 10:
        return float("nan")
    y = y - y.mean()
    var = y @ y / n
    if var == 0:
        return float(n)
    rho_sum = 0.0
    for lag in range(1, min(n // 2, 1000)):
        rho = (y[:-lag] @ y[lag:]) / (n * var)
        if rho < 0.05:
            break
        rho_sum += rho
    return float(n / (1 + 2 * rho_sum))


class _Rejection:
    """Accept-reject bookkeeping; every proposal also feeds the acceptance estimate."""

    def __init__(self, tilt, dim):
        self.tilt = tilt
        self.kept = []
        self.got = 0
        self.proposals = 0
        self.weight_sum = 0.0
        self.valid = True
        self.dim = dim

    @property
    def rate(self):
        return self.weight_sum / self.proposals if self.proposals else float("nan")

    def run(self, n, rng):
        x, logw = self.tilt.propose(n, rng)
        excess = logw - self.tilt.psi_star
        if np.max(excess) > 1e-8:
            # the saddle point is not a valid bound
            self.valid = False
            return
        self.proposals += n
        self.weight_sum += float(np.sum(np.exp(excess)))
        keep = -np.log(rng.random(n)) > -excess
        self.kept.append(x[keep])
        self.got += int(keep.sum())

    def draws(self, count):
        if not self.kept:
            return np.empty((0, self.dim))
        return np.concatenate(self.kept)[:count]


def _sample(problem, count, seed, method, burn_in):
    rng = _rng(seed)
    count = int(count)
    if count < 0:
        raise ValidationError("count must be nonnegative")
    if method not in ("auto", "rejection", "chain"):
        raise ValidationError(f"unknown method {method!r}")
    rej = None
    if method != "chain" and (problem.df is None or problem.df >= 1):
        tilt = _Tilting(problem)
        if tilt.solve():
            rej = _Rejection(tilt, problem.dim)
            rej.run(max(16, min(PILOT_SIZE, 2 * count)), rng)
            if rej.valid and rej.rate < MIN_ACCEPTANCE and rej.proposals < PILOT_SIZE:
                rej.run(PILOT_SIZE - rej.proposals, rng)
            if not rej.valid:
                rej = None
    if method == "rejection" and rej is None:
        raise ValidationError("rejection tier unavailable for this problem")
    use_rejection = rej is not None and (method == "rejection" or rej.rate >= MIN_ACCEPTANCE)

    if use_rejection:
        budget = 100 * count / max(rej.rate, 1e-12) + 1e5
        while rej.got < count and rej.valid and rej.proposals < budget:
            need = (count - rej.got) / max(rej.rate, 1e-12)
            rej.run(int(min(MAX_BATCH, max(16, np.ceil(1.5 * need)))), rng)
        if rej.got >= count:
            draws = np.maximum(rej.draws(count), problem.lower)
            log_prob = rej.tilt.psi_star + np.log(rej.rate) if rej.rate > 0 else -np.inf
            diag = TruncDiagnostics("rejection", rej.rate, rej.proposals, 0, float(log_prob), float(count))
            return TruncSample(draws, diag)

    acc = rej.rate if rej is not None else float("nan")
    draws = _chain(problem, count, rng, burn_in)
    draws = np.maximum(draws, problem.lower)
    ess = _ess(draws[:, 0]) if count else float("nan")
    diag = TruncDiagnostics("chain", acc, rej.proposals if rej is not None else 0, burn_in, float("nan"), ess)
    return TruncSample(draws, diag)


def sample_tmvn(problem, count, seed=None, method="auto", burn_in=CHAIN_BURN_IN):
    """Draws from ``N(0, scale)`` restricted to ``x >= lower``.

    ``method`` is ``"auto"`` (tilted rejection unless its estimated acceptance
    rate is below ``MIN_ACCEPTANCE``), ``"rejection"`` or ``"chain"``.
    """
    if problem.df is not None:
        raise ValidationError("sample_tmvn needs a normal problem (df=None)")
    return _sample(problem, count, seed, method, burn_in)


def sample_tmvt(problem, count, seed=None, method="auto", burn_in=CHAIN_BURN_IN):
    """Draws from the central multivariate t truncated to ``x >= lower``."""
    if problem.df is None:
        return _sample(problem, count, seed, method, burn_in)
    return _sample(problem, count, seed, method, burn_in)
