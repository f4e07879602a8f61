import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from _oracles import closed_form_posterior, grid_chisquare, grid_posterior, toy_data
from skewlink.errors import ValidationError
from skewlink.linkmodel import (
    ModelData,
    all_outcomes,
    build_bordered_scale,
    build_sign_structure,
    generative_oracle,
    likelihood_sn,
    likelihood_st,
    outcome_index,
    posterior_params,
    replicate_alpha,
    sample_beta_sun,
    sample_beta_sut,
)
from skewlink.mvprob import GaussianProblem, QMCSettings, mvn_cdf

SIG2 = np.array([[1.0, 0.5], [0.5, 1.0]])
X22 = np.array([[1.0, 0.3], [1.0, -0.4], [1.0, 0.8], [1.0, -1.1]])
B2 = np.array([0.2, -0.6])


def panel(y, X):
    return ModelData(np.asarray(y), np.asarray(X, dtype=float))


def enumerate_total(n, M, X, lik):
    return sum(lik(ModelData(y, X)).value for y in all_outcomes(n, M))


# -- data, signs, bordered scale -------------------------------------------------

def test_model_data_validation():
    with pytest.raises(ValidationError):
        ModelData(np.array([[0, 2]]), np.ones((2, 1)))
    with pytest.raises(ValidationError):
        ModelData(np.array([[0, 1]]), np.ones((3, 1)))
    with pytest.raises(ValidationError):
        ModelData(np.array([[0, 1]]), np.ones((2, 2)), layout="weird")
    with pytest.raises(ValidationError):
        ModelData(np.array([[0, 1]]), np.ones((2, 2)), layout="blocks")
    ok = ModelData(np.array([[0, 1]]), np.array([[1.0, 0.0], [0.0, 2.0]]), layout="blocks")
    assert (ok.n, ok.M, ok.p) == (1, 2, 2)
    with pytest.raises(ValidationError):
        ModelData(np.array([[0, 1]]), np.array([[1.0, np.nan], [0.0, 2.0]]))


def test_sign_structure_examples():
    X = np.ones((4, 1))
    assert np.array_equal(build_sign_structure(ModelData(np.ones((2, 2)), X)).D, np.eye(4))
    assert np.array_equal(build_sign_structure(ModelData(np.zeros((2, 2)), X)).D, -np.eye(4))
    ss = build_sign_structure(ModelData(np.array([[1, 0]]), np.ones((2, 1))))
    assert np.array_equal(ss.D, np.diag([1.0, -1.0]))


@st.composite
def panels(draw, max_n=3, max_M=3, p=2):
    n = draw(st.integers(1, max_n))
    M = draw(st.integers(1, max_M))
    y = np.array(draw(st.lists(st.integers(0, 1), min_size=n * M, max_size=n * M))).reshape(n, M)
    X = np.array(draw(st.lists(st.floats(-2, 2), min_size=n * M * p, max_size=n * M * p))).reshape(n * M, p)
    return ModelData(y, X)


@given(panels())
def test_sign_structure_invariants(data):
    ss = build_sign_structure(data)
    assert np.array_equal(ss.D @ ss.D, np.eye(data.n * data.M))
    assert np.all(ss.Dstar[0] == 0.0)
    assert np.array_equal(ss.Dstar[1:], ss.D @ data.X)
    again = build_sign_structure(data)
    assert np.array_equal(again.Dstar, ss.Dstar)


def test_bordered_scale_examples():
    # the border carries +delta' D sigma: the panel event is -D eps < D X beta
    # and -D eps has skewness -D alpha
    b = build_bordered_scale([[1.0]], [1.0], 1, [1.0])
    assert np.allclose(b.SigmaStar, [[1.0, 1 / np.sqrt(2)], [1 / np.sqrt(2), 1.0]])
    b = build_bordered_scale([[1.0]], [1.0], 2, [1.0, 1.0])
    assert np.allclose(b.SigmaStar[0, 1:], 1 / np.sqrt(3))
    assert np.allclose(b.SigmaStar[1:, 1:], np.eye(2))
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    b = build_bordered_scale(SIG2, [0.0, 0.0], 2, signs)
    D = np.diag(signs)
    expect = np.zeros((5, 5))
    expect[0, 0] = 1.0
    expect[1:, 1:] = D @ np.kron(np.eye(2), SIG2) @ D
    assert np.allclose(b.SigmaStar, expect)


@settings(max_examples=50, deadline=None)
@given(panels(), st.lists(st.floats(-6, 6), min_size=3, max_size=3), st.floats(-0.45, 0.9), st.floats(0.3, 3))
def test_bordered_scale_invariants(data, alpha, rho, scale):
    M = data.M
    Sigma = scale * ((1 - rho) * np.eye(M) + rho * np.ones((M, M)))
    ss = build_sign_structure(data)
    b = build_bordered_scale(Sigma, alpha[:M], data.n, ss.signs)
    S = b.SigmaStar
    assert np.allclose(S, S.T, rtol=0, atol=1e-14)
    assert S[0, 0] == 1.0
    assert np.linalg.eigvalsh(S).min() > -1e-10
    assert np.allclose(np.diag(b.SigmaStarBar), 1.0)
    assert np.allclose(b.SigmaStarBar, S / np.outer(b.sigmaStar, b.sigmaStar))


def test_replicate_alpha():
    assert np.array_equal(replicate_alpha([1.0, 2.0], 3, 2), [1, 2, 1, 2, 1, 2])
    assert np.array_equal(replicate_alpha(np.arange(6.0), 3, 2), np.arange(6.0))
    with pytest.raises(ValidationError):
        replicate_alpha([1.0, 2.0, 3.0], 2, 2)


# -- likelihood --------------------------------------------------------------------

def test_likelihood_probit_examples():
    d = toy_data(1, 1.0)
    assert abs(likelihood_sn(d, [0.0], [[1.0]], [0.0]).value - 0.5) < 1e-12
    assert abs(likelihood_sn(d, [1.0], [[1.0]], [0.0]).value - stats.norm.cdf(1.0)) < 1e-3


@pytest.mark.parametrize("alpha", [-3.0, -1.0, 0.5, 2.0, 6.0])
@pytest.mark.parametrize("xb", [-1.2, 0.0, 0.7])
def test_univariate_likelihood_is_skew_normal_tail(alpha, xb):
    # P(x b + eps > 0) = 1 - F(-x b) for eps ~ SN(0, 1, alpha)
    d1 = toy_data(1, 1.0)
    d0 = toy_data(0, 1.0)
    ref = stats.skewnorm(alpha).sf(-xb)
    acc = QMCSettings(abs_tol=1e-7)
    assert abs(likelihood_sn(d1, [xb], [[1.0]], [alpha], acc).value - ref) < 1e-6
    assert abs(likelihood_sn(d0, [xb], [[1.0]], [alpha], acc).value - (1 - ref)) < 1e-6


def test_probit_reduction_matches_direct_integral():
    y = np.array([[1, 0], [0, 1]])
    data = panel(y, X22)
    ss = build_sign_structure(data)
    direct = mvn_cdf(GaussianProblem(ss.D @ X22 @ B2, ss.D @ np.kron(np.eye(2), SIG2) @ ss.D), seed=1)
    est = likelihood_sn(data, B2, SIG2, [0.0, 0.0], seed=2)
    assert abs(est.value - direct.value) < est.error + direct.error + 1e-9


@pytest.mark.parametrize("alpha", [[0.0, 0.0], [2.0, -2.0], [-2.0, 1.0]])
def test_completeness_normal(alpha):
    tot = enumerate_total(2, 2, X22, lambda d: likelihood_sn(d, B2, SIG2, alpha))
    assert abs(tot - 1.0) < 4e-3


@pytest.mark.parametrize("alpha", [[0.0, 0.0], [2.0, -2.0]])
def test_completeness_student(alpha):
    fn = lambda d: likelihood_st(d, B2, SIG2, alpha, 5.0, [0.0, 0.0], 4 * np.eye(2))
    assert abs(enumerate_total(2, 2, X22, fn) - 1.0) < 4e-3


@given(st.integers(1, 4), st.integers(0, 10**6))
@settings(max_examples=8, deadline=None)
def test_completeness_random_shapes(nm, seed):
    rng = np.random.default_rng(seed)
    n, M = (nm, 1) if rng.random() < 0.5 else ((1, nm) if nm <= 3 else (2, 2))
    A = rng.uniform(-0.5, 0.5, (M, M))
    C = A @ A.T + np.eye(M)
    Sigma = C / np.sqrt(np.outer(np.diag(C), np.diag(C)))
    X = rng.normal(size=(n * M, 2))
    beta = rng.normal(size=2)
    alpha = rng.uniform(-3, 3, M)
    tot = enumerate_total(n, M, X, lambda d: likelihood_sn(d, beta, Sigma, alpha))
    assert abs(tot - 1.0) < 4e-3
    tot = enumerate_total(n, M, X, lambda d: likelihood_st(d, beta, Sigma, alpha, 7.0, np.zeros(2), np.eye(2)))
    assert abs(tot - 1.0) < 4e-3


def test_student_scaling_at_prior_mean():
    # with beta at the prior mean the scaling is sqrt((nu+p)/nu): compare with
    # the explicitly rescaled problem
    from skewlink.mvprob import StudentProblem, mvt_cdf

    data = panel([[1, 0], [1, 1]], X22)
    mu = B2.copy()
    est = likelihood_st(data, B2, SIG2, [1.0, -1.0], 5.0, mu, 3 * np.eye(2), seed=3)
    ss = build_sign_structure(data)
    bs = build_bordered_scale(SIG2, [1.0, -1.0], 2, ss.signs)
    ref = mvt_cdf(StudentProblem(np.sqrt(7 / 5) * ss.Dstar @ B2, bs.SigmaStar, df=7.0), seed=3)
    assert abs(est.value - 2 * ref.value) < 1e-12


def test_student_tends_to_normal():
    data = panel([[1, 0], [0, 0]], X22)
    a = likelihood_sn(data, B2, SIG2, [2.0, -2.0], seed=4)
    b = likelihood_st(data, B2, SIG2, [2.0, -2.0], 1e6, [0.0, 0.0], np.eye(2), seed=4)
    assert abs(a.value - b.value) < a.error + b.error + 1e-3


def test_student_invalid_df():
    with pytest.raises(ValidationError, match="invalid df"):
        likelihood_st(toy_data(), [0.0], [[1.0]], [0.0], 0.0, [0.0], [[1.0]])


def test_identifiability_rescaling():
    # blocks layout: dividing block j of beta by sigma_j and Sigma to its
    # correlation form leaves every panel probability unchanged
    sd = np.array([2.0, 0.5])
    Sigma = np.outer(sd, sd) * SIG2
    X = np.zeros((4, 4))
    X[0, :2] = [1.0, 0.3]
    X[1, 2:] = [1.0, -0.4]
    X[2, :2] = [1.0, 0.8]
    X[3, 2:] = [1.0, -1.1]
    beta = np.array([0.5, -1.0, 0.2, 0.4])
    beta_c = beta / np.repeat(sd, 2)
    alpha = [1.5, -2.0]
    for y in ([[1, 0], [0, 1]], [[1, 1], [0, 0]]):
        data = ModelData(np.array(y), X, layout="blocks")
        a = likelihood_sn(data, beta, Sigma, alpha, seed=5)
        b = likelihood_sn(data, beta_c, SIG2, alpha, seed=6)
        assert abs(a.value - b.value) < a.error + b.error + 1e-9


def test_likelihood_deterministic():
    data = panel([[1, 0], [0, 1]], X22)
    assert likelihood_sn(data, B2, SIG2, [1.0, 1.0], seed=9) == likelihood_sn(data, B2, SIG2, [1.0, 1.0], seed=9)


# -- generative oracle ---------------------------------------------------------------

def test_oracle_probit_and_orthant():
    f = generative_oracle([0.4], [[1.0]], [0.0], np.array([[1.0]]), 1_000_000, seed=1)
    se = np.sqrt(f[1] * (1 - f[1]) / 1e6)
    assert abs(f[1] - stats.norm.cdf(0.4)) < 3 * se
    assert abs(f.sum() - 1.0) < 1e-12
    f = generative_oracle([0.0], SIG2, [0.0, 0.0], np.ones((2, 1)), 1_000_000, seed=2)
    se = np.sqrt(f[3] * (1 - f[3]) / 1e6)
    assert abs(f[3] - 1 / 3) < 3 * se


def test_outcome_index_order():
    ys = all_outcomes(1, 3)
    assert np.array_equal(outcome_index(ys.reshape(8, -1)), np.arange(8))
    assert np.array_equal(ys[6], [[1, 1, 0]])


@pytest.mark.parametrize("df", [None, 5.0])
def test_likelihood_matches_oracle(df):
    alpha = np.array([2.0, -2.0])
    mu, Om = np.zeros(2), 2 * np.eye(2)
    X = X22[:2]
    freq = generative_oracle(B2, SIG2, alpha, X, 400_000, seed=3, df=df, prior_mean=mu, prior_cov=Om)
    for k, y in enumerate(all_outcomes(1, 2)):
        data = ModelData(y, X)
        est = likelihood_sn(data, B2, SIG2, alpha) if df is None else likelihood_st(data, B2, SIG2, alpha, df, mu, Om)
        se = np.sqrt(freq[k] * (1 - freq[k]) / 400_000)
        assert abs(est.value - freq[k]) <= 3 * (se + est.error)


def test_oracle_student_needs_prior():
    with pytest.raises(ValidationError):
        generative_oracle(B2, SIG2, [0, 0], X22[:2], 10, seed=0, df=5.0)


# -- posterior ---------------------------------------------------------------------------

def test_posterior_params_examples():
    data = toy_data(1, 1.0)
    post = posterior_params(data, [0.0], [[1.0]], [[1.0]], [0.0])
    assert np.allclose(post.Lambda_post.ravel(), [0.0, 1.0])
    assert np.allclose(post.tau_post, 0.0)
    assert post.kernel == "normal"
    data = panel([[1, 0], [0, 1]], X22)
    mu, Om = np.array([0.5, -0.2]), np.array([[2.0, 0.3], [0.3, 1.0]])
    post = posterior_params(data, mu, Om, SIG2, [1.0, -1.0], df=10.0)
    assert post.kernel == "student"
    assert np.array_equal(post.mu_post, mu) and np.array_equal(post.Omega_post, Om)
    ss = build_sign_structure(data)
    bs = build_bordered_scale(SIG2, [1.0, -1.0], 2, ss.signs)
    om = np.sqrt(np.diag(Om))
    assert np.allclose(post.Lambda_post, (ss.Dstar @ np.diag(om)) / bs.sigmaStar[:, None])
    assert np.allclose(post.tau_post, ss.Dstar @ mu / bs.sigmaStar)
    assert np.allclose(post.Gamma_post, bs.SigmaStarBar)
    assert np.allclose(np.diag(post.Gamma_post), 1.0)


def test_posterior_params_validation():
    with pytest.raises(ValidationError):
        posterior_params(toy_data(), [0.0, 0.0], np.eye(2), [[1.0]], [0.0])
    with pytest.raises(ValidationError):
        posterior_params(toy_data(), [0.0], [[1.0]], [[1.0]], [0.0], df=-1.0)


COARSE = np.arange(-6.0, 6.0 + 5e-3, 1e-2)
# t posteriors keep visible mass past +-6; the coarse tails carry it
TAILS = np.arange(6.1, 60.0 + 5e-2, 0.1)
WIDE = np.concatenate([-TAILS[::-1], COARSE, TAILS])


@pytest.mark.parametrize("df,alpha,y", [(None, 2.0, 1), (None, -1.5, 0), (5.0, 2.0, 1), (5.0, 0.0, 0)])
def test_conjugacy_on_coarse_grid(df, alpha, y):
    data = toy_data(y, 0.8)
    mu, Om = np.array([0.3]), np.array([[1.5]])
    grid, ref = grid_posterior(data, [[1.0]], [alpha], mu, Om, df, grid=COARSE if df is None else WIDE)
    dens, _ = closed_form_posterior(data, [[1.0]], [alpha], mu, Om, grid, df)
    assert np.max(np.abs(dens - ref)) < 1e-3


def test_sun_draws_fit_grid_density():
    data = toy_data(1, 0.8)
    mu, Om = np.array([0.3]), np.array([[1.5]])
    grid, ref = grid_posterior(data, [[1.0]], [2.0], mu, Om, None, grid=COARSE)
    post = posterior_params(data, mu, Om, [[1.0]], [2.0])
    draws = sample_beta_sun(post, 100_000, seed=0)[:, 0]
    assert grid_chisquare(draws, grid, ref).pvalue > 0.01


def test_posterior_mean_shifts_with_success():
    mu, Om = np.array([0.0]), np.eye(1)
    up = sample_beta_sun(posterior_params(toy_data(1, 1.0), mu, Om, [[1.0]], [1.0]), 20_000, seed=2)
    down = sample_beta_sun(posterior_params(toy_data(0, 1.0), mu, Om, [[1.0]], [1.0]), 20_000, seed=2)
    assert up.mean() > 0.1 and down.mean() < -0.1


def test_sut_tends_to_sun():
    data = panel([[1, 0], [0, 1]], X22)
    mu, Om = np.zeros(2), np.eye(2)
    a = sample_beta_sun(posterior_params(data, mu, Om, SIG2, [1.0, -1.0]), 30_000, seed=3)
    b = sample_beta_sut(posterior_params(data, mu, Om, SIG2, [1.0, -1.0], df=1e6), 30_000, seed=4)
    for k in range(2):
        assert stats.ks_2samp(a[:, k], b[:, k]).pvalue > 0.01


def test_posterior_samplers_deterministic_and_shaped():
    data = panel([[1, 0], [0, 1]], X22)
    mu, Om = np.zeros(2), np.eye(2)
    for df, fn in ((None, sample_beta_sun), (6.0, sample_beta_sut)):
        post = posterior_params(data, mu, Om, SIG2, [2.0, 0.0], df)
        a, diag = fn(post, 200, seed=5, return_diagnostics=True)
        assert a.shape == (200, 2)
        assert np.array_equal(a, fn(post, 200, seed=5))
        assert diag.method in ("rejection", "chain")
    with pytest.raises(ValidationError):
        sample_beta_sun(posterior_params(data, mu, Om, SIG2, [0, 0], 5.0), 3)
    with pytest.raises(ValidationError):
        sample_beta_sut(posterior_params(data, mu, Om, SIG2, [0, 0]), 3)


def test_multivariate_posterior_moments_against_importance_weights():
    # p=2: compare posterior means from exact draws with prior draws weighted
    # by the likelihood (independent oracle)
    data = panel([[1, 0], [0, 1]], X22)
    mu, Om = np.array([0.2, -0.1]), np.array([[1.0, 0.2], [0.2, 0.8]])
    alpha = [1.5, -1.0]
    draws = sample_beta_sun(posterior_params(data, mu, Om, SIG2, alpha), 40_000, seed=6)
    rng = np.random.default_rng(7)
    prior = rng.multivariate_normal(mu, Om, 3000)
    w = np.array([likelihood_sn(data, b, SIG2, alpha, None, 0).value for b in prior])
    w /= w.sum()
    ess = 1 / np.sum(w * w)
    ref = w @ prior
    sd = np.sqrt(w @ (prior - ref) ** 2)
    assert np.all(np.abs(draws.mean(0) - ref) < 4 * sd / np.sqrt(ess))
