"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are collected by ``conftest.py`` and printed in the terminal summary.
The two study-scale criteria (4 and 5) run full MCMC chains and dominate the
runtime of the whole test suite.
"""
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from _oracles import GRID_ACCURACY, closed_form_posterior, grid_chisquare, grid_posterior, panel_frequencies, toy_data
from conftest import ACCEPTANCE_LINES
from skewlink.cli import io as cli_io
from skewlink.cli import pipelines
from skewlink.linkmodel import (
    ModelData, all_outcomes, likelihood_sn, likelihood_st, posterior_params, sample_beta_sun, sample_beta_sut,
)
from skewlink.mvprob import GaussianProblem, StudentProblem, mvn_cdf, mvt_cdf
from skewlink.truncsample import TruncationProblem, sample_tmvn, sample_tmvt


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def thin(draws, ess):
    return draws[:: max(1, int(np.ceil(len(draws) / ess)))]


# -- 1: orthant probabilities ----------------------------------------------------------------

def test_criterion_1_orthant_exactness():
    start = time.perf_counter()
    worst = 0.0
    for rho in (-0.9, -0.5, 0.0, 0.5, 0.9):
        R = np.array([[1.0, rho], [rho, 1.0]])
        exact = 0.25 + np.arcsin(rho) / (2 * np.pi)
        for df in (3.0, 10.0, None):
            if df is None:
                est = mvn_cdf(GaussianProblem([0.0, 0.0], R), seed=0)
            else:
                est = mvt_cdf(StudentProblem([0.0, 0.0], R, df=df), seed=0)
            worst = max(worst, abs(est.value - exact))
    elapsed = time.perf_counter() - start
    ok = worst <= 5e-4 and elapsed < 5.0
    assert record(1, ok, f"max |error| {worst:.2e} (limit 5e-4), {elapsed:.2f} s (limit 5 s)")


# -- 2: likelihood against a generative oracle -------------------------------------------------

SIG2 = np.array([[1.0, 0.5], [0.5, 1.0]])
X22 = np.array([[1.0, 0.3], [1.0, -0.4], [1.0, 0.8], [1.0, -1.1]])
B2 = np.array([0.2, -0.6])
PRIOR_MEAN, PRIOR_COV = np.zeros(2), 2.0 * np.eye(2)
# one mixed-sign outcome per panel shape is compared with the oracle
COMPARED = {1: np.array([[1, 0]]), 2: np.array([[1, 0], [0, 1]])}
ORACLE_DRAWS = 1_000_000


def _panel_lik(data, df, alpha):
    if df is None:
        return likelihood_sn(data, B2, SIG2, alpha, seed=0)
    return likelihood_st(data, B2, SIG2, alpha, df, PRIOR_MEAN, PRIOR_COV, seed=0)


def test_criterion_2_likelihood_matches_oracle():
    start = time.perf_counter()
    worst_z, worst_total, rows = 0.0, 0.0, 0
    for df in (None, 5.0):
        for a in (0.0, 2.0, -2.0):
            alpha = np.array([a, a])
            for n in (1, 2):
                X = X22[: 2 * n]
                y = COMPARED[n]
                est = _panel_lik(ModelData(y, X), df, alpha)
                freq = panel_frequencies(B2, SIG2, alpha, X, ORACLE_DRAWS, seed=100 + rows, df=df,
                                         prior_mean=PRIOR_MEAN, prior_cov=PRIOR_COV)
                f = freq[int("".join(map(str, y.ravel())), 2)]
                # the reported error is a 3.5 sigma bound
                se = np.hypot(np.sqrt(f * (1 - f) / ORACLE_DRAWS), est.error / 3.5)
                worst_z = max(worst_z, abs(est.value - f) / se)
                total = sum(_panel_lik(ModelData(o, X), df, alpha).value for o in all_outcomes(n, 2))
                worst_total = max(worst_total, abs(total - 1.0))
                rows += 1
    elapsed = time.perf_counter() - start
    ok = rows == 12 and worst_z <= 3.0 and worst_total <= 4e-3 and elapsed < 600
    assert record(2, ok, f"{rows} settings, worst |z| {worst_z:.2f} (limit 3), "
                         f"worst |sum - 1| {worst_total:.1e} (limit 4e-3), {elapsed:.0f} s")


# -- 3: conjugacy of the coefficient posterior ------------------------------------------------

FINE = np.arange(-6.0, 6.0 + 5e-4, 1e-3)
# the t posterior has visible mass beyond +-6; coarse tails carry it in the normalization
TAILS = np.arange(6.1, 60.0 + 5e-2, 0.1)
WIDE = np.concatenate([-TAILS[::-1], FINE, TAILS])


def test_criterion_3_conjugacy():
    start = time.perf_counter()
    data = toy_data(1, 0.8)
    mu, Om, alpha = np.array([0.3]), np.array([[1.5]]), [2.0]
    sups, pvals = [], []
    for df, grid, sampler in ((None, FINE, sample_beta_sun), (5.0, WIDE, sample_beta_sut)):
        grid, ref = grid_posterior(data, [[1.0]], alpha, mu, Om, df, grid=grid)
        dens, _ = closed_form_posterior(data, [[1.0]], alpha, mu, Om, grid, df, GRID_ACCURACY)
        sups.append(float(np.max(np.abs(dens - ref))))
        post = posterior_params(data, mu, Om, [[1.0]], alpha, df)
        draws = sampler(post, 100_000, seed=0)[:, 0]
        pvals.append(grid_chisquare(draws, grid, ref).pvalue)
    elapsed = time.perf_counter() - start
    ok = max(sups) <= 1e-3 and min(pvals) >= 0.01 and elapsed < 300
    assert record(3, ok, f"sup-norm normal {sups[0]:.1e}, t {sups[1]:.1e} (limit 1e-3); "
                         f"chi-squared p normal {pvals[0]:.3f}, t {pvals[1]:.3f} (limit 0.01); {elapsed:.0f} s")


# -- 4: simulation study ----------------------------------------------------------------

REPORTED_SD = np.array([0.27, 0.18, 0.21])


def summary_table(path):
    rows = cli_io._read_rows(path)
    return {r[0]: [float(c) for c in r[1:]] for r in rows[1:]}


def test_criterion_4_simulation_study(tmp_path):
    start = time.perf_counter()
    paths = pipelines.simulate({}, tmp_path / "sim")
    truth = json.loads(open(paths[2]).read())
    rec = pipelines.fit("skew_t_20", paths[0], paths[1], tmp_path / "fit", {},
                        defaults=pipelines.SIM_CHAIN_DEFAULTS)[0]
    table = summary_table(tmp_path / "fit" / "summary.csv")
    beta_true = np.array(truth["beta"])
    means = np.array([table[f"beta_{k + 1}"][0] for k in range(3)])
    beta_ok = bool(np.all(np.abs(means - beta_true) <= 3 * REPORTED_SD))
    S = np.array(truth["sigma_bar"])
    truth_map = {f"beta_{k + 1}": beta_true[k] for k in range(3)}
    truth_map.update({f"sigma_bar_{i + 1}{j + 1}": S[i, j] for i, j in zip(*np.tril_indices(3, -1))})
    truth_map.update({f"alpha_{j + 1}": truth["alpha_s"][j] for j in range(3)})
    covered = {k: table[k][2] <= v <= table[k][3] for k, v in truth_map.items()}
    n_cov = sum(covered.values())
    n_dep = sum(v for k, v in covered.items() if not k.startswith("beta"))
    elapsed = time.perf_counter() - start
    ok = beta_ok and n_cov >= 6 and rec["iterations"] == 10_000 and rec["burn_in"] == 3_000
    assert record(4, ok, f"beta means {np.round(means, 3).tolist()} vs truth {beta_true.tolist()} "
                         f"(within 3 sd: {beta_ok}); 95% intervals cover {n_cov}/9 parameters "
                         f"({n_dep}/6 dependence); acceptance {rec['acceptance_rate']:.3f}; {elapsed / 60:.0f} min")


# -- 5: DIC ordering --------------------------------------------------------------------

C5_TRUTH = {"n": "36", "design": "temporal", "df": "inf", "beta": "-1.40,1.47,-1.01",
            "alpha_s": "1.65,-0.39,0.39", "sigma_bar": "1,0.27,0.62,0.27,1,0.78,0.62,0.78,1"}
C5_CHAIN = {"iterations": 2_000, "burn_in": 500}
C5_SEEDS = range(1, 11)


def test_criterion_5_dic_ordering(tmp_path):
    start = time.perf_counter()
    wins, gaps = 0, []
    for seed in C5_SEEDS:
        sim = dict(C5_TRUTH, seed=str(seed))
        panel, design, _ = pipelines.simulate(sim, tmp_path / f"sim{seed}")
        dic = {}
        for model in ("skew_normal", "independent_probit"):
            rec = pipelines.fit(model, panel, design, tmp_path / f"{model}{seed}", dict(C5_CHAIN, seed=seed))[0]
            dic[model] = rec["dic"]
        gaps.append(dic["independent_probit"] - dic["skew_normal"])
        wins += dic["skew_normal"] < dic["independent_probit"]
    elapsed = time.perf_counter() - start
    ok = wins >= 9 and elapsed < 3 * 3600
    assert record(5, ok, f"skew_normal has the lower DIC in {wins}/10 seeds (need 9); "
                         f"median gap {np.median(gaps):.2f}; {elapsed / 60:.0f} min")


# -- 6: truncated sampler --------------------------------------------------------------

def test_criterion_6_truncated_sampler():
    half = sample_tmvn(TruncationProblem([0.0], [[1.0]]), 100_000, seed=1)
    mean_err = abs(half.draws.mean() - np.sqrt(2 / np.pi))
    R = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.4], [0.3, 0.4, 1.0]])
    lower = np.array([0.3, -0.5, 0.8])
    feasible = bool(np.all(half.draws >= 0.0))
    ks = []
    for df in (None, 4.0):
        prob = TruncationProblem(lower, R, df)
        sampler = sample_tmvn if df is None else sample_tmvt
        rej = sampler(prob, 20_000, seed=2, method="rejection")
        chain = sampler(prob, 20_000, seed=3, method="chain")
        feasible &= bool(np.all(rej.draws >= lower) and np.all(chain.draws >= lower))
        chain_draws = thin(chain.draws, chain.diagnostics.ess)
        ks += [stats.ks_2samp(rej.draws[:, k], chain_draws[:, k]).pvalue for k in range(3)]
    rng = np.random.default_rng(4)
    for _ in range(20):
        d = int(rng.integers(1, 8))
        A = rng.uniform(-1, 1, (d, d))
        prob = TruncationProblem(rng.uniform(-2, 2, d), A @ A.T + 0.2 * np.eye(d),
                                 [None, 2.0, 0.6][int(rng.integers(3))])
        s = (sample_tmvn if prob.df is None else sample_tmvt)(prob, 500, seed=int(rng.integers(2**31)))
        feasible &= bool(np.all(s.draws >= prob.lower))
    ok = mean_err <= 0.01 and feasible and min(ks) >= 0.01
    assert record(6, ok, f"half-normal mean error {mean_err:.4f} (limit 0.01); all draws feasible: {feasible}; "
                         f"rejection vs chain min KS p {min(ks):.3f} (limit 0.01)")


# -- 7: determinism ----------------------------------------------------------------------

PIPELINE = """
import sys
from skewlink.cli import main
out = sys.argv[1]
steps = [
    ["simulate", "--set", "n=8", "--set", "seed=5", "--out", f"{out}/sim"],
    ["fit", "--model", "skew_t_20", "--panel", f"{out}/sim/panel.csv", "--design", f"{out}/sim/design.csv",
     "--iterations", "60", "--burn-in", "20", "--seed", "5", "--out", f"{out}/st"],
    ["fit", "--model", "probit", "--panel", f"{out}/sim/panel.csv", "--design", f"{out}/sim/design.csv",
     "--iterations", "60", "--burn-in", "20", "--seed", "5", "--chains", "2", "--out", f"{out}/pr"],
    ["summarize", "--draws", f"{out}/st/draws.csv", "--out", f"{out}/summary.csv"],
    ["compare", f"{out}/st", f"{out}/pr/chain_1", "--out", f"{out}/compare.csv"],
    ["sample", "--xi", "0,0", "--sigma", "1,0.3,0.3,1", "--alpha", "2,-1", "--df", "4", "--count", "50",
     "--seed", "5", "--out", f"{out}/sample.csv"],
]
for argv in steps:
    code = main(argv)
    if code:
        sys.exit(code)
"""


def tree_digest(root):
    h = hashlib.sha256()
    for dirpath, dirnames, files in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def test_criterion_7_determinism(tmp_path):
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        # separate interpreters so no state is shared between the runs
        proc = subprocess.run([sys.executable, "-c", PIPELINE, str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        digests.append(tree_digest(out))
    n_files = sum(len(f) for _, _, f in os.walk(tmp_path / "a"))
    ok = digests[0] == digests[1] and n_files >= 15
    assert record(7, ok, f"{n_files} output files from two separate runs, identical bytes: {digests[0] == digests[1]}")
