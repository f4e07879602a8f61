"""Command implementations, callable without the argument parser."""
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ValidationError
from ..linkmodel import ModelData, likelihood_sn, likelihood_st, simulate_panel
from ..mcmc import dic, model_loglik, n_corr_params, run_chain
from ..mvprob import QMCSettings
from ..skewdist import SkewEllipticalParams, sample_sn, sample_st, sn_pdf, st_pdf
from . import io
from .config import SIM_DEFAULTS, SIM_KEYS, chain_config, square_from_flat, typed

FIT_DEFAULTS = {"iterations": 25_000, "burn_in": 5_000}
SIM_CHAIN_DEFAULTS = {"iterations": 10_000, "burn_in": 3_000}


@dataclass(frozen=True)
class ModelSpec:
    tag: str
    df: float
    alpha_free: bool
    corr_free: bool

    def n_params(self, p, M):
        return p + (n_corr_params(M) if self.corr_free else 0) + (M if self.alpha_free else 0)


FIXED_TAGS = {
    "skew_t_5": ModelSpec("skew_t_5", 5.0, True, True),
    "skew_t_10": ModelSpec("skew_t_10", 10.0, True, True),
    "skew_t_20": ModelSpec("skew_t_20", 20.0, True, True),
    "skew_normal": ModelSpec("skew_normal", None, True, True),
    "probit": ModelSpec("probit", None, False, True),
    "independent_probit": ModelSpec("independent_probit", None, False, False),
}


def parse_model(tag):
    if tag in FIXED_TAGS:
        return FIXED_TAGS[tag]
    m = re.fullmatch(r"skew_t:([0-9.eE+-]+)", tag or "")
    if m:
        try:
            nu = float(m.group(1))
        except ValueError:
            nu = float("nan")
        if nu > 0 and np.isfinite(nu):
            return ModelSpec(tag, nu, True, True)
        raise ValidationError(f"invalid df in model tag {tag!r}")
    raise ValidationError(f"unknown model {tag!r}; choose from {sorted(FIXED_TAGS)} or skew_t:<df>")


def param_names(p, M, tag_info, beta_names=None):
    names = [f"beta_{k + 1}" for k in range(p)] if beta_names is None else [f"beta[{b}]" for b in beta_names]
    if tag_info.corr_free:
        names += [f"sigma_bar_{i + 1}{j + 1}" for i, j in zip(*np.tril_indices(M, -1))]
    if tag_info.alpha_free:
        names += [f"alpha_{j + 1}" for j in range(M)]
    return names


# -- simulate ---------------------------------------------------------------

def temporal_design(n):
    """Intercept, time and squared time, the latter two standardized."""
    t = np.arange(1, n + 1, dtype=float)
    cols = [t, t * t]
    out = [np.ones(n)]
    for c in cols:
        sd = c.std(ddof=1) if n > 1 else 1.0
        out.append((c - c.mean()) / (sd if sd > 0 else 1.0))
    return np.column_stack(out)


def simulate(values, out_dir):
    """Generate a panel, its design and a truth file.  Returns the paths."""
    raw = dict(SIM_DEFAULTS)
    raw.update({k: v for k, v in values.items()})
    v = typed(raw, SIM_KEYS)
    n = int(v["n"])
    if n < 1:
        raise ValidationError("n must be at least 1")
    beta = np.asarray(v["beta"], dtype=float)
    alpha = np.asarray(v["alpha_s"], dtype=float)
    S = square_from_flat(np.asarray(v["sigma_bar"], dtype=float), "sigma_bar")
    M, p = S.shape[0], beta.size
    if alpha.size != M:
        raise ValidationError("alpha_s length must match sigma_bar")
    if not np.allclose(np.diag(S), 1.0) or not np.allclose(S, S.T):
        raise ValidationError("sigma_bar must be a symmetric unit-diagonal matrix")
    if np.min(np.linalg.eigvalsh(S)) <= 1e-10:
        raise ValidationError("sigma_bar is not positive definite")
    df = float(v["df"])
    df = None if np.isinf(df) else df
    rng = np.random.default_rng(int(v["seed"]))
    if v["design"] == "random":
        X = np.column_stack([np.ones(n * M), rng.standard_normal((n * M, p - 1))])
    elif v["design"] == "temporal":
        if p != 3:
            raise ValidationError("temporal design has 3 columns")
        X = io.expand_design(temporal_design(n), n, M, "shared")
    else:
        raise ValidationError(f"unknown design {v['design']!r}")
    prior_var = float(v["prior_var"])
    y = simulate_panel(beta, S, alpha, X, 1, rng, df, np.zeros(p), prior_var * np.eye(p))[0]
    io.ensure_dir(out_dir)
    meta = io.provenance(seed=int(v["seed"]), model="simulate")
    panel_path = os.path.join(out_dir, "panel.csv")
    design_path = os.path.join(out_dir, "design.csv")
    io.write_csv(panel_path, [f"y{j + 1}" for j in range(M)], [[str(int(c)) for c in r] for r in y], meta)
    io.write_csv(design_path, [f"x{k + 1}" for k in range(p)], X, meta)
    truth = {
        "n": n,
        "beta": beta.tolist(),
        "alpha_s": alpha.tolist(),
        "sigma_bar": S.tolist(),
        "df": df,
        "seed": int(v["seed"]),
        "prior_var": prior_var,
        "design": v["design"],
        "panel_hash": io.panel_hash(y),
    }
    truth_path = os.path.join(out_dir, "truth.json")
    io.write_json(truth_path, truth)
    return panel_path, design_path, truth_path


# -- binarize ---------------------------------------------------------------

def binarize_values(X, q):
    """1 where a value exceeds its column's ``ceil(q n)``-th order statistic."""
    X = np.asarray(X, dtype=float)
    if not (0 <= q < 1):
        raise ValidationError("q must satisfy 0 <= q < 1")
    if np.any(np.isnan(X)):
        i, j = np.argwhere(np.isnan(X))[0]
        raise ValidationError(f"NaN at row {i + 1}, column {j + 1}")
    n = X.shape[0]
    k = max(int(np.ceil(q * n - 1e-12)), 1)
    thr = np.sort(X, axis=0)[k - 1]
    return (X > thr).astype(np.int8)


def binarize(in_path, q, out_path):
    header, X = io.read_table(in_path, "series")
    y = binarize_values(X, q)
    io.write_csv(out_path, header, [[str(int(c)) for c in r] for r in y], io.provenance(quantile=q, model="binarize"))
    return y


# -- fit --------------------------------------------------------------------

def standardize_columns(X):
    """Standardize every non-constant column; returns the matrix and the transform."""
    X = np.array(X, dtype=float)
    transform = []
    for k in range(X.shape[1]):
        c = X[:, k]
        sd = c.std(ddof=1) if c.size > 1 else 0.0
        if sd > 0:
            m = c.mean()
            X[:, k] = (c - m) / sd
            transform.append((k, float(m), float(sd)))
    return X, transform


def load_model_data(panel_path, design_path, layout="shared", standardize=False):
    names, y = io.load_panel(panel_path)
    n, M = y.shape
    if not os.path.exists(design_path):
        raise ValidationError(f"design file {design_path} does not exist")
    header, raw = io.read_table(design_path, "design")
    transform = []
    if standardize:
        raw, transform = standardize_columns(raw)
    X = io.expand_design(raw, n, M, layout)
    if layout == "blocks":
        header = [f"{h}_{j + 1}" for j in range(M) for h in header]
    return ModelData(y, X, layout), names, header, transform


def summary_rows(draws):
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ValidationError("no draws to summarize")
    mean = draws.mean(axis=0)
    sd = draws.std(axis=0, ddof=1) if draws.shape[0] > 1 else np.zeros(draws.shape[1])
    lo, hi = np.quantile(draws, [0.025, 0.975], axis=0)
    return mean, sd, lo, hi


def write_summary(path, names, draws, meta):
    mean, sd, lo, hi = summary_rows(draws)
    rows = [[nm, mean[k], sd[k], lo[k], hi[k]] for k, nm in enumerate(names)]
    io.write_csv(path, ["parameter", "mean", "sd", "q2.5", "q97.5"], rows, meta)


def chain_matrix(draws, tag_info):
    blocks = [draws.beta]
    if tag_info.corr_free:
        blocks.append(draws.sigma_bar)
    if tag_info.alpha_free:
        blocks.append(draws.alpha_s)
    return np.hstack(blocks)


def _run(args):
    data, config = args
    return run_chain(data, config)


def derived_seed(seed, k):
    if k == 0:
        return int(seed)
    return int(np.random.SeedSequence(int(seed), spawn_key=(k,)).generate_state(1, np.uint64)[0] >> np.uint64(1))


def fit(model, panel_path, design_path, out_dir, values=None, layout="shared", standardize=False, chains=1,
        defaults=FIT_DEFAULTS):
    """Fit one model tag; writes draws.csv, summary.csv, fit.json and log.txt."""
    tag_info = parse_model(model)
    data, _, header, transform = load_model_data(panel_path, design_path, layout, standardize)
    config = chain_config(values or {}, data.p, tag_info.df, tag_info.alpha_free, tag_info.corr_free, defaults)
    chains = int(chains)
    if chains < 1:
        raise ValidationError("chains must be at least 1")
    configs = [replace(config, seed=derived_seed(config.seed, k)) for k in range(chains)]
    if chains == 1:
        results = [run_chain(data, configs[0])]
    else:
        with ProcessPoolExecutor(max_workers=chains) as pool:
            results = list(pool.map(_run, [(data, c) for c in configs]))
    io.ensure_dir(out_dir)
    phash = io.panel_hash(data.y)
    reports = []
    for k, (cfg, draws) in enumerate(zip(configs, results)):
        target = out_dir if chains == 1 else io.ensure_dir(os.path.join(out_dir, f"chain_{k + 1}"))
        reports.append(write_fit(target, tag_info, data, cfg, draws, header, transform, phash, layout))
    return reports


def write_fit(out_dir, tag_info, data, config, draws, header, transform, phash, layout):
    names = param_names(data.p, data.M, tag_info)
    meta = io.provenance(seed=config.seed, model=tag_info.tag)
    mat = chain_matrix(draws, tag_info)
    io.write_csv(os.path.join(out_dir, "draws.csv"), names, mat, meta)
    write_summary(os.path.join(out_dir, "summary.csv"), names, mat, meta)
    rep = dic(draws, data, config, seed=config.seed)
    record = {
        "model": tag_info.tag,
        "df": tag_info.df,
        "n": data.n,
        "M": data.M,
        "p": data.p,
        "layout": layout,
        "n_params": tag_info.n_params(data.p, data.M),
        "parameters": names,
        "panel_hash": phash,
        "seed": config.seed,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "acceptance_rate": draws.acceptance_rate,
        "dic": rep.dic,
        "p_d": rep.p_d,
        "d_bar": rep.d_bar,
        "d_at_mean": rep.d_at_mean,
        "sampler": draws.diagnostics,
        "version": meta["version"],
    }
    io.write_json(os.path.join(out_dir, "fit.json"), record)
    lines = [
        f"model: {tag_info.tag}",
        f"seed: {config.seed}",
        f"iterations: {config.iterations} (burn-in {config.burn_in})",
        f"design columns: {', '.join(header)}",
        f"mh acceptance rate: {draws.acceptance_rate:.4f}",
        f"admissibility guard rejections: {draws.diagnostics['guard_rejections']}",
        f"coefficient sampler tiers: {draws.diagnostics['sampler_methods']}",
        f"lowest tilted acceptance estimate: {draws.diagnostics['min_sampler_acceptance']:.3g}",
        f"DIC: {rep.dic:.4f} (p_D {rep.p_d:.4f}, D(mean) {rep.d_at_mean:.4f})",
    ]
    if transform:
        desc = "; ".join(f"column {k + 1}: (x - {m!r}) / {s!r}" for k, m, s in transform)
        lines.append(f"standardized: {desc}")
    else:
        lines.append("standardized: no")
    with open(os.path.join(out_dir, "log.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return record


# -- summarize / compare ------------------------------------------------------

def summarize(draws_path, out_path):
    names, mat = io.read_table(draws_path, "draws")
    write_summary(out_path, names, mat, io.provenance(source=os.path.basename(draws_path), model="summarize"))
    return summary_rows(mat)


def compare(dirs, out_path):
    if len(dirs) < 2:
        raise ValidationError("compare needs at least two fit directories")
    recs = [io.read_json(os.path.join(d, "fit.json")) for d in dirs]
    hashes = {r["panel_hash"] for r in recs}
    if len(hashes) != 1:
        raise ValidationError("fits were run on different panels")
    recs = sorted(recs, key=lambda r: (r["dic"], r["model"]))
    best = recs[0]["dic"]
    rows = [[r["model"], str(r["n_params"]), r["dic"], r["p_d"], "*" if r["dic"] == best else ""] for r in recs]
    io.write_csv(out_path, ["model", "n_params", "dic", "p_d", "best"], rows,
                 io.provenance(panel_hash=recs[0]["panel_hash"], model="compare"))
    return rows


# -- debug commands -------------------------------------------------------------

PROB_KEYS = {
    "panel": str, "design": str, "layout": str, "beta": None, "sigma_bar": None, "alpha_s": None,
    "df": None, "prior_mean": None, "prior_var": float, "seed": int, "abs_tol": float, "rel_tol": float,
}


def prob(mode, values):
    from .config import _float, _floats

    if mode not in ("sn", "st"):
        raise ValidationError("mode must be sn or st")
    for key in ("panel", "design", "beta", "sigma_bar", "alpha_s"):
        if key not in values:
            raise ValidationError(f"missing input {key!r}")
    data, _, _, _ = load_model_data(values["panel"], values["design"], values.get("layout", "shared"))
    beta = _floats(values["beta"])
    S = square_from_flat(_floats(values["sigma_bar"]), "sigma_bar")
    alpha = _floats(values["alpha_s"])
    acc = QMCSettings(abs_tol=float(values.get("abs_tol", 1e-4)), rel_tol=float(values.get("rel_tol", 0.0)))
    seed = int(values.get("seed", 0))
    if mode == "sn":
        est = likelihood_sn(data, beta, S, alpha, acc, seed)
    else:
        if "df" not in values:
            raise ValidationError("mode st needs df")
        p = data.p
        mu = _floats(values["prior_mean"]) if "prior_mean" in values else np.zeros(p)
        est = likelihood_st(data, beta, S, alpha, _float(values["df"]), mu,
                            float(values.get("prior_var", 25.0)) * np.eye(p), acc, seed)
    return est


def skew_params(xi, sigma, alpha, df):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    S = square_from_flat(np.asarray(sigma, dtype=float), "sigma")
    return SkewEllipticalParams(xi, S, np.asarray(alpha, dtype=float), None if df is None or np.isinf(df) else df)


def sample_draws(params, count, seed):
    return (sample_sn if params.df is None else sample_st)(params, count, seed)


def pdf_values(params, x):
    return (sn_pdf if params.df is None else st_pdf)(x, params)


__all__ = [
    "parse_model", "simulate", "binarize", "fit", "summarize", "compare", "prob",
    "model_loglik", "FIT_DEFAULTS", "SIM_CHAIN_DEFAULTS",
]
