"""Flat ``key = value`` configuration files with typed keys."""
import numpy as np

from ..errors import ValidationError
from ..mcmc import CHAIN_ACCURACY, ChainConfig
from ..mvprob import QMCSettings

STUDY_SIGMA_BAR = "1,0.5,0,0.5,1,-0.5,0,-0.5,1"


def _float(v):
    v = v.strip().lower()
    if v in ("inf", "infinity", "normal", "none"):
        return np.inf
    return float(v)


def _floats(v):
    return np.array([float(x) for x in v.replace(";", ",").split(",") if x.strip()])


def _bool(v):
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(v)
    return int(f)


CHAIN_KEYS = {
    "iterations": _int,
    "burn_in": _int,
    "h1": float,
    "h2": float,
    "seed": _int,
    "df": _float,
    "prior_mean": _floats,
    "prior_cov": _floats,
    "prior_var": float,
    "alpha_prior_var": float,
    "eta": float,
    "qmc_abs_tol": float,
    "qmc_rel_tol": float,
    "qmc_shifts": _int,
    "qmc_points": _int,
    "qmc_max_evals": _int,
    "alpha_free": _bool,
    "corr_free": _bool,
}

SIM_KEYS = {
    "n": _int,
    "beta": _floats,
    "alpha_s": _floats,
    "sigma_bar": _floats,
    "df": _float,
    "seed": _int,
    "prior_var": float,
    "design": str,
}

SIM_DEFAULTS = {
    "n": "50",
    "beta": "-1,0.5,-0.5",
    "alpha_s": "2,0,-2",
    "sigma_bar": STUDY_SIGMA_BAR,
    "df": "20",
    "seed": "0",
    "prior_var": "25",
    "design": "random",
}


def parse_text(text, allowed, source="config"):
    """Parse ``key = value`` lines.  ``#`` starts a comment; unknown keys are errors."""
    out = {}
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{num}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ValidationError(f"{source}:{num}: unknown key {key!r}")
        out[key] = val
    return out


def read_config(path, allowed):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_text(text, allowed, path)


def parse_overrides(items, allowed):
    """``--set key=value`` overrides."""
    return parse_text("\n".join(items or []), allowed, "--set")


def typed(raw, schema):
    out = {}
    for k, v in raw.items():
        try:
            out[k] = schema[k](v) if isinstance(v, str) else v
        except (ValueError, TypeError):
            raise ValidationError(f"bad value for {k!r}: {v!r}") from None
    return out


def square_from_flat(vals, name):
    k = int(round(np.sqrt(vals.size)))
    if k * k != vals.size:
        raise ValidationError(f"{name} needs k*k entries, got {vals.size}")
    return vals.reshape(k, k)


def chain_config(values, p, model_df, alpha_free, corr_free, defaults):
    """Build a :class:`ChainConfig` from typed config values and the model tag."""
    v = dict(defaults)
    v.update(values)
    for key, fixed in (("alpha_free", alpha_free), ("corr_free", corr_free)):
        if key in values and values[key] != fixed:
            raise ValidationError(f"{key}={values[key]} contradicts the model tag")
    if "df" in values:
        cfg_df = None if np.isinf(values["df"]) else values["df"]
        if cfg_df != model_df:
            raise ValidationError("df in the config contradicts the model tag")
    acc = QMCSettings(
        abs_tol=v.get("qmc_abs_tol", CHAIN_ACCURACY.abs_tol),
        rel_tol=v.get("qmc_rel_tol", CHAIN_ACCURACY.rel_tol),
        n_shifts=v.get("qmc_shifts", CHAIN_ACCURACY.n_shifts),
        n_points=v.get("qmc_points", CHAIN_ACCURACY.n_points),
        max_evals=v.get("qmc_max_evals", CHAIN_ACCURACY.max_evals),
    )
    prior_cov = None
    if "prior_cov" in v:
        prior_cov = square_from_flat(v["prior_cov"], "prior_cov")
    return ChainConfig(
        iterations=v["iterations"],
        burn_in=v["burn_in"],
        h1=v.get("h1", 0.09),
        h2=v.get("h2", 0.09),
        seed=v.get("seed", 0),
        df=model_df,
        prior_mean=v.get("prior_mean"),
        prior_cov=prior_cov,
        prior_var_scale=v.get("prior_var", 25.0),
        alpha_prior_var=v.get("alpha_prior_var", 16.0),
        eta=v.get("eta", 1.0),
        accuracy=acc,
        alpha_free=alpha_free,
        corr_free=corr_free,
    )
