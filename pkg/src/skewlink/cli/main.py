"""``skewlink`` command line.  Exit codes: 0 ok, 2 bad input, 3 numerical failure."""
import argparse
import sys

import numpy as np

from .. import __version__
from ..errors import NumericalError, ValidationError
from . import io, pipelines
from .config import CHAIN_KEYS, SIM_KEYS, parse_overrides, read_config, typed

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_simulate(args):
    values = read_config(args.config, SIM_KEYS)
    values.update(parse_overrides(args.set, SIM_KEYS))
    paths = pipelines.simulate(values, args.out)
    for p in paths:
        print(p)


def cmd_binarize(args):
    y = pipelines.binarize(args.input, args.q, args.out)
    print(f"{args.out}: n={y.shape[0]} M={y.shape[1]} ones={int(y.sum())}")


def cmd_fit(args):
    raw = read_config(args.config, CHAIN_KEYS)
    raw.update(parse_overrides(args.set, CHAIN_KEYS))
    for key in ("iterations", "burn_in", "seed"):
        val = getattr(args, key)
        if val is not None:
            raw[key] = str(val)
    recs = pipelines.fit(
        args.model, args.panel, args.design, args.out, typed(raw, CHAIN_KEYS),
        layout=args.layout, standardize=args.standardize, chains=args.chains,
    )
    for r in recs:
        print(f"{r['model']}: DIC {r['dic']:.4f} (p_D {r['p_d']:.4f}), acceptance {r['acceptance_rate']:.3f}")


def cmd_summarize(args):
    pipelines.summarize(args.draws, args.out)
    print(args.out)


def cmd_compare(args):
    rows = pipelines.compare(args.dirs, args.out)
    for r in rows:
        print(f"{r[0]:>20s} {r[1]:>3s} {r[2]:12.4f} {r[4]}")


def cmd_prob(args):
    values = read_config(args.inputs, pipelines.PROB_KEYS)
    est = pipelines.prob(args.mode, values)
    print(f"value={est.value!r}")
    print(f"error={est.error!r}")
    print(f"samples={est.samples_used}")


def _skew_args(args):
    df = None if args.df is None else float(args.df)
    return pipelines.skew_params(_floats(args.xi), _floats(args.sigma), _floats(args.alpha), df)


def cmd_sample(args):
    params = _skew_args(args)
    draws = pipelines.sample_draws(params, args.count, args.seed)
    header = [f"x{k + 1}" for k in range(params.dim)]
    meta = io.provenance(seed=args.seed, model=params.kernel)
    if args.out:
        io.write_csv(args.out, header, draws, meta)
    else:
        for r in draws:
            print(",".join(io.fmt(v) for v in r))


def cmd_pdf(args):
    params = _skew_args(args)
    x = np.asarray(_floats(args.x), dtype=float).reshape(-1, params.dim)
    for row, v in zip(x, np.atleast_1d(pipelines.pdf_values(params, x))):
        print(",".join(io.fmt(c) for c in row) + f" -> {float(v)!r}")


def build_parser():
    ap = argparse.ArgumentParser(prog="skewlink", description=__doc__)
    ap.add_argument("--version", action="version", version=f"skewlink {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic panel, design and truth file")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("binarize", help="mark values above each column's empirical quantile")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--q", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_binarize)

    p = sub.add_parser("fit", help="run the sampler for one model")
    p.add_argument("--model", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--layout", choices=["shared", "blocks"], default="shared")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="posterior summary of a draws file")
    p.add_argument("--draws", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("compare", help="DIC table over fit directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("prob", help="evaluate the panel likelihood (debug)")
    p.add_argument("--mode", choices=["sn", "st"], required=True)
    p.add_argument("--inputs", required=True)
    p.set_defaults(func=cmd_prob)

    for name, func, hlp in (("sample", cmd_sample, "draw skew-normal / skew-t variates (debug)"),
                            ("pdf", cmd_pdf, "evaluate a skew-normal / skew-t density (debug)")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--xi", required=True)
        p.add_argument("--sigma", required=True, help="row-major scale matrix")
        p.add_argument("--alpha", required=True)
        p.add_argument("--df", help="degrees of freedom; omit for the normal kernel")
        if name == "sample":
            p.add_argument("--count", type=int, default=1000)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--out")
        else:
            p.add_argument("--x", required=True, help="comma-separated points, d values each")
        p.set_defaults(func=func)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
