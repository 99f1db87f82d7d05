"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ExperimentSpec, parse_eta_grid, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_SUBCOMMANDS = {
    "bivariate-bounds": "worst-case band for x^2 y^2 on the unit square plus copula dots",
    "copula-compare": "phi^2 and E[h] for parametric copulas, checked against the band",
    "serial-xi1": "one-lag coefficient with baseline and first-order band",
    "serial-2dep": "one- and two-lag coefficients with the two-lag band",
    "queue-experiment": "M/M/1 sweeps over T or b, or parametric-model comparison",
    "hedge-experiment": "delta-hedging baseline, coefficients and AR(1)/AR(2) comparison",
    "oracle-check": "estimator grand means against exact enumeration on a finite toy",
}


class _ConfigArgError(Exception):
    pass


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _setting(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_u64, default=0, help="master seed (u64)")
    p.add_argument("--outer", type=int, help="outer sample size K")
    p.add_argument("--inner", type=int, help="inner sample size n")
    p.add_argument("--reps", type=int, help="estimator replications N")
    p.add_argument("--alpha", type=float, default=0.05, help="CI level is 1 - alpha")
    p.add_argument("--eta-grid", help="a:b:step (inclusive)")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1, help="worker threads; never changes output")
    p.add_argument("--paper-scale", action="store_true", help="use the larger reference sample sizes")
    p.add_argument("--samples", type=int, help="plain Monte Carlo sample size")
    p.add_argument("--config", help="JSON file of experiment parameters")
    p.add_argument("--set", dest="settings", type=_setting, action="append", default=[],
                   metavar="KEY=VALUE", help="override one parameter (value parsed as JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phi2robust", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common(p)
        if name in ("serial-xi1", "serial-2dep"):
            p.add_argument("--model", choices=("queue-tail", "queue-mean", "hedge", "toy"))
        if name == "queue-experiment":
            p.add_argument("--sweep", choices=("T", "b", "compare"), default="T")
    return parser


def _spec_from_args(args) -> ExperimentSpec:
    kind = args.command
    if kind == "queue-experiment":
        kind = {"T": "queue-xi1-vs-T", "b": "queue-xi1-vs-b", "compare": "queue-compare"}[args.sweep]
    params: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise _ConfigArgError(f"cannot read config {args.config!r}: {exc}") from None
        if not isinstance(loaded, dict):
            raise _ConfigArgError("config file must hold a JSON object")
        params.update(loaded)
    if args.samples is not None:
        params["samples"] = args.samples
    if getattr(args, "model", None):
        params["model"] = args.model
    params.update(dict(args.settings))
    return ExperimentSpec(
        kind=kind,
        seed=args.seed,
        params=params,
        outer=args.outer,
        inner=args.inner,
        reps=args.reps,
        alpha=args.alpha,
        eta_grid=parse_eta_grid(args.eta_grid) if args.eta_grid else None,
        out=args.out,
        format=args.format,
        threads=args.threads,
        paper_scale=args.paper_scale,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        run_experiment(spec)
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (_ConfigArgError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
