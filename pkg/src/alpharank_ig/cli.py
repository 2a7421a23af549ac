"""Command-line entry point.

Every failure ends with one JSON line on stderr (``{"error": ..., "message": ...}``)
and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import experiment, theory
from .core import DEFAULT_EPSILON, alpha_rank, load_payoffs, payoffs_to_json


def _cmd_rank(args) -> int:
    payoffs = load_payoffs(args.payoffs)
    ranks = alpha_rank(payoffs, args.epsilon)
    print(json.dumps({"alpha_rank": [float(v) for v in ranks]}))
    return 0


def _load_doc(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _cmd_run(args) -> int:
    config = experiment.ExperimentConfig.from_dict(_load_doc(args.config))
    if args.dump_ground_truth:
        env = experiment.build_game(config.game)
        with open(args.dump_ground_truth, "w") as fh:
            json.dump(payoffs_to_json(env.payoffs), fh, indent=2)
    seeds = [args.seed] if args.seed is not None else list(config.seeds)
    status = 0
    for seed in seeds:
        record = experiment.run(config, seed)
        csv_path, _ = experiment.write_run(config, record, args.out)
        print(json.dumps({"seed": seed, "metrics": str(csv_path), "error": record.error}))
        if record.error is not None:
            status = 1
    return status


def _cmd_sweep(args) -> int:
    doc = _load_doc(args.config)
    docs = doc if isinstance(doc, list) else [doc]
    configs = [c for d in docs for c in experiment.expand_grid(d)]
    rows = experiment.sweep(configs, args.out, workers=args.workers)
    for row in rows:
        print(json.dumps(row))
    return 1 if any(row["failed"] for row in rows) else 0


def _cmd_inspect(args) -> int:
    config = experiment.ExperimentConfig.from_dict(_load_doc(args.config))
    values = experiment.inspect(config, args.seed, args.burn_in)
    s = int(round(np.sqrt(values["alpha_ig"].size)))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["entry", "row", "col", "alpha_ig", "alpha_wass", "posterior_variance"])
    for e in range(values["alpha_ig"].size):
        writer.writerow([e, e // s, e % s, repr(float(values["alpha_ig"][e])),
                         repr(float(values["alpha_wass"][e])), repr(float(values["posterior_variance"][e]))])
    return 0


def _cmd_bound(args) -> int:
    params = theory.TheoryParams(args.delta_sep, args.sigma_a2, args.sigma_02, args.n_entries, args.m_star_norm2)
    horizons = np.unique(np.rint(np.logspace(np.log10(args.t_min), np.log10(args.t_max), args.points)))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["T", "bound"])
    for t, value in theory.regret_bound_curve(params, horizons):
        writer.writerow([int(t), repr(value)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alpharank-ig", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank", help="print the alpha-rank of a payoff file")
    p.add_argument("payoffs")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--dump-ground-truth", metavar="PATH")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a grid of configs over their seeds")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("inspect", help="objective values per entry after a burn-in")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--burn-in", type=int, default=5)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("bound", help="print the T * exp(g(T)) curve")
    p.add_argument("--delta-sep", type=float, default=0.1)
    p.add_argument("--sigma-a2", type=float, default=0.5)
    p.add_argument("--sigma-02", type=float, default=1.0)
    p.add_argument("--n-entries", type=int, default=16)
    p.add_argument("--m-star-norm2", type=float, default=8.0)
    p.add_argument("--t-min", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=1e6)
    p.add_argument("--points", type=int, default=50)
    p.set_defaults(func=_cmd_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
