"""Command-line entry point.

Exit codes: 0 on success, 1 for configuration problems (bad flags, bad
config file), 2 for numerical failures (the offending grid point is
reported on stderr).
"""

import argparse
import sys

from . import experiments
from .exceptions import ConfigError, PsdkError

_COMMANDS = {
    "intrinsic-avg": "intrinsic_avg",
    "dpca": "dpca",
    "extrinsic-avg": "extrinsic_avg",
    "perturb-order": "perturb_order",
}

_HELP = {
    "intrinsic-avg": "average log-factor-noise samples (Karcher vs Euclidean)",
    "dpca": "one-shot distributed PCA over an (M, n) grid",
    "extrinsic-avg": "average data-observed factor-noise samples",
    "perturb-order": "remainder decay of the first-order expansions",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for
    numerical failures, so turn usage errors into ConfigError instead."""

    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(
        prog="psdk",
        description="Seeded synthetic experiments for rank-restricted PSD "
        "averaging and distributed PCA.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, text in _HELP.items():
        cmd = sub.add_parser(name, help=text, description=text)
        cmd.add_argument("--config", metavar="FILE",
                         help="key = value overrides file")
        cmd.add_argument("--seed", type=int, metavar="N",
                         help="master seed (default 0)")
        cmd.add_argument("--quick", action="store_true",
                         help="shrink grids to a fast desk-scale run")
        cmd.add_argument("--out", metavar="PATH",
                         help="CSV output path (default <experiment>.csv)")
        cmd.add_argument("--threads", type=int, metavar="N",
                         help="worker threads; output is identical either way")
    sub.add_parser("selftest", help="run the fast internal consistency battery",
                   description="run the fast internal consistency battery")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as err:
        print(f"psdk: error: {err}", file=sys.stderr)
        return 1

    if args.command == "selftest":
        ok, lines = experiments.run_selftest()
        for line in lines:
            print(line)
        return 0 if ok else 2

    experiment = _COMMANDS[args.command]
    try:
        cfg = experiments.load_config(
            experiment,
            path=args.config,
            quick=args.quick,
            overrides={
                "master_seed": args.seed,
                "output_path": args.out,
                "threads": args.threads,
            },
        )
    except (ConfigError, OSError) as err:
        print(f"psdk: error: {err}", file=sys.stderr)
        return 1

    try:
        records = experiments.RUNNERS[experiment](cfg, progress=True)
    except PsdkError as err:
        print(f"psdk: numerical failure: {err}", file=sys.stderr)
        return 2

    out_path = cfg.output_path or f"{experiment}.csv"
    experiments.write_csv(records, out_path)
    print(experiments.summarize_records(cfg, records))
    print(f"wrote {len(records)} records to {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
