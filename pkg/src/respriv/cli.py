"""Command-line entry point: one subcommand per experiment kind."""

import argparse
import sys

from .config import ConfigError, load_config
from .harness import ExperimentError, run_experiment

SUBCOMMANDS = {
    "train": "train",
    "attack": "attack",
    "accountant": "accountant",
    "rademacher": "rademacher",
    "sde-demo": "sde_demo",
    "dpsgd-compare": "dpsgd_compare",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="respriv",
        description="Noise-injected residual network privacy laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, kind in SUBCOMMANDS.items():
        p = sub.add_parser(command, help=f"run a {kind} experiment")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--out", default="out", help="output directory (default ./out)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single config key (repeatable)")
        p.set_defaults(kind=kind)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = load_config(args.config) if args.config else {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            from .config import parse_config_text
            overrides.update(parse_config_text(item, source="--set"))
        declared = overrides.pop("kind", None)
        if declared is not None and declared != args.kind:
            raise ConfigError(f"config declares kind {declared!r} but the "
                              f"subcommand selects {args.kind!r}")
        record = run_experiment(args.kind, overrides, out_dir=args.out,
                                seed=args.seed, threads=args.threads)
    except (ConfigError, ExperimentError, OSError) as exc:
        print(f"respriv: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}/record.json")
    for key, value in sorted(record["metrics"].items()):
        if isinstance(value, (int, float, str)):
            print(f"  {key} = {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
