"""Command line entry point: ``snext run|validate|gen-config``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    rec = harness.run_experiment(cfg, base_dir=Path(args.config).resolve().parent)
    last = rec.metrics[-1]
    print(f"{cfg.algorithm.name}: {last.iter} iterations, objective {last.objective:.6g}, "
          f"consensus {last.consensus_err:.3g}, stationarity {last.stationarity:.3g}")
    print(f"train loss {rec.train_loss:.6g}, test loss {rec.test_loss:.6g}")
    print(f"outputs in {rec.output_dir}")
    return 0


def _cmd_validate(args) -> int:
    cfg = harness.load_config(args.config)
    sys.stdout.write(harness.serialize_config(cfg))
    return 0


def _cmd_gen_config(args) -> int:
    text = harness.TEMPLATES[args.template]
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snext", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="check a config file and print it fully resolved")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("gen-config", help="print a config template")
    p.add_argument("template", choices=sorted(harness.TEMPLATES))
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    p.set_defaults(func=_cmd_gen_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, harness.DatasetError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
