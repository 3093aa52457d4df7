"""Command line: ``semexplore run|batch|render``.

Exit codes: 0 success, 1 configuration or input error, 2 run failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import re
import sys

from .config import METHODS, RunConfig, dump_config, field_types, load_config
from .errors import ConfigurationError, DomainError, WorldParseError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2

_SCENARIO = ("world", "method", "seed", "steps", "out")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad flags are configuration errors, not run failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _param_parser():
    p = _Parser(add_help=False)
    g = p.add_argument_group("scenario")
    g.add_argument("--world", help="world file or bundled world name")
    g.add_argument("--method", choices=METHODS)
    g.add_argument("--seed", type=int)
    g.add_argument("--steps", type=int, help="step budget")
    g.add_argument("--out", help="output directory")
    g.add_argument("--config", help="key = value config file; flags override it")
    g.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration and exit")
    params = p.add_argument_group("parameters")
    defaults = RunConfig()
    casts = {"int": int, "float": float}
    for name, typ in field_types().items():
        if name in _SCENARIO:
            continue
        params.add_argument("--" + name.replace("_", "-"), dest=name, type=casts.get(typ, str),
                            metavar=typ.upper(), help=f"default {getattr(defaults, name)!r}")
    return p


def effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    for name in field_types():
        v = getattr(args, name, None)
        if v is not None:
            changes[name] = v
    return dataclasses.replace(cfg, **changes).validate()


def _seed_list(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)-(\d+)", part)
        try:
            seeds.extend(range(int(m[1]), int(m[2]) + 1) if m else [int(part)])
        except ValueError:
            raise ConfigurationError(f"bad seed {part!r}") from None
    return seeds


def build_parser():
    parser = _Parser(prog="semexplore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _param_parser()
    sub.add_parser("run", parents=[common], help="one exploration run")
    b = sub.add_parser("batch", parents=[common], help="seeded runs with aggregates")
    b.add_argument("--seeds", default="0-9", help="e.g. '0-9' or '1,4,7'")
    b.add_argument("--methods", help="comma-separated; defaults to --method")
    b.add_argument("--worlds", help="comma-separated; defaults to --world")
    b.add_argument("--workers", type=int, default=1)
    r = sub.add_parser("render", help="images from a run directory")
    r.add_argument("run_dir")
    r.add_argument("--out", help="image directory (default: the run directory)")
    return parser


def _cmd_run(cfg):
    from .harness import run_to_dir
    result, out = run_to_dir(cfg)
    s = result.summary
    print(f"{out}: {s['status']} after {s['steps']} steps, ate={s['ate']}, "
          f"map_error={s['map_error']}, mean_iou={s['mean_iou']}")
    if result.failed:
        print(f"run failed: {result.message}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _cmd_batch(cfg, args):
    from .explorer import resolve_world
    from .harness import aggregate, run_batch, write_batch
    from .simworld import load_world
    seeds = _seed_list(args.seeds)
    methods = [m.strip() for m in args.methods.split(",")] if args.methods else None
    worlds = [w.strip() for w in args.worlds.split(",")] if args.worlds else None
    for m in methods or []:
        if m not in METHODS:
            raise ConfigurationError(f"unknown method {m!r}")
    rows = run_batch(cfg, seeds, methods, worlds, args.workers)
    ncls = max(load_world(resolve_world(w)).num_classes for w in (worlds or [cfg.world]))
    out = write_batch(rows, cfg.out, ncls)
    for agg in aggregate(rows):
        print(f"{agg['method']}: {agg['runs']} runs, {agg['failed']} failed, "
              f"median ate={agg['ate_median']}, map_error={agg['map_error_median']}, "
              f"mean_iou={agg['mean_iou_median']}")
    print(f"wrote {out / 'batch_summary.csv'} and {out / 'batch_aggregate.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a bad flag
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        if args.command == "render":
            from .render import render
            for path in render(args.run_dir, args.out):
                print(path)
            return EXIT_OK
        cfg = effective_config(args)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command == "run":
            return _cmd_run(cfg)
        return _cmd_batch(cfg, args)
    except (ConfigurationError, WorldParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a failed run
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
