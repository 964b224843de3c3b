"""``nonlocal-fv`` command line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import ConfigError, NonlocalFVError
from .config import dump_config, load_config
from .experiments import RunOptions, run_experiment

log = logging.getLogger("nonlocal_fv")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

# modes each subcommand accepts
COMMAND_MODES = {
    "solve": ("transient", "keller_segel", "eta_sweep"),
    "bench": ("benchmark",),
    "converge": ("convergence_space", "convergence_time"),
    "compare-reg": ("regularization_compare",),
    "run": None,  # any mode
    "check": None,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocal-fv",
                                     description="Finite-volume solver for multi-species nonlocal drift-diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "transient, keller_segel or eta_sweep runs",
        "bench": "convolution timing benchmark",
        "converge": "space or time convergence study",
        "compare-reg": "singular vs regularized kernel comparison",
        "run": "run any mode",
        "check": "validate a config and print it in canonical form",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="YAML run description")
        if name == "check":
            continue
        p.add_argument("--out-dir", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, default=1,
                       help="max concurrent runs in sweeps; 1 gives byte-identical output")
        p.add_argument("--snapshot-stride", type=int, default=None,
                       help="write a snapshot every this many steps (0 disables)")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO

    allowed = COMMAND_MODES[args.command]
    if allowed is not None and cfg.mode not in allowed:
        print(f"config error: mode {cfg.mode!r} is not handled by '{args.command}' "
              f"(expected {', '.join(allowed)})", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "check":
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if args.snapshot_stride is not None and args.snapshot_stride < 0:
        print("config error: --snapshot-stride must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    opts = RunOptions(args.out_dir, args.threads, args.snapshot_stride, workers=1 if args.threads == 1 else None)
    try:
        summary = run_experiment(cfg, opts)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonlocalFVError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if not args.quiet:
        brief = {k: v for k, v in summary.items() if k in ("mode", "name", "blowup", "t_final", "orders",
                                                           "plateau", "nlogn_spread", "steps")}
        print(json.dumps(brief, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
