"""Command-line entry point: ``plumeinv <verb> [options]``.

Exit codes: 0 success, 1 configuration error (including bad arguments),
2 runtime failure.
"""

import argparse
import logging
import sys

from plumeinv import __version__
from plumeinv.config import SCALE_PRESETS, ScenarioConfig, apply_scale
from plumeinv.errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("plumeinv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario config (defaults describe level M)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--scale", choices=sorted(SCALE_PRESETS), help="iteration-count preset")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="plumeinv", description="Gas plume simulation and source inversion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")

    p = sub.add_parser("invert", parents=[common], help="run the sampler on a dataset")
    p.add_argument("--data", help="dataset directory from 'simulate' (default: simulate the config)")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="N",
                   help="save trace and generator state every N iterations")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")

    p = sub.add_parser("main-effects", parents=[common], help="one-factor-at-a-time sweep (13 runs)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("misspec-study", parents=[common], help="dispersion misspecification bias study")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("chilbolton", parents=[common], help="field-data model comparison")
    p.add_argument("--data", help="directory in the intermediate CSV layout (default: synthetic fixture)")
    p.add_argument("--model", action="append", dest="models",
                   help="restrict to this model (repeatable), e.g. briggs:A, est-draxler")
    p.add_argument("--release", type=int, choices=(1, 2), help="which release's iteration defaults to use")
    p.add_argument("--workers", type=int, default=1)
    return parser


def load_config(args):
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if getattr(args, "models", None) or getattr(args, "release", None):
        chil = {}
        if args.models:
            chil["models"] = args.models
        if args.release:
            chil["release"] = args.release
        updates["chilbolton"] = chil
    if updates:
        cfg = cfg.updated(**updates)
    return apply_scale(cfg, args.scale)


def run(args):
    from plumeinv import experiments  # heavy imports (jax) only after argument parsing

    cfg = load_config(args)
    out = cfg.output_dir
    if args.command == "simulate":
        experiments.cmd_simulate(cfg, out)
    elif args.command == "invert":
        _, summary = experiments.cmd_invert(cfg, out, args.data, args.checkpoint_every, args.resume)
        log.info("acceptance %.3f, BIC %.2f, RMSE %.4g", summary.acceptance_rate, summary.bic, summary.rmse)
    elif args.command == "main-effects":
        failures = [k for k, v in experiments.cmd_main_effects(cfg, out, args.workers).items() if v]
        if failures:
            log.warning("failed runs: %s", ", ".join(failures))
    elif args.command == "misspec-study":
        experiments.cmd_misspec_study(cfg, out, args.workers)
    elif args.command == "chilbolton":
        experiments.cmd_chilbolton(cfg, out, args.data, args.workers)
    log.info("outputs written to %s", out)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("jax").setLevel(logging.WARNING)
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
