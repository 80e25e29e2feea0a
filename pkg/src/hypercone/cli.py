"""Command-line driver.

Exit codes: 0 every enabled check passed, 1 some check failed, 2 bad config or
unmet precondition, 3 any other runtime error.
"""
import argparse
import json
import logging
import sys

from . import config as cf
from .errors import ConfigError, PreconditionError
from .experiment import Experiment, mutation_selftest

log = logging.getLogger("hypercone")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# checks each subcommand runs; "run" uses the config toggles
COMMAND_CHECKS = {
    "simulate": (),
    "verify-symmetrizer": ("symmetrizer",),
    "mollifier-report": ("lemma33",),
    "cone-report": ("cone",),
    "pw-probe": ("pw",),
    "energy-report": ("energy",),
}


def _parser():
    p = argparse.ArgumentParser(prog="hypercone", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "selftest", *COMMAND_CHECKS):
        s = sub.add_parser(name)
        s.add_argument("--config", help="experiment JSON (selftest defaults to the bundled transport-1d)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, help="worker threads (default $HYPERCONE_THREADS or 1)")
        s.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        s.add_argument("--check", action="append", choices=cf.CHECKS,
                       help="restrict to the named check; repeatable")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args):
    path = args.config
    if path is None:
        if args.command != "selftest":
            raise ConfigError("--config is required")
        path = cf.bundled("transport-1d")
    cfg, base = cf.load(path)
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg = cf.validate(cfg)
    return cfg, base


def _checks(args, cfg):
    """Config toggles for ``run``, the subcommand's own checks otherwise; ``--check`` filters."""
    if args.command == "run":
        names = [k for k in cf.CHECKS if cfg["checks"][k] or (args.check and k in args.check)]
    else:
        names = list(COMMAND_CHECKS.get(args.command, ()))
    if args.check:
        names = [k for k in names if k in args.check]
    return names


def execute(args):
    """Run one parsed command; returns ``(exit_code, summary)``."""
    cfg, base = _load(args)
    exp = Experiment(cfg, base_dir=base, out_dir=args.out, threads=args.threads)
    if args.command == "selftest":
        mutation_selftest(exp)
    elif args.command == "simulate":
        exp.solve()
    else:
        exp.run_checks(_checks(args, cfg))
    summary = exp.finish(args.command)
    summary["config_hash"] = exp.hash
    return (EXIT_OK if summary["passed"] else EXIT_FAIL), summary


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        code, summary = execute(args)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure, exit 3 per the contract
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name, ok in summary["checks"].items():
        print(f"{name:12s} {'PASS' if ok else 'FAIL'}")
    print(json.dumps({"passed": summary["passed"], "config_hash": summary["config_hash"]}))
    return code


if __name__ == "__main__":
    sys.exit(main())
