"""Command-line entry point: run, sweep, spectra, validate.

Errors are printed one per line as ``error: <message>`` on stderr with a
nonzero exit code, so scripts can both show and grep them.  ``validate``
checks a config without running anything; ``spectra`` realizes only the
topology and prints its consensus spectrum; ``run`` executes a config into
an output directory (one CSV per algorithm plus ``manifest.json``); and
``sweep`` repeats a config across network sizes into per-size
subdirectories.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .optimizers import OptimizerError
from .oracles import OracleError
from .textio import format_float
from .topology import TopologyError

_SPECTRUM_KEYS = ("lambda", "one_minus_lambda", "eta_w", "rho_tilde_w")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsmtlab",
        description="Desk-scale laboratory for decentralized stochastic "
                    "gradient methods.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", help="path to a config file")
    run_p.add_argument("--out", required=True, help="output directory")
    _add_worker_args(run_p)

    sweep_p = sub.add_parser("sweep", help="repeat a config across sizes")
    sweep_p.add_argument("config", help="path to a config file")
    sweep_p.add_argument("--vary", required=True, metavar="n=8,16,32",
                         help="comma-separated network sizes")
    sweep_p.add_argument("--out", required=True, help="output directory")
    _add_worker_args(sweep_p)

    spectra_p = sub.add_parser("spectra",
                               help="print the consensus spectrum of a config")
    spectra_p.add_argument("config", help="path to a config file")

    validate_p = sub.add_parser("validate", help="check a config and exit")
    validate_p.add_argument("config", help="path to a config file")
    return parser


def _add_worker_args(sub_parser) -> None:
    sub_parser.add_argument("--workers", type=int, default=1,
                            help="trial-level process pool size (default 1)")
    sub_parser.add_argument("--serial", action="store_true",
                            help="force in-process execution")


def _parse_sizes(vary: str) -> list[int]:
    key, sep, values = vary.partition("=")
    if not sep or key.strip() != "n":
        raise harness.ConfigError(
            [f"--vary: expected n=<comma-separated sizes>, got {vary!r}"])
    sizes = []
    for token in values.split(","):
        token = token.strip()
        try:
            size = int(token)
        except ValueError:
            raise harness.ConfigError(
                [f"--vary: sizes must be integers, got {token!r}"]) from None
        if size < 1:
            raise harness.ConfigError([f"--vary: sizes must be >= 1, got {size}"])
        sizes.append(size)
    if not sizes:
        raise harness.ConfigError(["--vary: need at least one size"])
    return sizes


def _workers(args) -> int:
    if args.serial:
        return 1
    if args.workers < 1:
        raise harness.ConfigError(
            [f"--workers: must be >= 1, got {args.workers}"])
    return args.workers


def _cmd_run(args) -> int:
    cfg = harness.parse_config_file(args.config)
    result = harness.run_experiment(cfg, workers=_workers(args))
    for path in harness.write_experiment(result, args.out):
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.parse_config_file(args.config)
    sizes = _parse_sizes(args.vary)
    for _, _, paths in harness.run_sweep(cfg, sizes, args.out,
                                         workers=_workers(args)):
        for path in paths:
            print(f"wrote {path}")
    return 0


def _cmd_spectra(args) -> int:
    cfg = harness.parse_config_file(args.config)
    spectra = harness.config_spectra(cfg)
    for key in _SPECTRUM_KEYS:
        print(f"{key} = {format_float(spectra[key])}")
    return 0


def _cmd_validate(args) -> int:
    harness.parse_config_file(args.config)
    print(f"{args.config}: ok")
    return 0


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "spectra": _cmd_spectra,
             "validate": _cmd_validate}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        for message in exc.errors:
            print(f"error: {message}", file=sys.stderr)
        return 1
    except (harness.HarnessError, TopologyError, OracleError, OptimizerError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
