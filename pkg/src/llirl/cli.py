"""Command-line entry point.

    llirl run --env-type 1 --method llirl --T 24 --J 50 --m 16 --zeta 1 --seed 0 --out runs/a
    llirl sweep --config sweep.json
    llirl inspect-library runs/a/library.npz

Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import mixture
from .harness import ConfigError, ExperimentConfig, format_table, run_experiment, sweep, sweep_configs

# flag dest -> config field
_RUN_FLAGS = {
    "env_type": "env_type", "method": "method", "T": "n_periods", "J": "iterations",
    "m": "batch_size", "zeta": "concentration", "seed": "seed", "out": "out", "cycled": "cycled",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llirl",
                                description="Lifelong RL with a growing mixture of environment models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every period")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--env-type", dest="env_type", type=int, choices=(1, 2, 3))
    run.add_argument("--method", choices=("llirl", "ca"))
    run.add_argument("--T", dest="T", type=int, help="number of periods")
    run.add_argument("--J", dest="J", type=int, help="policy-gradient iterations per period")
    run.add_argument("--m", dest="m", type=int, help="episodes per policy-gradient batch")
    run.add_argument("--zeta", dest="zeta", type=float, help="concentration of the cluster prior")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--cycled", type=int, metavar="K", help="repeat K base environments round-robin")
    run.add_argument("--config", help="JSON config file; flags override its values")

    sw = sub.add_parser("sweep", help="run a config once per concentration value")
    sw.add_argument("--config", required=True,
                    help="JSON config with a 'concentrations' list; runs go to <out>/concentration_<value>")

    ins = sub.add_parser("inspect-library", help="print a saved cluster library")
    ins.add_argument("path")
    return p


def _run(args) -> int:
    overrides = {_RUN_FLAGS[k]: v for k, v in vars(args).items() if k in _RUN_FLAGS and v is not None}
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_dict(overrides)
    outcome = run_experiment(cfg)
    print(json.dumps(outcome.summary, indent=1))
    if outcome.status:
        print(f"run failed: {outcome.summary['error']} (see {outcome.out / 'error.json'})", file=sys.stderr)
    return outcome.status


def _sweep(args) -> int:
    cfgs = sweep_configs(ExperimentConfig.from_file(args.config))
    rows = sweep(cfgs)
    print(format_table(rows))
    return 1 if any(r["status"] != "ok" for r in rows) else 0


def _inspect(args) -> int:
    try:
        lib = mixture.load(args.path)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except mixture.LibraryFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"clusters:      {lib.n_clusters}")
    print(f"next period:   {lib.period}")
    print(f"concentration: {lib.concentration!r}")
    print(f"mode:          {lib.mode.value}")
    print(f"window:        {lib.window}")
    print(f"noise_var:     {lib.noise_var!r}")
    print(f"mass_mode:     {lib.mass_mode}")
    print("masses:        " + " ".join(f"{m:.6g}" for m in lib.masses))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _run, "sweep": _sweep, "inspect-library": _inspect}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
