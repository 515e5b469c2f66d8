"""Command-line entry points: run a suite, print oracle predictions, simulate.

Subcommands::

    imclab run      --config suite.json [--seed S] [--threads T] [--out DIR]
    imclab oracle   --config chain.json [--seed S] [--out report.json]
    imclab simulate --config chain.json --out trajectory.csv [--seed S]

``run`` takes a suite document; ``oracle`` and ``simulate`` take a
single-chain document (target, epsilon, n_steps, f, auxiliary_mode, seed).
The ``IMCMC_THREADS`` environment variable is the fallback for ``--threads``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .asymptotics import total_asymptotic_variance
from .errors import ConfigurationError
from .suite import load_suite, parse_chain_config, resolve_threads, run_suite
from .tempering import run_chain


def _load_document(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="imclab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment suite")
    p_run.add_argument("--config", required=True, help="suite JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the suite master seed")
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--out", default=None, help="override the suite output directory")

    p_oracle = sub.add_parser("oracle", help="print predicted CLT variance for a chain config")
    p_oracle.add_argument("--config", required=True, help="single-chain JSON file")
    p_oracle.add_argument("--seed", type=int, default=None)
    p_oracle.add_argument("--out", default=None, help="write the report here instead of stdout")

    p_sim = sub.add_parser("simulate", help="simulate one chain and dump the trajectory CSV")
    p_sim.add_argument("--config", required=True, help="single-chain JSON file")
    p_sim.add_argument("--out", required=True, help="trajectory CSV path")
    p_sim.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            suite = load_suite(args.config)
            if args.seed is not None:
                suite = dataclasses.replace(suite, master_seed=args.seed)
            return run_suite(suite, threads=resolve_threads(args.threads), output_dir=args.out)
        if args.command == "oracle":
            cfg, f = parse_chain_config(_load_document(args.config), seed_override=args.seed)
            text = total_asymptotic_variance(cfg, f, include_bounds=True).to_json()
            if args.out:
                Path(args.out).write_text(text + "\n")
            else:
                print(text)
            return 0
        if args.command == "simulate":
            cfg, _ = parse_chain_config(_load_document(args.config), seed_override=args.seed)
            run_chain(cfg).to_csv(args.out)
            print(f"wrote {cfg.n_steps} steps to {args.out}")
            return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
