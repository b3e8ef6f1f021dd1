"""Command-line entry points for the experiment stages.

Every subcommand takes ``--config <json>`` and ``--out <dir>``; ``--seed``
overrides the config's master seed and ``--reference-mode`` forces
deterministic single-threaded execution. On failure a machine-readable JSON
error is printed to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import harness
from .util import reference_mode


def _load_config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.from_json(args.config)
    else:
        cfg = harness.ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg


def _run_stage(args) -> int:
    cfg = _load_config(args)
    stage = {
        "gen-data": harness.generate_dataset,
        "train-baseline": harness.train_baseline,
        "train-diffusion": harness.train_diffusion,
        "reconstruct": harness.reconstruct,
        "evaluate": harness.evaluate,
        "report": harness.emit_report,
    }[args.command]
    if args.command == "run":
        raise AssertionError  # handled separately
    if args.reference_mode:
        with reference_mode():
            stage(cfg, args.out)
    else:
        stage(cfg, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cinediff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("gen-data", "generate the phantom dataset (ground truth, references, masks, k-space)"),
        ("train-baseline", "train the recurrent de-aliasing reconstructor"),
        ("train-diffusion", "train the conditional spatiotemporal denoiser"),
        ("reconstruct", "reconstruct the test split with every configured method"),
        ("evaluate", "compute metric tables against clean and noisy references"),
        ("report", "write montages, x-t profiles, and difference maps"),
        ("run", "run the full pipeline end to end"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to an ExperimentConfig JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument(
            "--reference-mode",
            action="store_true",
            help="single-threaded deterministic execution",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load_config(args)
            harness.run_pipeline(cfg, args.out, use_reference_mode=args.reference_mode)
            return 0
        return _run_stage(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports all failures
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
