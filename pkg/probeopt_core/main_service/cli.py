"""
Command-line entry point.

    python -m probeopt_core generate --config configs/examples/desk-scenario.yaml --out runs/desk
    python -m probeopt_core train    --config ... [--baseline cvae|vae-mdn|cvae-mdn]
    python -m probeopt_core optimize --config ...
    python -m probeopt_core evaluate --config ...

Exit codes: 0 success (JSON status line on stdout), 2 library error
(JSON error line on stderr), 1 unexpected failure.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from framework.orchestrator.orchestrator import ExperimentOrchestrator
from probeopt_core.config.loader import ConfigLoader
from probeopt_core.config.settings import ModelTag
from probeopt_core.errors import ProbeOptError
from probeopt_core.logging_setup import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_LIBRARY = 2

VERBS = ("generate", "train", "optimize", "evaluate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probeopt", description="Probing-beam optimization for cell-free hybrid beamforming"
    )
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", help="experiment YAML file")
    parser.add_argument("--seed", type=int, help="base seed (overrides the config)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument(
        "--baseline", choices=[tag.value for tag in ModelTag], help="augmentation model variant"
    )
    parser.add_argument("--settings", help="global settings YAML (logging, workers)")
    parser.add_argument("--workers", type=int, help="threads for parallel stages")
    return parser


def run(args: argparse.Namespace) -> dict:
    loader = ConfigLoader(args.settings)
    settings = loader.load_global_settings()
    configure_logging(settings.get("logging"))
    config = loader.load_experiment(
        args.config,
        {"seed": args.seed, "output_dir": args.out, "model_tag": args.baseline},
    )
    workers = args.workers or settings.get("platform", {}).get("workers")
    orchestrator = ExperimentOrchestrator(config, workers=workers)
    logger.info(
        "Running stage",
        extra={"fields": {"verb": args.verb, "config_hash": orchestrator.config_hash, "seed": config.seed}},
    )
    if args.verb == "generate":
        result = orchestrator.run_generate()
    elif args.verb == "train":
        result = orchestrator.run_train()
    elif args.verb == "optimize":
        result = orchestrator.run_optimize()
    else:
        result = orchestrator.run_evaluate()
    return result.to_record()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        record = run(args)
    except ProbeOptError as e:
        print(json.dumps(e.to_record(), default=str), file=sys.stderr)
        return EXIT_LIBRARY
    except Exception as e:
        logger.exception("Unexpected failure")
        print(
            json.dumps({"status": "error", "code": "INTERNAL_ERROR", "type": type(e).__name__, "message": str(e)}),
            file=sys.stderr,
        )
        return EXIT_INTERNAL
    print(json.dumps(record, default=str))
    return EXIT_OK
