#!/usr/bin/env python3
"""
Command-line entry point for HypDiff.
Trains the hyperbolic autoencoder and latent diffusion model, samples graphs and evaluates them.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

import torch

from src.config import load_settings
from src.errors import ConfigError, HypDiffError
from src.graphs.generators import DATASETS
from src.pipeline import HypDiffPipeline

logger = logging.getLogger(__name__)


def parse_overrides(pairs: List[str]) -> Dict[str, str]:
    """Turn repeated ``--set key=value`` flags into a dict."""
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"Expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypdiff", description="Hyperbolic geometric latent diffusion for graph generation"
    )
    parser.add_argument("--config", help="Flat key=value configuration file")
    parser.add_argument("--seed", type=int, help="Seed for every random draw")
    parser.add_argument("--threads", type=int, help="Worker cap for parallel sections")
    parser.add_argument("--log-level", help="Logging level (DEBUG, INFO, ...)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Override any setting, may be repeated",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Generate a synthetic graph dataset")
    p.add_argument("--dataset", choices=sorted(DATASETS), default="community")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-ae", help="Train the hyperbolic autoencoder")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-diff", help="Cluster the embeddings and train the denoiser")
    p.add_argument("--graphs", required=True)
    p.add_argument("--ae", required=True, help="Autoencoder checkpoint")
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="Sample graphs from a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--scaffold", help="Graphs whose adjacency conditions the denoiser")

    p = sub.add_parser("evaluate", help="Compare generated graphs against a reference set")
    p.add_argument("reference")
    p.add_argument("generated")
    p.add_argument("--out", help="Write the JSON report here instead of stdout")

    p = sub.add_parser("snr", help="Signal-to-noise curves of angular and white noise")
    p.add_argument("--graphs", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--plot", help="Optional HTML chart")

    p = sub.add_parser("ablation", help="Constrained versus unconstrained diffusion")
    p.add_argument("--graphs", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", required=True)
    return parser


def run(args: argparse.Namespace) -> None:
    overrides = parse_overrides(args.overrides)
    for key in ("seed", "threads", "log_level"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    config = load_settings(args.config, overrides)

    logging.getLogger().setLevel(config.log_level.upper())
    torch.set_num_threads(config.threads)
    pipeline = HypDiffPipeline(config)

    if args.command == "gen-data":
        pipeline.gen_data(args.dataset, args.count, args.out)
    elif args.command == "train-ae":
        pipeline.train_ae(args.graphs, args.out)
    elif args.command == "train-diff":
        pipeline.train_diff(args.graphs, args.ae, args.out)
    elif args.command == "generate":
        pipeline.generate(args.checkpoint, args.n, args.out, args.scaffold)
    elif args.command == "evaluate":
        pipeline.evaluate(args.reference, args.generated, args.out)
    elif args.command == "snr":
        pipeline.snr(args.graphs, args.checkpoint, args.out, args.plot)
    elif args.command == "ablation":
        pipeline.ablation(args.graphs, args.seeds, args.n, args.out)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except HypDiffError as e:
        logger.error(f"❌ {e}")
        return 1
    except Exception as e:
        logger.exception(f"❌ Unexpected failure: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
