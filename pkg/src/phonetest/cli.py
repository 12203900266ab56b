"""Command-line entry point: run one pipeline stage or the whole chain.

Exit codes: 0 = completed within the skip budget, 1 = completed but too
many items were skipped (max_skip_fraction), 2 = configuration or
pipeline error.
"""
from __future__ import annotations

import argparse
import os
import shlex
import sys
from dataclasses import replace

from .config import PipelineConfig, config_hash, load_config
from .pipeline import STAGES, PipelineError, StageResult, run_all, run_stage

ASR_COMMAND_ENV = "PHONETEST_ASR_COMMAND"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonetest",
        description="ASR-driven speech test factory: degrade a word corpus, "
        "mine confusions, curate a 2AFC battery, and evaluate it.",
    )
    parser.add_argument("--config", required=True, help="pipeline YAML file")
    parser.add_argument(
        "--stage",
        choices=[*STAGES, "serve"],
        help="single stage to run (default: all stages in order)",
    )
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument(
        "--snr", type=float, help="override the analysis SNR in dB"
    )
    parser.add_argument(
        "--backend",
        choices=["mock", "command", "http"],
        help="override the backend kind",
    )
    parser.add_argument(
        "--force",
        action="store_true",
        help="accept upstream artifacts produced under a different config hash",
    )
    parser.add_argument(
        "--port", type=int, default=8000, help="port for --stage serve"
    )
    return parser


def apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    backend = cfg.backend
    if args.backend:
        backend = replace(backend, kind=args.backend)
    command_override = os.environ.get(ASR_COMMAND_ENV)
    if command_override:
        backend = replace(
            backend, kind="command", command=tuple(shlex.split(command_override))
        )
    if args.seed is not None:
        backend = replace(backend, seed=args.seed)
        cfg = replace(cfg, seed=args.seed)
    if args.snr is not None:
        cfg = replace(cfg, analysis_snr=args.snr)
    if backend is not cfg.backend:
        cfg = replace(cfg, backend=backend)
    return cfg


def _report(result: StageResult, budget: float) -> int:
    print(
        f"stage {result.stage}: {len(result.artifacts)} artifacts, "
        f"{result.skipped_items}/{result.total_items} skipped"
    )
    for warning in result.warnings:
        print(f"  warning: {warning}")
    if result.skip_fraction > budget:
        print(
            f"  skip fraction {result.skip_fraction:.2f} exceeds budget {budget:.2f}",
            file=sys.stderr,
        )
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.stage == "serve":
        from .service import serve_from_pipeline

        try:
            serve_from_pipeline(cfg, port=args.port)
        except (OSError, ValueError, PipelineError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0

    print(f"config hash {config_hash(cfg)}")
    try:
        if args.stage:
            results = [run_stage(args.stage, cfg, force=args.force)]
        else:
            results = run_all(cfg, force=args.force)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    code = 0
    for result in results:
        code = max(code, _report(result, cfg.max_skip_fraction))
    return code


if __name__ == "__main__":
    sys.exit(main())
