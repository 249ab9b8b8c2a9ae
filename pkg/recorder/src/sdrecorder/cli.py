"""Command-line entry point: sdrecord."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import RecorderError
from .record import RecorderConfig, record


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdrecord",
                                 description="record sparse draft/target logit traces")
    ap.add_argument("--draft", required=True, help="draft model identifier")
    ap.add_argument("--target", required=True, help="target model identifier")
    ap.add_argument("--prompts", required=True, help="UTF-8 file, one prompt per line")
    ap.add_argument("--out", required=True, help="output trace path (JSONL)")
    ap.add_argument("--top-m", type=int, default=64)
    ap.add_argument("--max-steps", type=int, default=32)
    ap.add_argument("--feature-dim", type=int, default=32)
    ap.add_argument("--projection-seed", type=int, default=0)
    ap.add_argument("--device", default=None)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    args = build_parser().parse_args(argv)
    try:
        cfg = RecorderConfig(draft_model=args.draft, target_model=args.target,
                             prompts_path=args.prompts, out_path=args.out,
                             top_m=args.top_m, max_steps=args.max_steps,
                             feature_dim=args.feature_dim,
                             projection_seed=args.projection_seed, device=args.device)
        summary = record(cfg)
    except RecorderError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
