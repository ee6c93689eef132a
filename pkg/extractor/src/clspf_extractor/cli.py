"""Batch extraction CLI: one .clspf per input image."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backbones import DEFAULT_MODEL, ModelLoadFailure, load_backbone
from .extract import extract_file
from .writer import ExtractionError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clspf-extract",
        description=(
            "Run a self-supervised ViT backbone over images and write one "
            "CLSPF v1 patch-feature file per image."
        ),
    )
    parser.add_argument("images", nargs="+", type=Path, help="input images")
    parser.add_argument(
        "--model", default=DEFAULT_MODEL,
        help=f"backbone name (default {DEFAULT_MODEL}; 'random-vit-<dim>' "
             f"builds a deterministic offline stand-in)",
    )
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--device", default="cpu", help="torch device (default cpu)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        model = load_backbone(args.model, args.device)
    except ModelLoadFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = 0
    for image_path in args.images:
        out_path = args.out / (image_path.stem + ".clspf")
        try:
            extract_file(image_path, out_path, model, args.device)
            print(f"{image_path} -> {out_path}")
        except ExtractionError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = 2
    return status


if __name__ == "__main__":
    sys.exit(main())
