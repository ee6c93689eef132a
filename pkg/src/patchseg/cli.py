"""Command-line entry point.

Subcommands:

    segment   feature grid(s) -> mask PNG + JSON sidecar (+ dumps, reports)
    eval      predicted vs ground-truth mask directories -> metrics JSON
    synth     planted feature grid + label image for demos and tests
    inspect   print a feature file's header

Exit codes: 0 success, 1 usage error, 2 data error. Output files are written
to a temporary name and renamed, so failures never leave partial artifacts.
A config file (KEY=VALUE lines, keys named like the long flags) can preseed
any subcommand's flags; explicit flags win.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import report as _report
from .crf import CrfConfig, upsample_labels
from .errors import DataError, PatchSegError, UsageError
from .features import read_features, write_features
from .metrics import evaluate
from .pipeline import (
    PipelineConfig,
    label_palette,
    read_mask,
    render_mask,
    segment,
    write_label_png,
)
from .spectral import spectrum_dump
from .synth import PlantedSpec, generate


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _atomic_json(path: Path, payload: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _read_config(path: Path) -> list[str]:
    """Turn KEY=VALUE lines into argv tokens (booleans become bare flags)."""
    tokens: list[str] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected KEY=VALUE")
        key, value = (part.strip() for part in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return tokens


def _inject_config(argv: list[str]) -> list[str]:
    """Splice config-file tokens right after the subcommand so explicit
    flags override them."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    cfg_path = Path(argv[i + 1])
    if not cfg_path.is_file():
        raise UsageError(f"config file {cfg_path} not found")
    rest = argv[:i] + argv[i + 2 :]
    return rest[:1] + _read_config(cfg_path) + rest[1:]


def build_parser() -> _Parser:
    parser = _Parser(
        prog="patchseg",
        description=(
            "Training-free segmentation of patch feature grids: adaptive "
            "spectral clustering with an eigengap elbow plus silhouette "
            "bandwidth search, and optional dense CRF refinement. The "
            "'patch' variant (--no-crf) upsamples cluster labels directly; "
            "the 'pixel' variant (default) additionally sharpens boundaries "
            "with the CRF and needs --image."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment feature grid(s) into mask files")
    seg.add_argument("--features", nargs="+", required=True, type=Path,
                     help="input .clspf feature file(s)")
    seg.add_argument("--image", type=Path,
                     help="original-resolution RGB image (single input, pixel variant)")
    seg.add_argument("--image-dir", type=Path,
                     help="directory of images matched to feature files by stem (batch)")
    seg.add_argument("--out", required=True, type=Path,
                     help="output mask PNG (single input) or directory (batch)")
    seg.add_argument("--beta", type=float, default=0.5,
                     help="bandwidth of the candidate-K window (default 0.5)")
    seg.add_argument("--seed", type=int, default=0, help="clustering seed (default 0)")
    seg.add_argument("--no-crf", action="store_true",
                     help="skip CRF refinement (the 'patch' variant)")
    seg.add_argument("--fixed-k", type=int,
                     help="bypass adaptive selection and use exactly K clusters")
    seg.add_argument("--row-normalize", action="store_true",
                     help="unit-normalize embedding rows before clustering")
    seg.add_argument("--dump-spectrum", type=Path,
                     help="write spectrum diagnostics JSON here")
    seg.add_argument("--dump-search", type=Path,
                     help="write bandwidth-search trace JSON here")
    seg.add_argument("--report-dir", type=Path,
                     help="write CSV tables and figures here")
    seg.add_argument("--jobs", type=int, default=1,
                     help="parallel workers for batch input (default 1)")
    seg.add_argument("--config", type=Path, help="KEY=VALUE config file")
    seg.add_argument("--crf-iterations", type=int, default=20)
    seg.add_argument("--crf-gt-prob", type=float, default=0.8)
    seg.add_argument("--crf-gauss-sxy", type=float, default=4.0)
    seg.add_argument("--crf-gauss-compat", type=float, default=4.0)
    seg.add_argument("--crf-bilat-sxy", type=float, default=80.0)
    seg.add_argument("--crf-bilat-srgb", type=float, default=13.0)
    seg.add_argument("--crf-bilat-compat", type=float, default=10.0)
    seg.add_argument("--crf-max-pixels", type=int, default=65536)

    ev = sub.add_parser("eval", help="score predicted masks against ground truth")
    ev.add_argument("--pred", required=True, type=Path, help="directory of predicted masks")
    ev.add_argument("--gt", required=True, type=Path, help="directory of ground-truth masks")
    ev.add_argument("--ignore", type=int, help="ground-truth label to ignore")
    ev.add_argument("--out", required=True, type=Path, help="output metrics JSON")
    ev.add_argument("--many-to-one", action="store_true",
                    help="majority-vote matching instead of one-to-one")
    ev.add_argument("--report-dir", type=Path, help="write CSV and figures here")
    ev.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    ev.add_argument("--config", type=Path, help="KEY=VALUE config file")

    sy = sub.add_parser("synth", help="generate a planted feature grid")
    sy.add_argument("--rows", required=True, type=int)
    sy.add_argument("--cols", required=True, type=int)
    sy.add_argument("--k", required=True, type=int)
    sy.add_argument("--sigma", type=float, default=0.02)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--dim", type=int, default=16)
    sy.add_argument("--layout", choices=("vertical-bands", "grid-blocks"),
                    default="vertical-bands")
    sy.add_argument("--min-center-angle", type=float, default=math.pi / 3,
                    help="minimum pairwise center angle in radians")
    sy.add_argument("--out", required=True, type=Path, help="output .clspf path")
    sy.add_argument("--labels-out", type=Path,
                    help="planted patch labels PNG (default: alongside --out)")
    sy.add_argument("--image-out", type=Path,
                    help="optional synthetic RGB image at pixel resolution")
    sy.add_argument("--config", type=Path, help="KEY=VALUE config file")

    ins = sub.add_parser("inspect", help="print a feature file's header")
    ins.add_argument("--features", required=True, type=Path)
    return parser


def _segment_one(
    features_path: Path,
    image_path: Path | None,
    out_path: Path,
    args,
    cfg: PipelineConfig,
    report_dir: Path | None,
) -> None:
    grid = read_features(features_path)
    image = _load_image(image_path) if image_path is not None else None
    result = segment(grid, image, cfg)
    render_mask(
        result.mask,
        out_path,
        k=result.k,
        silhouette=result.silhouette,
        beta=cfg.beta,
        seed=cfg.seed,
        variant=result.variant,
    )
    if args.dump_spectrum:
        _atomic_json(args.dump_spectrum, spectrum_dump(result.eigenvalues, result.analysis))
    if args.dump_search:
        _atomic_json(args.dump_search, result.selection.trace_dump())
    if report_dir:
        _report.write_segment_report(report_dir, result, image)


def _cmd_segment(args) -> int:
    if not (0.0 < args.beta < 1.0):
        raise UsageError(f"--beta must lie in (0, 1), got {args.beta}")
    if args.fixed_k is not None and args.fixed_k < 2:
        raise UsageError(f"--fixed-k must be >= 2, got {args.fixed_k}")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    batch = len(args.features) > 1
    crf_on = not args.no_crf
    for path in args.features:
        if not path.is_file():
            raise UsageError(f"feature file {path} not found")

    if batch:
        if args.image:
            raise UsageError("--image is for single input; use --image-dir for batch")
        if args.dump_spectrum or args.dump_search:
            raise UsageError("--dump-* flags are for single input")
        args.out.mkdir(parents=True, exist_ok=True)
    if crf_on:
        if batch and not args.image_dir:
            raise UsageError("MissingImageForCrf: batch pixel variant needs --image-dir")
        if not batch and not args.image:
            raise UsageError("MissingImageForCrf: pixel variant needs --image "
                             "(or pass --no-crf for the patch variant)")

    def image_for(fpath: Path) -> Path | None:
        if not crf_on:
            return None
        if not batch:
            return args.image
        for ext in (".png", ".jpg", ".jpeg", ".bmp"):
            cand = args.image_dir / (fpath.stem + ext)
            if cand.is_file():
                return cand
        raise UsageError(f"no image for {fpath.stem} in {args.image_dir}")

    cfg = PipelineConfig(
        beta=args.beta,
        seed=args.seed,
        crf=crf_on,
        fixed_k=args.fixed_k,
        row_normalize=args.row_normalize,
        crf_config=CrfConfig(
            iterations=args.crf_iterations,
            gt_prob=args.crf_gt_prob,
            gauss_sxy=args.crf_gauss_sxy,
            gauss_compat=args.crf_gauss_compat,
            bilat_sxy=args.crf_bilat_sxy,
            bilat_srgb=args.crf_bilat_srgb,
            bilat_compat=args.crf_bilat_compat,
            max_pixels=args.crf_max_pixels,
        ),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    jobs = []
    for fpath in args.features:
        out = (args.out / (fpath.stem + ".png")) if batch else args.out
        rdir = (args.report_dir / fpath.stem) if (args.report_dir and batch) else args.report_dir
        jobs.append((fpath, image_for(fpath), out, rdir))

    if args.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_segment_one, f, i, o, args, cfg, r) for f, i, o, r in jobs
            ]
            for fut in futures:
                fut.result()
    else:
        for f, i, o, r in jobs:
            _segment_one(f, i, o, args, cfg, r)
    return 0


def _cmd_eval(args) -> int:
    if not args.pred.is_dir() or not args.gt.is_dir():
        raise UsageError("--pred and --gt must be directories")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    names = sorted(
        p.name for p in args.pred.glob("*.png") if (args.gt / p.name).is_file()
    )
    if not names:
        raise UsageError(f"no mask pairs between {args.pred} and {args.gt}")

    def score(name: str) -> dict:
        pred = read_mask(args.pred / name)
        gt = read_mask(args.gt / name)
        res = evaluate(pred, gt, ignore_label=args.ignore, many_to_one=args.many_to_one)
        return {
            "name": name,
            "miou": res.miou,
            "pixel_acc": res.pixel_acc,
            "pred_k": int(pred.max()) + 1,
            "gt_k": int(gt.max()) + 1,
        }

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(score, names))
    else:
        records = [score(name) for name in names]

    payload = {
        "miou": float(np.mean([r["miou"] for r in records])),
        "pixel_acc": float(np.mean([r["pixel_acc"] for r in records])),
        "n_images": len(records),
        "images": records,
    }
    _atomic_json(args.out, payload)
    if args.report_dir:
        _report.write_eval_report(args.report_dir, records)
    print(f"miou {payload['miou']:.4f}  pixel_acc {payload['pixel_acc']:.4f}  "
          f"n_images {payload['n_images']}")
    return 0


def _cmd_synth(args) -> int:
    spec = PlantedSpec(
        rows=args.rows,
        cols=args.cols,
        k_true=args.k,
        dim=args.dim,
        noise_sigma=args.sigma,
        min_center_angle=args.min_center_angle,
        seed=args.seed,
        layout=args.layout,
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grid, labels = generate(spec)
    write_features(grid, args.out)
    labels_out = args.labels_out or args.out.with_suffix(".labels.png")
    write_label_png(labels, labels_out)
    if args.image_out:
        pixel_labels = upsample_labels(labels, grid.geometry)
        rgb = label_palette()[(pixel_labels % 255) + 1]
        tmp = args.image_out.with_name(args.image_out.name + ".tmp")
        Image.fromarray(rgb.astype(np.uint8)).save(tmp, format="PNG")
        os.replace(tmp, args.image_out)
    print(f"wrote {args.out} ({grid.rows}x{grid.cols}x{grid.dim}) and {labels_out}")
    return 0


def _cmd_inspect(args) -> int:
    grid = read_features(args.features)
    g = grid.geometry
    print(f"file          {args.features}")
    print(f"version       1")
    print(f"original      {g.orig_h} x {g.orig_w} px")
    print(f"resized       {g.resized_h} x {g.resized_w} px (patch {g.patch})")
    print(f"grid          {grid.rows} rows x {grid.cols} cols = {grid.n_patches} patches")
    print(f"feature dim   {grid.dim}")
    return 0


_COMMANDS = {
    "segment": _cmd_segment,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PatchSegError as exc:  # any other package error counts as data
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
