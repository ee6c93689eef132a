"""Report rendering: CSV tables and matplotlib figures for one run.

Everything here is presentation only; the numbers come straight from the
SegmentationResult / evaluation records. Figures are written to files (Agg
backend), never shown.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import SegmentationResult, label_palette


def write_spectrum_csv(path: str | Path, result: SegmentationResult) -> None:
    """index, eigenvalue, gap, chord distance (gap columns empty on the last
    row, which has no successor)."""
    analysis = result.analysis
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "gap", "distance"])
        for i, lam in enumerate(result.eigenvalues, start=1):
            if i - 1 < analysis.gaps.size:
                writer.writerow(
                    [i, repr(float(lam)), repr(float(analysis.gaps[i - 1])),
                     repr(float(analysis.distances[i - 1]))]
                )
            else:
                writer.writerow([i, repr(float(lam)), "", ""])


def write_search_csv(path: str | Path, result: SegmentationResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "silhouette", "inertia", "selected"])
        for cand in result.selection.candidates:
            writer.writerow(
                [
                    cand.k,
                    repr(float(cand.silhouette)),
                    repr(float(cand.assignment.inertia)),
                    int(cand.k == result.k),
                ]
            )


def plot_spectrum(path: str | Path, result: SegmentationResult) -> None:
    """Two panels: eigenvalue scree, and the gap sequence with the chord and
    the selected elbow."""
    analysis = result.analysis
    lam = result.eigenvalues
    gaps = analysis.gaps
    show = min(lam.size, max(4 * analysis.k_opt, 30))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(np.arange(1, show + 1), lam[:show], "o-", ms=3)
    ax1.set_xlabel("index")
    ax1.set_ylabel("eigenvalue")
    ax1.set_title("spectrum (leading)")

    m = min(gaps.size, show)
    xs = np.arange(1, m + 1)
    ax2.plot(xs, gaps[:m], "o-", ms=3, label="gaps")
    chord_x = [1, gaps.size]
    chord_y = [gaps[0], gaps[-1]]
    ax2.plot(chord_x, chord_y, "--", color="gray", label="chord")
    ax2.axvline(analysis.elbow_index, color="red", lw=1,
                label=f"elbow i*={analysis.elbow_index}, k_opt={analysis.k_opt}")
    ax2.set_xlim(0.5, m + 0.5)
    ax2.set_xlabel("gap index")
    ax2.set_ylabel("gap")
    ax2.set_title("eigengaps")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_search(path: str | Path, result: SegmentationResult) -> None:
    ks = [c.k for c in result.selection.candidates]
    scores = [c.silhouette for c in result.selection.candidates]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, scores, "o-")
    ax.axvline(result.k, color="red", lw=1, label=f"best k={result.k}")
    ax.set_xlabel("k")
    ax.set_ylabel("silhouette")
    ax.set_title(f"bandwidth search (beta={result.selection.beta})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def colorize_labels(labels: np.ndarray) -> np.ndarray:
    """Map label indices to the fixed display palette (h, w, 3) uint8."""
    return label_palette()[np.asarray(labels) % 256]


def plot_mask(
    path: str | Path, mask: np.ndarray, image: np.ndarray | None = None
) -> None:
    """Colorized mask, optionally blended over the source image."""
    colored = colorize_labels(mask)
    if image is not None:
        colored = (0.55 * colored + 0.45 * np.asarray(image, dtype=np.float64)).astype(
            np.uint8
        )
    fig, ax = plt.subplots(figsize=(5, 5 * mask.shape[0] / max(1, mask.shape[1])))
    ax.imshow(colored)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_segment_report(
    outdir: str | Path, result: SegmentationResult, image: np.ndarray | None = None
) -> list[Path]:
    """Render the full report for one segmentation run; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, fn in (
        ("spectrum.csv", lambda p: write_spectrum_csv(p, result)),
        ("search.csv", lambda p: write_search_csv(p, result)),
        ("spectrum.png", lambda p: plot_spectrum(p, result)),
        ("search.png", lambda p: plot_search(p, result)),
        ("mask.png", lambda p: plot_mask(p, result.mask)),
    ):
        path = outdir / name
        fn(path)
        paths.append(path)
    if image is not None:
        path = outdir / "overlay.png"
        plot_mask(path, result.mask, image)
        paths.append(path)
    return paths


def write_eval_report(outdir: str | Path, records: list[dict]) -> list[Path]:
    """Per-image CSV plus an mIoU histogram for an evaluation run."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "eval.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "miou", "pixel_acc", "pred_k", "gt_k"])
        for rec in records:
            writer.writerow(
                [rec["name"], repr(rec["miou"]), repr(rec["pixel_acc"]),
                 rec["pred_k"], rec["gt_k"]]
            )
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist([rec["miou"] for rec in records], bins=20, range=(0.0, 1.0))
    ax.set_xlabel("per-image mIoU")
    ax.set_ylabel("images")
    fig.tight_layout()
    hist_path = outdir / "miou_hist.png"
    fig.savefig(hist_path, dpi=120)
    plt.close(fig)
    return [csv_path, hist_path]
