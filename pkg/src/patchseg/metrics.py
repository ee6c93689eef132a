"""Unsupervised-segmentation evaluation: label matching, mIoU, pixel accuracy.

Predicted cluster ids carry no semantics, so each image is scored after a
one-to-one Hungarian assignment of predicted labels to ground-truth classes
that maximizes matched pixels. Surplus predicted labels stay unmatched and
all their pixels count as wrong. Matching is per image; no label consistency
across images is assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch


@dataclass(frozen=True)
class ConfusionTable:
    """Pixel counts per (predicted label, ground-truth class) pair.

    ``counts[p, g]`` holds pixels predicted p with ground truth g, over
    non-ignored pixels only; ``ignore_count`` holds the rest.
    """

    counts: np.ndarray
    ignore_count: int

    @property
    def pred_k(self) -> int:
        return self.counts.shape[0]

    @property
    def gt_k(self) -> int:
        return self.counts.shape[1]


def confusion_from_masks(
    pred: np.ndarray, gt: np.ndarray, ignore_label: int | None = None
) -> ConfusionTable:
    """Tabulate a prediction against ground truth of equal shape."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    keep = np.ones(pred.shape, dtype=bool)
    if ignore_label is not None:
        keep = gt != ignore_label
    p = pred[keep].astype(np.int64)
    g = gt[keep].astype(np.int64)
    pred_k = int(p.max()) + 1 if p.size else 1
    gt_k = int(g.max()) + 1 if g.size else 1
    counts = np.zeros((pred_k, gt_k), dtype=np.int64)
    np.add.at(counts, (p, g), 1)
    return ConfusionTable(counts=counts, ignore_count=int(pred.size - p.size))


def match_labels(table: ConfusionTable) -> dict[int, int]:
    """One-to-one assignment of predicted labels to ground-truth classes
    maximizing total matched pixels.

    Predicted labels left over (when pred_k > gt_k, or when matching them
    would not add pixels) are absent from the returned dict and count as
    void: all their pixels are wrong.
    """
    counts = table.counts
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return {
        int(p): int(g) for p, g in zip(rows, cols) if counts[p, g] > 0
    }


@dataclass(frozen=True)
class EvalResult:
    miou: float
    pixel_acc: float
    matching: dict[int, int]
    per_class_iou: np.ndarray


def evaluate(
    pred: np.ndarray,
    gt: np.ndarray,
    ignore_label: int | None = None,
    many_to_one: bool = False,
) -> EvalResult:
    """Score one predicted mask against ground truth.

    IoU is computed per ground-truth class present in the image (over
    non-ignored pixels) and averaged into mIoU; pixel accuracy is the
    matched-correct fraction of non-ignored pixels. ``many_to_one`` switches
    to majority-vote matching (each predicted label maps to its most
    overlapping class) for comparability with that protocol; default off.
    """
    table = confusion_from_masks(pred, gt, ignore_label)
    counts = table.counts
    if many_to_one:
        matching = {
            int(p): int(counts[p].argmax())
            for p in range(table.pred_k)
            if counts[p].sum() > 0
        }
    else:
        matching = match_labels(table)

    gt_totals = counts.sum(axis=0)
    pred_totals = counts.sum(axis=1)
    matched = np.zeros(table.gt_k, dtype=np.int64)  # intersection per gt class
    pred_mass = np.zeros(table.gt_k, dtype=np.int64)  # predicted mass mapped to class
    for p, g in matching.items():
        matched[g] += counts[p, g]
        pred_mass[g] += pred_totals[p]

    present = gt_totals > 0
    union = gt_totals + pred_mass - matched
    iou = np.zeros(table.gt_k, dtype=np.float64)
    nonzero = union > 0
    iou[nonzero] = matched[nonzero] / union[nonzero]

    total = int(gt_totals.sum())
    correct = int(matched.sum())
    return EvalResult(
        miou=float(iou[present].mean()) if present.any() else 0.0,
        pixel_acc=correct / total if total else 0.0,
        matching=matching,
        per_class_iou=iou[present],
    )


def adjusted_rand_index(a: np.ndarray, b: np.ndarray) -> float:
    """Chance-corrected agreement between two labelings of the same points."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    n = a.shape[0]
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x: np.ndarray) -> float:
        return float((x * (x - 1) // 2).sum())

    sum_cells = comb2(table)
    sum_a = comb2(table.sum(axis=1))
    sum_b = comb2(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)
