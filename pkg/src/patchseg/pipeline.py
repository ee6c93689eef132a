"""End-to-end segmentation of one feature grid, plus mask artifact output.

The stages run affinity -> eigendecomposition -> elbow -> bandwidth search
(or a fixed-K bypass) -> patch-mask upsampling -> optional CRF refinement.
With refinement off the result is the "patch" variant (pure nearest-neighbor
upsampling of cluster labels); with refinement on it is the "pixel" variant.
The whole call is a pure function of (features, image, config), seed
included.
"""

from __future__ import annotations

import colorsys
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import cluster as _cluster
from . import crf as _crf
from . import spectral as _spectral
from .cluster import ClusterSelection
from .crf import CrfConfig
from .errors import (
    DimensionMismatch,
    IoFailure,
    MissingImageForCrf,
    TooManyLabels,
)
from .features import PatchFeatureGrid
from .spectral import EigengapAnalysis


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one segmentation run; defaults reproduce the reference
    "pixel" configuration (bandwidth 0.5, CRF on with its defaults)."""

    beta: float = 0.5
    seed: int = 0
    crf: bool = True
    fixed_k: int | None = None
    crf_config: CrfConfig = field(default_factory=CrfConfig)
    row_normalize: bool = False

    def validate(self) -> None:
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.fixed_k is not None and self.fixed_k < 2:
            raise ValueError(f"fixed_k must be >= 2, got {self.fixed_k}")
        self.crf_config.validate()

    @property
    def variant(self) -> str:
        return "pixel" if self.crf else "patch"


@dataclass(frozen=True)
class SegmentationResult:
    """Everything one run produced: masks, chosen K, and diagnostics."""

    mask: np.ndarray
    patch_mask: np.ndarray
    k: int
    silhouette: float
    eigenvalues: np.ndarray
    analysis: EigengapAnalysis
    selection: ClusterSelection
    timings: dict[str, float]
    variant: str


def _downscale_for_budget(
    labels: np.ndarray, image: np.ndarray, max_pixels: int
) -> tuple[np.ndarray, np.ndarray]:
    """Shrink labels (nearest) and image (area average) under the pixel
    budget, preserving aspect ratio."""
    h, w = labels.shape
    scale = (max_pixels / (h * w)) ** 0.5
    out_h = max(1, int(h * scale))
    out_w = max(1, int(w * scale))
    small_labels = _crf.nearest_resize(labels, out_h, out_w)
    pil = Image.fromarray(np.ascontiguousarray(image.astype(np.uint8)))
    small_image = np.asarray(pil.resize((out_w, out_h), Image.BOX))
    return small_labels, small_image


def segment(
    features: PatchFeatureGrid,
    image: np.ndarray | None,
    cfg: PipelineConfig,
) -> SegmentationResult:
    """Segment one image's feature grid.

    ``image`` (original-resolution RGB, 0-255) is required when refinement
    is on, since the bilateral kernel needs colors; with refinement off it
    may be None. Raises MissingImageForCrf / DimensionMismatch accordingly.
    """
    cfg.validate()
    geometry = features.geometry
    if cfg.crf:
        if image is None:
            raise MissingImageForCrf("CRF refinement needs --image (or disable CRF)")
        image = np.asarray(image)
        if image.shape != (geometry.orig_h, geometry.orig_w, 3):
            raise DimensionMismatch(
                f"image {image.shape} does not match original dims "
                f"({geometry.orig_h}, {geometry.orig_w}, 3)"
            )

    timings: dict[str, float] = {}
    t = time.perf_counter()
    affinity = _spectral.compute_affinity(features)
    timings["affinity"] = time.perf_counter() - t

    t = time.perf_counter()
    eig = _spectral.eigendecompose(affinity)
    timings["eigendecomposition"] = time.perf_counter() - t

    t = time.perf_counter()
    analysis = _spectral.eigengap_elbow(eig.eigenvalues)
    timings["elbow"] = time.perf_counter() - t

    t = time.perf_counter()
    selection = _cluster.select_clusters(
        eig,
        analysis,
        cfg.beta,
        cfg.seed,
        fixed_k=cfg.fixed_k,
        row_normalize=cfg.row_normalize,
    )
    timings["selection"] = time.perf_counter() - t

    t = time.perf_counter()
    patch_mask = selection.best_labels.reshape(features.rows, features.cols).astype(
        np.int32
    )
    mask = _crf.upsample_labels(patch_mask, geometry)
    timings["upsample"] = time.perf_counter() - t

    if cfg.crf:
        t = time.perf_counter()
        k = selection.best_k
        crf_cfg = cfg.crf_config
        full_h, full_w = mask.shape
        if full_h * full_w > crf_cfg.max_pixels:
            small_labels, small_image = _downscale_for_budget(
                mask, image, crf_cfg.max_pixels
            )
            unary = _crf.unary_from_labels(small_labels, k, crf_cfg.gt_prob)
            refined = _crf.mean_field_refine(unary, small_image, crf_cfg)
            mask = _crf.nearest_resize(refined, full_h, full_w)
        else:
            unary = _crf.unary_from_labels(mask, k, crf_cfg.gt_prob)
            mask = _crf.mean_field_refine(unary, image, crf_cfg)
        timings["crf"] = time.perf_counter() - t

    return SegmentationResult(
        mask=mask.astype(np.int32),
        patch_mask=patch_mask,
        k=selection.best_k,
        silhouette=selection.best_score,
        eigenvalues=eig.eigenvalues,
        analysis=analysis,
        selection=selection,
        timings=timings,
        variant=cfg.variant,
    )


def label_palette() -> np.ndarray:
    """Fixed 256-color palette: index 0 is black, the rest cycle hues by the
    golden ratio with alternating saturation/value tiers. Deterministic."""
    colors = np.zeros((256, 3), dtype=np.uint8)
    for i in range(1, 256):
        hue = (i * 0.6180339887498949) % 1.0
        sat = (0.9, 0.6, 0.75)[i % 3]
        val = (0.95, 0.8, 0.65)[(i // 3) % 3]
        r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
        colors[i] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(payload)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_label_png(mask: np.ndarray, path: str | Path) -> None:
    """Write label indices as an 8-bit palettized PNG (atomic,
    deterministic). Pixel values are the label indices; the palette only
    affects display."""
    mask = np.asarray(mask)
    if mask.min() < 0 or mask.max() > 255:
        raise TooManyLabels(f"mask needs {int(mask.max()) + 1} labels; limit 256")
    img = Image.fromarray(mask.astype(np.uint8), mode="P")
    img.putpalette(label_palette().ravel().tolist())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    _atomic_write(Path(path), buf.getvalue())


def render_mask(
    mask: np.ndarray,
    path: str | Path,
    *,
    k: int,
    silhouette: float,
    beta: float,
    seed: int,
    variant: str,
) -> Path:
    """Write a mask as an 8-bit palettized PNG plus a JSON sidecar.

    Output bytes are deterministic for identical inputs. Returns the
    sidecar path.
    """
    mask = np.asarray(mask)
    if k > 256:
        raise TooManyLabels(f"k={k} labels; limit 256")
    path = Path(path)
    write_label_png(mask, path)
    sidecar = path.with_suffix(".json")
    meta = {
        "k": int(k),
        "silhouette": float(silhouette),
        "beta": float(beta),
        "seed": int(seed),
        "variant": variant,
    }
    _atomic_write(sidecar, (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode())
    return sidecar


def read_mask(path: str | Path) -> np.ndarray:
    """Read a mask file written by render_mask (or any indexed/gray PNG)."""
    with Image.open(path) as img:
        if img.mode not in ("P", "L"):
            img = img.convert("L")
        return np.asarray(img, dtype=np.int32)
