"""CLSPF v1 file writer.

The format is the wire contract with the segmentation engine and is
implemented here independently so the two packages interoperate only
through bytes on disk:

    bytes 0..7    magic ``CLSPF\\0\\0\\0``
    bytes 8..31   six little-endian u32: version(=1), orig_h, orig_w,
                  rows, cols, dim
    bytes 32..35  reserved, zero
    bytes 36..    rows*cols*dim little-endian float32, patch-row-major,
                  feature dim innermost
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CLSPF\0\0\0"
VERSION = 1
PATCH = 14
_HEADER = struct.Struct("<8s6I4s")


class ExtractionError(RuntimeError):
    pass


def resized_dims(orig_h: int, orig_w: int) -> tuple[int, int]:
    """Original dims rounded down to multiples of the 14-pixel patch size."""
    if orig_h < PATCH or orig_w < PATCH:
        raise ExtractionError(f"image {orig_h}x{orig_w} smaller than one patch")
    return (orig_h // PATCH) * PATCH, (orig_w // PATCH) * PATCH


def write_clspf(path: str | Path, orig_h: int, orig_w: int, features: np.ndarray) -> None:
    """Write a (rows, cols, dim) float32 feature grid; atomic and
    deterministic."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 3:
        raise ExtractionError(f"features must be (rows, cols, dim), got {features.shape}")
    rows, cols, dim = features.shape
    res_h, res_w = resized_dims(orig_h, orig_w)
    if (rows, cols) != (res_h // PATCH, res_w // PATCH):
        raise ExtractionError(
            f"token grid {rows}x{cols} does not match image {orig_h}x{orig_w}"
        )
    if rows * cols < 4:  # consumers require at least 4 patches
        raise ExtractionError(
            f"image {orig_h}x{orig_w} yields only {rows * cols} patches; need 4"
        )
    norms = np.linalg.norm(features.reshape(-1, dim).astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        raise ExtractionError("backbone produced a zero-norm patch feature")

    header = _HEADER.pack(MAGIC, VERSION, orig_h, orig_w, rows, cols, dim, b"\0" * 4)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + features.tobytes())
    os.replace(tmp, path)
