"""Patch-feature file format and image-geometry rules.

A feature grid is the bridge between a vision backbone and the numeric core:
an ``H_p x W_p`` grid of D-dimensional float32 vectors, one per 14x14 pixel
patch of the resized image. This module owns the binary interchange format
(``.clspf``) so the numeric core never touches an ML runtime.

CLSPF v1 layout (little-endian):

    bytes 0..7    magic ``CLSPF\\0\\0\\0``
    bytes 8..31   six u32 fields: version(=1), orig_h, orig_w, rows, cols, dim
    bytes 32..35  reserved, must be zero
    bytes 36..    rows*cols*dim float32, patch-row-major, feature dim innermost
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CorruptHeader,
    DimensionTooSmall,
    IoFailure,
    TruncatedPayload,
    VersionMismatch,
    ZeroNormFeature,
)

PATCH = 14
MAGIC = b"CLSPF\0\0\0"
VERSION = 1
HEADER_STRUCT = struct.Struct("<8s6I4s")  # magic, 6 fields, reserved
HEADER_SIZE = HEADER_STRUCT.size  # 36 bytes


@dataclass(frozen=True)
class ImageGeometry:
    """Original and resized pixel dimensions of one image.

    The resized dimensions are the original ones rounded down to integer
    multiples of the 14-pixel patch size.
    """

    orig_h: int
    orig_w: int
    resized_h: int
    resized_w: int
    patch: int = PATCH

    @property
    def rows(self) -> int:
        return self.resized_h // self.patch

    @property
    def cols(self) -> int:
        return self.resized_w // self.patch


def compute_geometry(orig_h: int, orig_w: int) -> ImageGeometry:
    """Round an image's dimensions down to multiples of the patch size.

    Raises DimensionTooSmall if either side is shorter than one patch.
    """
    if orig_h < PATCH or orig_w < PATCH:
        raise DimensionTooSmall(
            f"image {orig_h}x{orig_w} smaller than one {PATCH}x{PATCH} patch"
        )
    return ImageGeometry(
        orig_h=int(orig_h),
        orig_w=int(orig_w),
        resized_h=(int(orig_h) // PATCH) * PATCH,
        resized_w=(int(orig_w) // PATCH) * PATCH,
    )


@dataclass(frozen=True)
class PatchFeatureGrid:
    """Feature vectors on the patch grid plus the geometry they came from.

    ``data`` has shape (rows, cols, dim), dtype float32, and is stored raw:
    cosine normalization happens in the spectral stage, not here.
    """

    geometry: ImageGeometry
    data: np.ndarray

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def vectors(self) -> np.ndarray:
        """Features flattened to (n_patches, dim), patch-row-major."""
        return self.data.reshape(-1, self.dim)

    def validate(self) -> None:
        """Check every grid invariant; raises a DataError subclass on failure."""
        if self.data.ndim != 3:
            raise CorruptHeader(f"feature array must be 3-d, got {self.data.ndim}-d")
        if self.data.dtype != np.float32:
            raise CorruptHeader(f"feature dtype must be float32, got {self.data.dtype}")
        g = self.geometry
        if (self.rows, self.cols) != (g.rows, g.cols):
            raise CorruptHeader(
                f"grid {self.rows}x{self.cols} does not match geometry "
                f"{g.rows}x{g.cols}"
            )
        if g.resized_h != (g.orig_h // PATCH) * PATCH or g.resized_w != (
            g.orig_w // PATCH
        ) * PATCH:
            raise CorruptHeader("resized dims are not orig dims rounded to patch size")
        if self.n_patches < 4:
            raise CorruptHeader(
                f"need at least 4 patches, got {self.rows}x{self.cols}"
            )
        norms = np.linalg.norm(self.vectors().astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms == 0.0)[0])
            raise ZeroNormFeature(f"patch {bad} has a zero-norm feature vector")


def make_grid(orig_h: int, orig_w: int, data: np.ndarray) -> PatchFeatureGrid:
    """Build and validate a grid from raw (rows, cols, dim) float data."""
    grid = PatchFeatureGrid(
        geometry=compute_geometry(orig_h, orig_w),
        data=np.ascontiguousarray(data, dtype=np.float32),
    )
    grid.validate()
    return grid


def write_features(grid: PatchFeatureGrid, path: str | Path) -> None:
    """Serialize a grid to a CLSPF v1 file.

    Output bytes are a pure function of the grid, so identical grids always
    produce identical files. The grid is validated first; a grid with a
    zero-norm vector is rejected before anything is written.
    """
    grid.validate()
    g = grid.geometry
    header = HEADER_STRUCT.pack(
        MAGIC, VERSION, g.orig_h, g.orig_w, grid.rows, grid.cols, grid.dim, b"\0" * 4
    )
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_features(path: str | Path) -> PatchFeatureGrid:
    """Load a CLSPF v1 file, checking every header and payload invariant."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(raw) < HEADER_SIZE or raw[:8] != MAGIC:
        raise BadMagic(f"{path}: not a CLSPF file")
    _, version, orig_h, orig_w, rows, cols, dim, reserved = HEADER_STRUCT.unpack_from(
        raw
    )
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {VERSION}")
    if reserved != b"\0" * 4:
        raise CorruptHeader(f"{path}: reserved header bytes are not zero")
    if min(orig_h, orig_w, rows, cols, dim) <= 0:
        raise CorruptHeader(f"{path}: non-positive header field")
    if rows != (orig_h // PATCH) or cols != (orig_w // PATCH):
        raise CorruptHeader(
            f"{path}: grid {rows}x{cols} inconsistent with image {orig_h}x{orig_w}"
        )
    expected = rows * cols * dim * 4
    got = len(raw) - HEADER_SIZE
    if got != expected:
        raise TruncatedPayload(f"{path}: payload {got} bytes, expected {expected}")

    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(rows, cols, dim)
    grid = PatchFeatureGrid(
        geometry=compute_geometry(orig_h, orig_w), data=data.copy()
    )
    grid.validate()
    return grid
