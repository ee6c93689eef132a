"""Planted-partition feature-grid generator and analytic spectra.

The generator plants k regions on a patch grid, assigns each region a unit
center vector, and adds isotropic Gaussian noise; the planted labels are the
ground-truth oracle for recovery tests. The block-model helper returns the
closed-form spectrum of the idealized (noise-free, equal-block) affinity so
the dense eigensolver and the formula can cross-check each other.

Center placement: for a minimum pairwise angle of 90 degrees or less the
centers are orthonormal (angle exactly 90 degrees); for a larger minimum the
centers are equiangular at exactly that angle, blending a centered simplex
(pairwise cosine -1/(k-1), the widest equiangular spread) with their common
mean direction. Region sizes are deliberately distinct (weighted largest
remainder): equal sizes make planted eigenvalues degenerate, and the
eigensolver's arbitrary basis within a degenerate eigenspace can collapse
two regions onto one embedding coordinate, turning recovery into a coin
flip. Distinct sizes keep the planted eigenvalues simple and the recovery
oracle sharp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadShape, CannotPlaceCenters
from .features import PatchFeatureGrid, compute_geometry

LAYOUTS = ("vertical-bands", "grid-blocks")


@dataclass(frozen=True)
class PlantedSpec:
    """Parameters of one planted instance."""

    rows: int
    cols: int
    k_true: int
    dim: int = 16
    noise_sigma: float = 0.02
    min_center_angle: float = math.pi / 3
    seed: int = 0
    layout: str = "vertical-bands"

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have positive dimensions")
        if not (1 <= self.k_true <= self.rows * self.cols):
            raise ValueError(f"k_true {self.k_true} exceeds patch count")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")
        if not (0.0 < self.min_center_angle <= math.pi):
            raise ValueError("min_center_angle must lie in (0, pi]")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}")


def place_centers(
    k: int, dim: int, min_angle: float, rng: np.random.Generator
) -> np.ndarray:
    """k unit vectors with pairwise angle exactly max(min_angle, pi/2).

    Raises CannotPlaceCenters when k exceeds the dimension or the requested
    angle exceeds the widest equiangular spread arccos(-1/(k-1)).
    """
    if k > dim:
        raise CannotPlaceCenters(f"cannot place {k} centers in dimension {dim}")
    if k == 1:
        g = rng.standard_normal(dim)
        return (g / np.linalg.norm(g))[None, :]
    cos_target = min(math.cos(min_angle), 0.0)
    if cos_target < -1.0 / (k - 1) - 1e-12:
        raise CannotPlaceCenters(
            f"no {k} unit vectors have pairwise angle >= {min_angle:.4f} rad"
        )
    g = rng.standard_normal((dim, k))
    q, r = np.linalg.qr(g)
    basis = (q * np.sign(np.diag(r))).T  # k orthonormal rows, sign-fixed
    if cos_target == 0.0:
        return basis
    simplex = basis - basis.mean(axis=0)
    simplex /= np.linalg.norm(simplex, axis=1, keepdims=True)
    mean_dir = basis.sum(axis=0) / math.sqrt(k)
    alpha = math.sqrt((1.0 - cos_target) * (k - 1) / k)
    beta = math.sqrt(max(1.0 - alpha * alpha, 0.0))
    centers = alpha * simplex + beta * mean_dir
    return centers / np.linalg.norm(centers, axis=1, keepdims=True)


def region_sizes(n: int, k: int) -> np.ndarray:
    """Split n patches into k regions with increasing, mostly distinct sizes
    (largest-remainder over weights 1 + p/2)."""
    w = 1.0 + 0.5 * np.arange(k)
    exact = n * w / w.sum()
    sizes = np.floor(exact).astype(np.int64)
    rem = exact - sizes
    for i in np.argsort(-rem, kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    if sizes.min() < 1:  # tiny grids: fall back to an even split
        sizes = np.full(k, n // k, dtype=np.int64)
        sizes[: n - sizes.sum()] += 1
    return sizes


def _layout_labels(spec: PlantedSpec) -> np.ndarray:
    n = spec.rows * spec.cols
    sizes = region_sizes(n, spec.k_true)
    runs = np.repeat(np.arange(spec.k_true), sizes)
    if spec.layout == "vertical-bands":
        # column-major runs -> vertical bands (boundary columns may step)
        return runs.reshape(spec.cols, spec.rows).T.copy()
    # grid-blocks: near-square tiling, extra cells merged into the last region
    gr = max(1, int(math.floor(math.sqrt(spec.k_true))))
    gc = math.ceil(spec.k_true / gr)
    tile_r = np.minimum(np.arange(spec.rows) * gr // spec.rows, gr - 1)
    tile_c = np.minimum(np.arange(spec.cols) * gc // spec.cols, gc - 1)
    labels = tile_r[:, None] * gc + tile_c[None, :]
    return np.minimum(labels, spec.k_true - 1)


def generate(spec: PlantedSpec) -> tuple[PatchFeatureGrid, np.ndarray]:
    """Draw one planted instance.

    Returns the feature grid and the planted patch-level labels. Every
    feature is its region's unit center plus isotropic Gaussian noise, so
    the draw is a pure function of the spec (including its seed).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    centers = place_centers(spec.k_true, spec.dim, spec.min_center_angle, rng)
    labels = _layout_labels(spec)
    noise = spec.noise_sigma * rng.standard_normal(
        (spec.rows * spec.cols, spec.dim)
    )
    feats = centers[labels.ravel()] + noise
    grid = PatchFeatureGrid(
        geometry=compute_geometry(spec.rows * 14, spec.cols * 14),
        data=feats.reshape(spec.rows, spec.cols, spec.dim).astype(np.float32),
    )
    grid.validate()
    return grid, labels.astype(np.int32)


def block_model_eigenvalues(k: int, n: int, cross_sim: float) -> np.ndarray:
    """Closed-form spectrum of the equal-block constant affinity.

    The matrix has k blocks of size m = n/k, entries 1 inside a block and
    ``cross_sim`` across blocks. Its eigenvalues are

        cross_sim * n + (1 - cross_sim) * m   once,
        (1 - cross_sim) * m                   k - 1 times,
        0                                     n - k times,

    returned sorted descending. Accepts any cross_sim in (-1, 1); values
    below -1/(k-1) make the matrix indefinite but the formula still holds.
    """
    if k < 1 or n < 1 or n % k != 0:
        raise BadShape(f"k={k} must divide n={n}")
    if not (-1.0 <= cross_sim < 1.0):
        raise BadShape(f"cross_sim {cross_sim} outside [-1, 1)")
    m = n // k
    mixed = cross_sim * n + (1.0 - cross_sim) * m
    family = (1.0 - cross_sim) * m
    lam = np.concatenate(
        [[mixed], np.full(k - 1, family), np.zeros(n - k)]
    )
    return np.sort(lam)[::-1]


def block_model_matrix(k: int, n: int, cross_sim: float) -> np.ndarray:
    """The equal-block constant affinity whose spectrum
    block_model_eigenvalues predicts."""
    if k < 1 or n < 1 or n % k != 0:
        raise BadShape(f"k={k} must divide n={n}")
    m = n // k
    a = np.full((n, n), float(cross_sim))
    for b in range(k):
        a[b * m : (b + 1) * m, b * m : (b + 1) * m] = 1.0
    return a
