"""Cosine affinity construction, eigendecomposition, and elbow-based K selection.

The affinity matrix of pairwise cosine similarities is decomposed directly
(no Laplacian): with descending eigenvalues, consecutive differences form the
gap sequence, and the index farthest from the chord through the first and
last gap points marks the elbow. The cluster-count estimate is that index
plus one, clamped to [2, n-1].

All numerics here run in float64 even though feature files store float32:
gap differences can be tiny and spurious elbows from rounding are cheaper to
avoid than to debug.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, TooFewEigenvalues
from .features import PatchFeatureGrid

DEGENERATE_TOL = 1e-12


def compute_affinity(grid: PatchFeatureGrid) -> np.ndarray:
    """Cosine similarity between every pair of patch feature vectors.

    Each unordered pair is computed once and mirrored, so the result is
    exactly symmetric; the diagonal is set to exactly 1. Values may be
    negative; they are kept as-is.
    """
    grid.validate()
    f = grid.vectors().astype(np.float64)
    f = f / np.linalg.norm(f, axis=1, keepdims=True)
    a = f @ f.T
    iu = np.triu_indices(a.shape[0], k=1)
    a.T[iu] = a[iu]  # mirror upper triangle into lower
    np.fill_diagonal(a, 1.0)
    return a


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs of a symmetric matrix, eigenvalues sorted descending.

    ``eigenvectors[:, j]`` pairs with ``eigenvalues[j]`` and has unit norm;
    each column's sign is fixed so its first component of magnitude above
    1e-12 is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def eigendecompose(affinity: np.ndarray) -> EigenSystem:
    """Full dense eigendecomposition of a symmetric matrix.

    Deterministic for identical input. Raises ConvergenceFailure if the
    underlying solver fails; the condition is surfaced, never masked.
    """
    a = np.asarray(affinity, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"affinity must be square, got {a.shape}")
    try:
        w, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigensolver did not converge: {exc}") from exc
    w = w[::-1].copy()
    q = q[:, ::-1].copy()
    # sign convention: first non-negligible component of each column positive
    for j in range(q.shape[1]):
        col = q[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0.0:
            q[:, j] = -col
    return EigenSystem(eigenvalues=w, eigenvectors=q)


@dataclass(frozen=True)
class EigengapAnalysis:
    """Gap sequence, chord distances, and the selected elbow.

    Gap indices follow the 1-based convention: ``gaps[j]`` is the gap between
    eigenvalues j+1 and j+2, i.e. gap number ``i = j + 1``. ``elbow_index``
    is that 1-based gap number, so ``k_opt == elbow_index + 1`` before
    clamping to [2, n-1]. ``degenerate`` flags a flat distance profile
    (all chord distances at or below 1e-12), in which case the elbow
    defaults to the first gap.
    """

    gaps: np.ndarray
    distances: np.ndarray
    elbow_index: int
    k_opt: int
    degenerate: bool = False


def chord_distances(gaps: np.ndarray) -> np.ndarray:
    """Perpendicular distance of each gap point to the first-to-last chord.

    Point i (1-based) is (i, gaps[i-1]); the chord runs from point 1 to
    point n-1. Endpoints have distance exactly 0.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    m = gaps.shape[0]
    x = np.arange(1, m + 1, dtype=np.float64)
    dx = x[-1] - x[0]
    dy = gaps[-1] - gaps[0]
    norm = np.hypot(dx, dy)
    return np.abs(dx * (gaps - gaps[0]) - dy * (x - x[0])) / norm


def eigengap_elbow(eigenvalues: np.ndarray) -> EigengapAnalysis:
    """Select a cluster-count estimate from a descending eigenvalue sequence.

    Ties in the distance maximum break toward the smallest index, which
    favors the coarser segmentation and keeps the result deterministic.
    Raises TooFewEigenvalues for fewer than 4 eigenvalues.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    n = lam.shape[0]
    if n < 4:
        raise TooFewEigenvalues(f"need at least 4 eigenvalues, got {n}")
    gaps = lam[:-1] - lam[1:]
    d = chord_distances(gaps)
    degenerate = bool(np.all(d <= DEGENERATE_TOL))
    if degenerate:
        istar = 1
    else:
        istar = int(np.argmax(d)) + 1  # argmax returns smallest index on ties
    k_opt = min(max(istar + 1, 2), n - 1)
    return EigengapAnalysis(
        gaps=gaps, distances=d, elbow_index=istar, k_opt=k_opt, degenerate=degenerate
    )


def spectrum_dump(eigenvalues: np.ndarray, analysis: EigengapAnalysis) -> dict:
    """JSON-ready dict of the spectrum diagnostics."""
    return {
        "eigenvalues": [float(v) for v in np.asarray(eigenvalues)],
        "gaps": [float(v) for v in analysis.gaps],
        "distances": [float(v) for v in analysis.distances],
        "elbow_index": int(analysis.elbow_index),
        "k_opt": int(analysis.k_opt),
        "degenerate": bool(analysis.degenerate),
    }
