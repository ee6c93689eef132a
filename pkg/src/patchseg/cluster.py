"""Spectral embedding, candidate-K clustering, silhouette scoring, and the
bandwidth search.

Candidates K are drawn from a relative window around the elbow estimate,
each candidate is clustered on the first K eigenvector columns (largest
eigenvalues first, since the decomposition is of the affinity matrix), and
the silhouette score picks the winner. Clustering is seeded k-means++ with
restarts so the whole search is a pure function of (eigensystem, beta, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadBeta, SingleCluster
from .spectral import EigenSystem, EigengapAnalysis

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-6

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, k: int) -> int:
    """Per-candidate sub-seed from one top-level seed.

    Splitmix-style mixing keyed on (seed, k): widening or shrinking the
    candidate window never perturbs the clustering of any other candidate.
    """
    return _splitmix64((seed & _MASK64) ^ _splitmix64(k & _MASK64))


def candidate_range(k_opt: int, beta: float, n: int) -> tuple[int, int]:
    """Inclusive candidate window [floor(k_opt(1-beta)), ceil(k_opt(1+beta))],
    clamped to the valid cluster counts [2, n-1]."""
    if not (0.0 < beta < 1.0):
        raise BadBeta(f"beta must lie in (0, 1), got {beta}")
    if not (2 <= k_opt <= n - 1):
        raise ValueError(f"k_opt {k_opt} outside [2, {n - 1}]")
    k_lo = max(2, math.floor(k_opt * (1.0 - beta)))
    k_hi = min(n - 1, math.ceil(k_opt * (1.0 + beta)))
    return k_lo, k_hi


@dataclass(frozen=True)
class ClusterAssignment:
    """One clustering of the embedding rows.

    Labels are canonical: the cluster of row 0 is label 0, the next unseen
    cluster is label 1, and so on. Every label in [0, k) is used at least
    once. ``inertia`` is the sum of squared distances to assigned centroids.
    """

    k: int
    labels: np.ndarray
    inertia: float


def _assign(u: np.ndarray, u_sq: np.ndarray, centers: np.ndarray, k: int):
    """Nearest-center labels and counts, with empty-cluster repair: each
    empty cluster receives the point farthest from its centroid."""
    n = u.shape[0]
    dist = u_sq[:, None] + (centers * centers).sum(axis=1)[None, :] - 2.0 * (u @ centers.T)
    labels = dist.argmin(axis=1)
    assigned = dist[np.arange(n), labels]
    counts = np.bincount(labels, minlength=k)
    while np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        far = int(np.argmax(assigned))
        labels[far] = j
        assigned[far] = 0.0
        counts = np.bincount(labels, minlength=k)
    return labels, counts


def _kmeans_once(u: np.ndarray, u_sq: np.ndarray, k: int, rng: np.random.Generator):
    """One k-means++ initialization plus Lloyd iterations."""
    n = u.shape[0]
    centers = np.empty((k, u.shape[1]), dtype=np.float64)
    centers[0] = u[rng.integers(n)]
    d2 = ((u - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            centers[j] = u[rng.choice(n, p=d2 / total)]
        else:  # all points coincide with chosen centers
            centers[j] = u[rng.integers(n)]
        d2 = np.minimum(d2, ((u - centers[j]) ** 2).sum(axis=1))

    eye = np.eye(k, dtype=np.float64)
    prev_labels = None
    prev_inertia = np.inf
    for _ in range(KMEANS_MAX_ITER):
        labels, counts = _assign(u, u_sq, centers, k)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        centers = (eye[labels].T @ u) / counts[:, None]
        inertia = float(((u - centers[labels]) ** 2).sum())
        if np.isfinite(prev_inertia) and prev_inertia - inertia <= KMEANS_REL_TOL * max(
            prev_inertia, 1e-300
        ):
            break
        prev_inertia = inertia

    labels, counts = _assign(u, u_sq, centers, k)
    centers = (eye[labels].T @ u) / counts[:, None]
    inertia = float(((u - centers[labels]) ** 2).sum())
    return labels, inertia


def _canonicalize(labels: np.ndarray, k: int) -> np.ndarray:
    """Relabel clusters in order of first occurrence."""
    mapping = np.full(k, -1, dtype=np.int64)
    nxt = 0
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if mapping[lab] < 0:
            mapping[lab] = nxt
            nxt += 1
        out[i] = mapping[lab]
    return out


def cluster_embedding(u: np.ndarray, k: int, seed: int) -> ClusterAssignment:
    """Cluster embedding rows into k groups with seeded k-means++.

    Ten restarts, 300 Lloyd iterations each, relative inertia tolerance 1e-6;
    the restart with the lowest inertia wins, earlier restart on ties. Output
    labels are canonicalized by first occurrence, so the result is invariant
    to internal centroid ordering.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    if not (2 <= k <= n - 1):
        raise ValueError(f"k {k} outside [2, {n - 1}]")
    rng = np.random.default_rng(seed)
    u_sq = (u * u).sum(axis=1)
    best_labels, best_inertia = None, np.inf
    for _ in range(KMEANS_RESTARTS):
        labels, inertia = _kmeans_once(u, u_sq, k, rng)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return ClusterAssignment(
        k=k, labels=_canonicalize(best_labels, k), inertia=best_inertia
    )


def pairwise_distances(u: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix, chunked to bound peak memory."""
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    step = max(1, int(2**22 // max(1, n * u.shape[1])))
    for start in range(0, n, step):
        stop = min(start + step, n)
        diff = u[start:stop, None, :] - u[None, :, :]
        out[start:stop] = np.sqrt((diff * diff).sum(axis=2))
    return out


def _silhouette_from_distances(dist: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise SingleCluster("silhouette needs at least 2 distinct labels")

    onehot = (labels[:, None] == uniq[None, :]).astype(np.float64)
    counts = onehot.sum(axis=0)
    sums = dist @ onehot  # sums[i, c] = total distance from i to cluster c

    own = np.searchsorted(uniq, labels)
    own_count = counts[own]
    a = np.zeros(n, dtype=np.float64)
    multi = own_count > 1
    a[multi] = sums[np.arange(n), own][multi] / (own_count[multi] - 1.0)

    other_means = sums / counts[None, :]
    other_means[np.arange(n), own] = np.inf
    b = other_means.min(axis=1)

    denom = np.maximum(a, b)
    s = np.zeros(n, dtype=np.float64)
    valid = multi & (denom > 0.0)
    s[valid] = (b[valid] - a[valid]) / denom[valid]
    return float(s.mean())


def silhouette(u: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette score of a labeling, Euclidean distance in embedding
    space.

    For each point, a is the mean distance to its own cluster's other
    members and b the smallest mean distance to any other cluster; the
    point's score is (b - a) / max(a, b). Points in singleton clusters score
    0, as do points where both means vanish (duplicate coordinates).
    """
    return _silhouette_from_distances(pairwise_distances(u), labels)


@dataclass(frozen=True)
class CandidateResult:
    k: int
    silhouette: float
    assignment: ClusterAssignment


@dataclass(frozen=True)
class ClusterSelection:
    """Full record of one bandwidth search."""

    k_opt: int
    beta: float
    candidates: list[CandidateResult] = field(repr=False)
    best_k: int = 0
    best_labels: np.ndarray = None
    best_score: float = float("-inf")

    def trace_dump(self) -> dict:
        """JSON-ready dict of the search trace."""
        return {
            "k_opt": int(self.k_opt),
            "beta": float(self.beta),
            "candidates": [
                {
                    "k": int(c.k),
                    "silhouette": float(c.silhouette),
                    "inertia": float(c.assignment.inertia),
                }
                for c in self.candidates
            ],
            "best_k": int(self.best_k),
            "best_silhouette": float(self.best_score),
        }


def select_clusters(
    eig: EigenSystem,
    analysis: EigengapAnalysis,
    beta: float,
    seed: int,
    fixed_k: int | None = None,
    row_normalize: bool = False,
) -> ClusterSelection:
    """Search the candidate window and keep the silhouette-best clustering.

    Candidates run in ascending k; the best score wins with ties broken
    toward smaller k. Each candidate k clusters the first k eigenvector
    columns under its own derived sub-seed. ``fixed_k`` bypasses the window
    and evaluates exactly one candidate (ablation mode). ``row_normalize``
    optionally unit-normalizes embedding rows before clustering; default off.
    """
    n = eig.n
    if fixed_k is not None:
        if not (2 <= fixed_k <= n - 1):
            raise ValueError(f"fixed_k {fixed_k} outside [2, {n - 1}]")
        k_lo = k_hi = fixed_k
    else:
        k_lo, k_hi = candidate_range(analysis.k_opt, beta, n)

    # pairwise squared distances grow column by column as k increases, so
    # accumulate them across candidates instead of recomputing per k; columns
    # add in ascending order, matching a sequential per-coordinate sum
    sq_accum: np.ndarray | None = None
    if not row_normalize:
        sq_accum = np.zeros((n, n), dtype=np.float64)
        for c in range(k_lo):
            col = eig.eigenvectors[:, c]
            sq_accum += (col[:, None] - col[None, :]) ** 2

    candidates: list[CandidateResult] = []
    best: CandidateResult | None = None
    for k in range(k_lo, k_hi + 1):
        u = eig.eigenvectors[:, :k]
        if row_normalize:
            norms = np.linalg.norm(u, axis=1, keepdims=True)
            u = u / np.where(norms > 0.0, norms, 1.0)
        assignment = cluster_embedding(u, k, derive_seed(seed, k))
        if sq_accum is None:
            score = silhouette(u, assignment.labels)
        else:
            if k > k_lo:
                col = eig.eigenvectors[:, k - 1]
                sq_accum += (col[:, None] - col[None, :]) ** 2
            score = _silhouette_from_distances(np.sqrt(sq_accum), assignment.labels)
        cand = CandidateResult(k=k, silhouette=score, assignment=assignment)
        candidates.append(cand)
        if best is None or score > best.silhouette:
            best = cand
    return ClusterSelection(
        k_opt=analysis.k_opt,
        beta=beta,
        candidates=candidates,
        best_k=best.k,
        best_labels=best.assignment.labels,
        best_score=best.silhouette,
    )
