"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines. Tolerances are pinned in the assertions themselves.
"""

import hashlib
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from oracles import (
    exhaustive_kmeans_optimum,
    exhaustive_matching_total,
    naive_mean_field_steps,
    naive_silhouette,
    point_line_distances,
)
from patchseg.cli import main
from patchseg.cluster import candidate_range, cluster_embedding, silhouette, select_clusters
from patchseg.crf import CrfConfig, mean_field_refine, mean_field_steps, unary_from_labels
from patchseg.metrics import (
    ConfusionTable,
    adjusted_rand_index,
    evaluate,
    match_labels,
)
from patchseg.pipeline import PipelineConfig, read_mask, segment
from patchseg.spectral import compute_affinity, eigendecompose, eigengap_elbow
from patchseg.synth import PlantedSpec, block_model_eigenvalues, block_model_matrix, generate


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def run_selection(spec: PlantedSpec):
    grid, planted = generate(spec)
    eig = eigendecompose(compute_affinity(grid))
    analysis = eigengap_elbow(eig.eigenvalues)
    sel = select_clusters(eig, analysis, beta=0.5, seed=spec.seed)
    return sel, planted


def test_eigengap_recovery():
    """best_k == k_true in >= 95% of 100 seeded runs per k_true, under 60 s."""
    with criterion("eigengap recovery (k_true 2..6, sigma 0.02, 16x16, 100 seeds)"):
        start = time.perf_counter()
        rates = {}
        for k_true in (2, 3, 4, 5, 6):
            hits = 0
            for seed in range(100):
                spec = PlantedSpec(
                    rows=16, cols=16, k_true=k_true, noise_sigma=0.02, seed=seed
                )
                sel, _ = run_selection(spec)
                hits += sel.best_k == k_true
            rates[k_true] = hits
            assert hits >= 95, f"k_true={k_true}: {hits}/100 < 95"
        elapsed = time.perf_counter() - start
        print(f"  recovery counts {rates}, {elapsed:.1f}s")
        assert elapsed < 60.0, f"suite took {elapsed:.1f}s >= 60s"


def test_spectral_correctness():
    """Residuals <= 1e-8 on random symmetric 200x200; block model <= 1e-10."""
    with criterion("spectral correctness (20 random 200x200 + block model)"):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = rng.standard_normal((200, 200))
            a = (a + a.T) / 2.0
            eig = eigendecompose(a)
            recon = eig.eigenvectors @ np.diag(eig.eigenvalues) @ eig.eigenvectors.T
            rel = np.linalg.norm(a - recon) / np.linalg.norm(a)
            assert rel <= 1e-8, f"seed {seed}: residual {rel}"
        for k, n, c in ((3, 9, 0.1), (2, 8, 0.0), (4, 20, 0.35), (5, 30, -0.2)):
            lam = block_model_eigenvalues(k, n, c)
            dense = eigendecompose(block_model_matrix(k, n, c)).eigenvalues
            assert np.abs(lam - dense).max() <= 1e-10


def test_elbow_unit_vector():
    """delta = [4, 3, .5, .3, .2, .1] -> i* = 3, k_opt = 4, against an
    independent exhaustive point-to-line distance computation."""
    with criterion("elbow unit vector (i*=3, k_opt=4)"):
        gaps = [4.0, 3.0, 0.5, 0.3, 0.2, 0.1]
        lam = [0.0]
        for g in reversed(gaps):
            lam.append(lam[-1] + g)
        lam = np.array(lam[::-1])
        analysis = eigengap_elbow(lam)

        # independent check: brute-force distance of every point to the line
        # through the first and last gap points
        m = len(gaps)
        x1, y1, x2, y2 = 1.0, gaps[0], float(m), gaps[-1]
        norm = math.hypot(x2 - x1, y2 - y1)
        dists = [
            abs((y2 - y1) * (i + 1.0) - (x2 - x1) * gaps[i] + x2 * y1 - y2 * x1) / norm
            for i in range(m)
        ]
        istar = int(np.argmax(dists)) + 1

        assert istar == 3
        assert analysis.elbow_index == 3
        assert analysis.k_opt == 4
        np.testing.assert_allclose(analysis.distances, dists, atol=1e-12)


def test_silhouette_oracle():
    """50 random embeddings (n <= 300, k <= 8): production silhouette equals
    the naive O(n^2) reference within 1e-12."""
    with criterion("silhouette oracle (50 embeddings vs naive reference)"):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            n = int(rng.integers(10, 301))
            k = int(rng.integers(2, 9))
            d = int(rng.integers(1, 8))
            u = rng.standard_normal((n, d))
            labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
            rng.shuffle(labels)
            got = silhouette(u, labels)
            ref = naive_silhouette(u, labels)
            assert abs(got - ref) <= 1e-12, f"{got} vs {ref}"


def test_clustering_oracle():
    """25 seeded blob instances (n <= 12, k in {2,3}): inertia within 1e-9
    of the exhaustive global optimum."""
    with criterion("clustering oracle (25 instances vs exhaustive optimum)"):
        for seed in range(25):
            rng = np.random.default_rng(1000 + seed)
            n = int(rng.integers(6, 13))
            k = int(rng.integers(2, 4))
            d = int(rng.integers(2, 4))
            centers = 3.0 * rng.standard_normal((k, d))
            assign = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
            points = centers[assign] + 0.4 * rng.standard_normal((n, d))
            got = cluster_embedding(points, k, seed=seed)
            opt = exhaustive_kmeans_optimum(points, k)
            assert abs(got.inertia - opt) <= 1e-9, f"seed {seed}: {got.inertia} vs {opt}"


def test_candidate_range_arithmetic():
    """(9, 0.5) -> [4, 14]; the two clamp cases; exact."""
    with criterion("candidate-range arithmetic"):
        assert candidate_range(9, 0.5, 2000) == (4, 14)
        assert candidate_range(2, 0.5, 2000) == (2, 3)
        assert candidate_range(9, 0.5, 10) == (4, 9)


def test_crf_identity_and_reference():
    """Zero-weight identity; naive-reference agreement within 1e-9 per entry
    per iteration on grids up to 16x16; normalization within 1e-6 every
    iteration; the 8x8 flipped-pixel repair."""
    with criterion("CRF identity and reference equivalence"):
        rng = np.random.default_rng(5)

        # zero-weight kernels: exact label identity
        labels = rng.integers(0, 3, size=(9, 9))
        image = rng.integers(0, 256, size=(9, 9, 3)).astype(np.uint8)
        cfg0 = CrfConfig(iterations=4, gauss_compat=0.0, bilat_compat=0.0,
                         gauss_sxy=2.0, bilat_sxy=2.0, max_pixels=4096)
        out = mean_field_refine(unary_from_labels(labels, 3, 0.8), image, cfg0)
        assert np.array_equal(out, labels)

        # reference equivalence per iteration, 5x6 and 16x16
        for h, w, k, iters in ((5, 6, 3, 3), (16, 16, 3, 2)):
            labels = rng.integers(0, k, size=(h, w))
            image = rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8)
            unary = unary_from_labels(labels, k, 0.8)
            cfg = CrfConfig(iterations=iters, gauss_sxy=2.0, gauss_compat=4.0,
                            bilat_sxy=3.0, bilat_srgb=13.0, bilat_compat=10.0,
                            max_pixels=4096)
            for q_fast, q_ref in zip(
                mean_field_steps(unary, image, cfg),
                naive_mean_field_steps(unary, image, cfg),
            ):
                q_fast = q_fast.reshape(-1, k)
                assert np.abs(q_fast - q_ref).max() <= 1e-9
                assert np.abs(q_fast.sum(axis=1) - 1.0).max() <= 1e-6

        # 8x8 two-region repair of one flipped interior pixel
        true = np.zeros((8, 8), dtype=np.int32)
        true[:, 4:] = 1
        flipped = true.copy()
        flipped[2, 2] = 1
        image = (np.where(true[..., None] == 0, 40, 200) * np.ones(3)).astype(np.uint8)
        cfg = CrfConfig(iterations=20, gt_prob=0.8, gauss_sxy=2.0, gauss_compat=4.0,
                        bilat_sxy=2.0, bilat_srgb=13.0, bilat_compat=10.0,
                        max_pixels=4096)
        repaired = mean_field_refine(unary_from_labels(flipped, 2, 0.8), image, cfg)
        assert repaired[2, 2] == 0
        assert np.array_equal(repaired, true)


def test_metrics_acceptance():
    """Hand-counted 2x2 example exact; relabel invariance over 100 random
    permutations; Hungarian equals exhaustive enumeration up to 5x5."""
    with criterion("metrics (hand example, relabel invariance, Hungarian oracle)"):
        pred = np.array([[0, 0], [1, 1]])
        gt = np.array([[0, 0], [0, 1]])
        res = evaluate(pred, gt)
        assert res.miou == pytest.approx(7 / 12, abs=1e-15)
        assert res.pixel_acc == pytest.approx(3 / 4, abs=1e-15)

        # large mask so the optimal assignment is unique (tied optima make
        # the matched-IoU protocol itself assignment-dependent)
        rng = np.random.default_rng(7)
        pred = rng.integers(0, 6, size=(64, 64))
        gt = rng.integers(0, 4, size=(64, 64))
        ref = evaluate(pred, gt)
        for _ in range(100):
            perm = rng.permutation(6)
            got = evaluate(perm[pred], gt)
            assert got.miou == pytest.approx(ref.miou, abs=1e-12)
            assert got.pixel_acc == pytest.approx(ref.pixel_acc, abs=1e-12)

        for _ in range(30):
            shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            counts = rng.integers(0, 40, size=shape)
            table = ConfusionTable(counts=counts.astype(np.int64), ignore_count=0)
            got = match_labels(table)
            total = sum(int(counts[p, g]) for p, g in got.items())
            assert total == exhaustive_matching_total(counts)


def test_end_to_end_determinism(tmp_path):
    """Same synth input and seed twice -> byte-identical mask files; ARI vs
    planted labels >= 0.99 on the sigma=0.02, k_true=3 instance."""
    with criterion("end-to-end determinism and planted-label agreement"):
        feats = tmp_path / "demo.clspf"
        rc = main(["synth", "--rows", "16", "--cols", "16", "--k", "3",
                   "--sigma", "0.02", "--seed", "0", "--out", str(feats)])
        assert rc == 0

        digests = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            rc = main(["segment", "--features", str(feats), "--no-crf",
                       "--seed", "0", "--out", str(out)])
            assert rc == 0
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

        spec = PlantedSpec(rows=16, cols=16, k_true=3, noise_sigma=0.02, seed=0)
        grid, planted = generate(spec)
        result = segment(grid, None, PipelineConfig(crf=False, seed=0))
        ari = adjusted_rand_index(result.patch_mask, planted)
        assert ari >= 0.99, f"ARI {ari}"

        mask = read_mask(tmp_path / "a.png")
        assert mask.shape == (16 * 14, 16 * 14)


def test_fixed_k_ablation(tmp_path):
    """--fixed-k 3 output equals adaptive output exactly on the planted
    k_true=3 instance."""
    with criterion("fixed-K ablation equals adaptive on planted k=3"):
        feats = tmp_path / "demo.clspf"
        main(["synth", "--rows", "16", "--cols", "16", "--k", "3",
              "--sigma", "0.02", "--seed", "0", "--out", str(feats)])
        adaptive, forced = tmp_path / "adaptive.png", tmp_path / "forced.png"
        assert main(["segment", "--features", str(feats), "--no-crf",
                     "--seed", "0", "--out", str(adaptive)]) == 0
        assert main(["segment", "--features", str(feats), "--no-crf",
                     "--seed", "0", "--fixed-k", "3", "--out", str(forced)]) == 0
        assert adaptive.read_bytes() == forced.read_bytes()
        np.testing.assert_array_equal(read_mask(adaptive), read_mask(forced))
