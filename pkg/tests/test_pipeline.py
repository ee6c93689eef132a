import hashlib
import json

import numpy as np
import pytest

from patchseg import errors
from patchseg.crf import CrfConfig, upsample_labels
from patchseg.metrics import adjusted_rand_index
from patchseg.pipeline import (
    PipelineConfig,
    label_palette,
    read_mask,
    render_mask,
    segment,
    write_label_png,
)
from patchseg.synth import PlantedSpec, generate


def planted(rows=8, cols=8, k=2, sigma=0.02, seed=0, **kw):
    return generate(
        PlantedSpec(rows=rows, cols=cols, k_true=k, noise_sigma=sigma, seed=seed, **kw)
    )


def region_image(labels, geometry):
    """Synthetic RGB image: one flat color per planted region."""
    pixel_labels = upsample_labels(np.asarray(labels), geometry)
    return label_palette()[(pixel_labels % 255) + 1].astype(np.uint8)


class TestSegment:
    def test_patch_variant_recovers_planted_layout(self):
        grid, labels = planted()
        cfg = PipelineConfig(crf=False)
        result = segment(grid, None, cfg)
        assert result.variant == "patch"
        assert result.k == 2
        ari = adjusted_rand_index(result.patch_mask, labels)
        assert ari >= 0.99

    def test_patch_variant_mask_is_upsampled_patch_mask(self):
        grid, _ = planted(seed=3)
        result = segment(grid, None, PipelineConfig(crf=False))
        np.testing.assert_array_equal(
            result.mask, upsample_labels(result.patch_mask, grid.geometry)
        )

    def test_fixed_k_equals_adaptive_on_planted_instance(self):
        grid, _ = planted(k=2, seed=1)
        adaptive = segment(grid, None, PipelineConfig(crf=False))
        forced = segment(grid, None, PipelineConfig(crf=False, fixed_k=2))
        assert adaptive.k == 2
        np.testing.assert_array_equal(adaptive.mask, forced.mask)

    def test_crf_zero_weights_is_identity_on_labels(self):
        grid, labels = planted(rows=5, cols=5, seed=2)
        image = region_image(labels, grid.geometry)
        cfg = PipelineConfig(
            crf=True,
            crf_config=CrfConfig(
                gauss_compat=0.0, bilat_compat=0.0, iterations=2,
                gauss_sxy=2.0, bilat_sxy=2.0, max_pixels=grid.geometry.orig_h * grid.geometry.orig_w,
            ),
        )
        with_crf = segment(grid, image, cfg)
        without = segment(grid, None, PipelineConfig(crf=False))
        np.testing.assert_array_equal(with_crf.mask, without.mask)

    def test_missing_image_for_crf(self):
        grid, _ = planted()
        with pytest.raises(errors.MissingImageForCrf):
            segment(grid, None, PipelineConfig(crf=True))

    def test_image_dimension_mismatch(self):
        grid, _ = planted()
        bad = np.zeros((10, 10, 3), dtype=np.uint8)
        with pytest.raises(errors.DimensionMismatch):
            segment(grid, bad, PipelineConfig(crf=True))

    def test_deterministic(self):
        grid, labels = planted(rows=5, cols=5, k=3, seed=7)
        image = region_image(labels, grid.geometry)
        cfg = PipelineConfig(
            crf=True,
            crf_config=CrfConfig(
                iterations=3, gauss_sxy=2.0, bilat_sxy=2.0,
                max_pixels=grid.geometry.orig_h * grid.geometry.orig_w,
            ),
        )
        a = segment(grid, image, cfg)
        b = segment(grid, image, cfg)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.k == b.k and a.silhouette == b.silhouette

    def test_crf_downsampling_budget_path(self):
        grid, labels = planted(rows=6, cols=6, k=2, seed=4)
        image = region_image(labels, grid.geometry)
        cfg = PipelineConfig(
            crf=True,
            crf_config=CrfConfig(iterations=2, gauss_sxy=2.0, bilat_sxy=2.0,
                                 max_pixels=1024),  # 84x84 image exceeds this
        )
        result = segment(grid, image, cfg)
        assert result.mask.shape == (grid.geometry.orig_h, grid.geometry.orig_w)
        # region structure survives the round trip through the budgeted CRF
        assert adjusted_rand_index(result.mask, upsample_labels(labels, grid.geometry)) >= 0.95

    def test_result_carries_traces_and_timings(self):
        grid, _ = planted(seed=5)
        result = segment(grid, None, PipelineConfig(crf=False))
        assert result.eigenvalues.shape == (grid.n_patches,)
        assert result.analysis.k_opt >= 2
        assert [c.k for c in result.selection.candidates]
        assert {"affinity", "eigendecomposition", "elbow", "selection", "upsample"} <= set(
            result.timings
        )


class TestRenderMask:
    def test_round_trip_indices(self, tmp_path):
        mask = np.array([[0, 0], [1, 1]], dtype=np.int32)
        out = tmp_path / "m.png"
        render_mask(mask, out, k=2, silhouette=0.5, beta=0.5, seed=0, variant="patch")
        np.testing.assert_array_equal(read_mask(out), mask)

    def test_sidecar_contents(self, tmp_path):
        mask = np.array([[0, 1], [2, 3]], dtype=np.int32)
        out = tmp_path / "m.png"
        sidecar = render_mask(
            mask, out, k=4, silhouette=0.25, beta=0.4, seed=9, variant="pixel"
        )
        meta = json.loads(sidecar.read_text())
        assert meta == {
            "k": 4, "silhouette": 0.25, "beta": 0.4, "seed": 9, "variant": "pixel"
        }

    def test_too_many_labels(self, tmp_path):
        with pytest.raises(errors.TooManyLabels):
            render_mask(
                np.zeros((2, 2), dtype=np.int32), tmp_path / "m.png",
                k=257, silhouette=0.0, beta=0.5, seed=0, variant="patch",
            )
        mask = np.arange(300, dtype=np.int32).reshape(30, 10)
        with pytest.raises(errors.TooManyLabels):
            write_label_png(mask, tmp_path / "m2.png")

    def test_byte_identical_outputs(self, tmp_path):
        rng = np.random.default_rng(0)
        mask = rng.integers(0, 7, size=(40, 30)).astype(np.int32)
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        for p in (p1, p2):
            render_mask(mask, p, k=7, silhouette=0.1, beta=0.5, seed=0, variant="patch")
        assert hashlib.sha256(p1.read_bytes()).digest() == hashlib.sha256(
            p2.read_bytes()
        ).digest()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_palette_is_fixed_and_distinct(self):
        pal = label_palette()
        assert pal.shape == (256, 3)
        np.testing.assert_array_equal(pal, label_palette())
        assert len({tuple(c) for c in pal[:32]}) == 32  # first 32 colors distinct
