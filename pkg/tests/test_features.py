import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchseg import errors
from patchseg.features import (
    HEADER_SIZE,
    MAGIC,
    PatchFeatureGrid,
    compute_geometry,
    make_grid,
    read_features,
    write_features,
)


def sample_grid(rows=2, cols=3, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((rows, cols, dim)).astype(np.float32)
    return make_grid(rows * 14, cols * 14, data)


class TestComputeGeometry:
    def test_already_multiple(self):
        g = compute_geometry(448, 644)
        assert (g.resized_h, g.resized_w) == (448, 644)
        assert (g.rows, g.cols) == (32, 46)

    def test_typical_patch_count(self):
        g = compute_geometry(560, 700)
        assert g.rows * g.cols == 2000
        assert (g.rows, g.cols) == (40, 50)

    def test_floor_division(self):
        g = compute_geometry(15, 14)
        assert (g.resized_h, g.resized_w) == (14, 14)
        assert (g.rows, g.cols) == (1, 1)

    def test_too_small(self):
        with pytest.raises(errors.DimensionTooSmall):
            compute_geometry(13, 200)
        with pytest.raises(errors.DimensionTooSmall):
            compute_geometry(200, 13)

    def test_idempotent_on_resized_dims(self):
        g = compute_geometry(393, 527)
        again = compute_geometry(g.resized_h, g.resized_w)
        assert (again.resized_h, again.resized_w) == (g.resized_h, g.resized_w)
        assert (again.orig_h, again.orig_w) == (g.resized_h, g.resized_w)


class TestRoundTrip:
    def test_write_read_identity(self, tmp_path):
        grid = sample_grid()
        path = tmp_path / "g.clspf"
        write_features(grid, path)
        back = read_features(path)
        assert back.geometry == grid.geometry
        assert back.data.dtype == np.float32
        np.testing.assert_array_equal(back.data, grid.data)  # bit-exact

    def test_deterministic_bytes(self, tmp_path):
        grid = sample_grid(seed=3)
        p1, p2 = tmp_path / "a.clspf", tmp_path / "b.clspf"
        write_features(grid, p1)
        write_features(grid, p2)
        assert hashlib.sha256(p1.read_bytes()).hexdigest() == hashlib.sha256(
            p2.read_bytes()
        ).hexdigest()

    @settings(max_examples=25, deadline=None)
    @given(
        rows=st.integers(1, 5),
        cols=st.integers(1, 5),
        dim=st.integers(1, 16),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_round_trip_random_grids(self, tmp_path_factory, rows, cols, dim, seed):
        if rows * cols < 4:
            return
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((rows, cols, dim)).astype(np.float32)
        # guard: norms are positive with probability 1, but be explicit
        data[..., 0] += np.where(np.abs(data[..., 0]) < 1e-3, 1.0, 0.0)
        grid = make_grid(rows * 14 + int(rng.integers(0, 14)),
                         cols * 14 + int(rng.integers(0, 14)), data)
        path = tmp_path_factory.mktemp("rt") / "g.clspf"
        write_features(grid, path)
        back = read_features(path)
        np.testing.assert_array_equal(back.data, grid.data)
        assert back.geometry == grid.geometry


class TestReadErrors:
    def _valid_bytes(self, tmp_path):
        path = tmp_path / "g.clspf"
        write_features(sample_grid(), path)
        return bytearray(path.read_bytes())

    def test_bad_magic(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        raw[:5] = b"WRONG"
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(raw)
        with pytest.raises(errors.BadMagic):
            read_features(bad)

    def test_version_mismatch(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        raw[8] = 2
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(raw)
        with pytest.raises(errors.VersionMismatch):
            read_features(bad)

    def test_truncated_payload(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(raw[:-4])
        with pytest.raises(errors.TruncatedPayload):
            read_features(bad)

    def test_oversized_payload(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(bytes(raw) + b"\0\0\0\0")
        with pytest.raises(errors.TruncatedPayload):
            read_features(bad)

    def test_reserved_nonzero(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        raw[HEADER_SIZE - 1] = 1
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(raw)
        with pytest.raises(errors.CorruptHeader):
            read_features(bad)

    def test_inconsistent_grid_header(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        raw[20] = 9  # rows field no longer matches orig_h // 14
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(raw)
        with pytest.raises(errors.CorruptHeader):
            read_features(bad)

    def test_zero_norm_feature_on_read(self, tmp_path):
        raw = self._valid_bytes(tmp_path)
        raw[HEADER_SIZE : HEADER_SIZE + 8 * 4] = b"\0" * 32  # zero first vector
        bad = tmp_path / "bad.clspf"
        bad.write_bytes(raw)
        with pytest.raises(errors.ZeroNormFeature):
            read_features(bad)

    def test_missing_file(self, tmp_path):
        with pytest.raises(errors.IoFailure):
            read_features(tmp_path / "nope.clspf")

    def test_magic_constant(self):
        assert MAGIC == b"CLSPF\0\0\0"
        assert HEADER_SIZE == 36


class TestWriteErrors:
    def test_zero_norm_rejected_before_write(self, tmp_path):
        data = np.ones((2, 3, 8), dtype=np.float32)
        data[1, 2] = 0.0
        grid = PatchFeatureGrid(geometry=compute_geometry(28, 42), data=data)
        path = tmp_path / "g.clspf"
        with pytest.raises(errors.ZeroNormFeature):
            write_features(grid, path)
        assert not path.exists()

    def test_too_few_patches_rejected(self):
        data = np.ones((1, 3, 4), dtype=np.float32)
        with pytest.raises(errors.CorruptHeader):
            make_grid(14, 42, data)
