"""Built-in feature extractor, CAMF tensor files, and region downsampling."""
from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from camoscore import features
from camoscore.errors import FormatError, ShapeError
from conftest import flat_image, noise_image


class TestExtractFeatures:
    def test_grid_shape_and_dim(self):
        fm = features.extract_features(noise_image(10, 12, seed=30))
        assert fm.grid_shape == (5, 6)
        assert fm.dim == features.BUILTIN_DIM == 17
        assert fm.extractor_id == features.BUILTIN_ID

    def test_odd_sizes_round_up(self):
        fm = features.extract_features(noise_image(9, 11, seed=31))
        assert fm.grid_shape == (5, 6)

    def test_constant_image(self):
        # Mean channels carry the constant; std, gradient, entropy, and
        # contrast channels are exactly zero at every cell.
        img = flat_image(10, 12, (0.6, 0.4, 0.2))
        v = features.extract_features(img).vectors
        assert np.allclose(v[:, :, 0], 0.6)
        assert np.allclose(v[:, :, 1], 0.4)
        assert np.allclose(v[:, :, 2], 0.2)
        assert np.abs(v[:, :, 3:]).max() == 0.0

    def test_vertical_step_orientation_histogram(self):
        # Hand-derived: the step between columns 7 and 8 puts nonzero
        # Sobel response on exactly those two columns, so a 5x5 window
        # centered on column 8 holds 10 of 25 oriented pixels, all in
        # the horizontal-gradient bin (angle 0 -> bin 4).
        img = np.zeros((16, 16, 3))
        img[:, 8:] = 0.8
        v = features.extract_features(img).vectors
        cell = v[4, 4]  # pixel (8, 8), interior, on the bright side
        hist = cell[6:14]
        assert hist[4] == pytest.approx(0.4, abs=1e-12)
        assert np.abs(np.delete(hist, 4)).max() == 0.0
        assert cell[0] == pytest.approx(0.48, abs=1e-12)   # 15 of 25 px at 0.8
        assert cell[16] == pytest.approx(0.8, abs=1e-12)   # window max - min
        expected_entropy = -(0.6 * math.log2(0.6) + 0.4 * math.log2(0.4)) / 4
        assert cell[15] == pytest.approx(expected_entropy, abs=1e-12)
        far = v[4, 1]  # pixel (8, 2), away from the step
        assert far[6:14].sum() == 0.0 and far[16] == 0.0

    def test_single_channel_image_supported(self):
        img = noise_image(12, 12, seed=32)[:, :, :1]
        fm = features.extract_features(img)
        assert fm.dim == 17
        assert np.array_equal(fm.vectors[:, :, 0], fm.vectors[:, :, 1])

    def test_values_finite(self):
        fm = features.extract_features(noise_image(20, 20, seed=33))
        assert np.isfinite(fm.vectors).all()

    def test_deterministic(self):
        img = noise_image(14, 14, seed=34)
        a = features.extract_features(img).vectors
        b = features.extract_features(img).vectors
        assert np.array_equal(a, b)


class TestFeatureFiles:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(35)
        vectors = rng.uniform(-2, 2, size=(6, 5, 17)).astype(np.float32)
        fm = features.FeatureMap(vectors=vectors, extractor_id="test")
        path = tmp_path / "x.feat"
        features.write_feature_file(path, fm)
        back = features.read_feature_file(path)
        assert back.grid_shape == (6, 5) and back.dim == 17
        assert np.array_equal(back.vectors, vectors)
        assert back.vectors.dtype == np.float32

    def test_header_layout(self, tmp_path):
        vectors = np.zeros((2, 3, 4), dtype=np.float32)
        path = tmp_path / "h.feat"
        features.write_feature_file(path, features.FeatureMap(vectors, "t"))
        blob = path.read_bytes()
        assert blob[:4] == b"CAMF"
        assert struct.unpack("<IIII", blob[4:20]) == (1, 2, 3, 4)
        assert len(blob) == 20 + 2 * 3 * 4 * 4

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.feat"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            features.read_feature_file(path)

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "v.feat"
        path.write_bytes(b"CAMF" + struct.pack("<IIII", 9, 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError):
            features.read_feature_file(path)

    def test_truncated_payload_rejected(self, tmp_path):
        vectors = np.ones((4, 4, 3), dtype=np.float32)
        path = tmp_path / "t.feat"
        features.write_feature_file(path, features.FeatureMap(vectors, "t"))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(FormatError):
            features.read_feature_file(path)

    def test_non_finite_rejected(self, tmp_path):
        vectors = np.full((2, 2, 2), np.nan, dtype=np.float32)
        path = tmp_path / "n.feat"
        features.write_feature_file(path, features.FeatureMap(vectors, "t"))
        with pytest.raises(FormatError):
            features.read_feature_file(path)

    def test_sidecar_naming(self):
        assert features.feature_sidecar("/a/b/img.png").name == "img.feat"


class TestRegionCells:
    def test_majority_vote_stride_two(self):
        # 2x2 blocks: 4/4 and 3/4 select, 2/4 ties out, 1/4 and 0/4 drop.
        region = np.zeros((4, 10), dtype=bool)
        region[0:2, 0:2] = True                       # block 0: 4/4
        region[0:2, 2:4] = [[True, True], [True, False]]   # block 1: 3/4
        region[0:2, 4:6] = [[True, False], [False, True]]  # block 2: 2/4 tie
        region[0:2, 6:8] = [[False, False], [True, False]]  # block 3: 1/4
        fm = features.FeatureMap(np.zeros((2, 5, 17)), "t", stride=2)
        selected, tied = features.region_cells(fm, region)
        assert selected[0].tolist() == [True, True, False, False, False]
        assert tied[0].tolist() == [False, False, True, False, False]

    def test_partition_never_double_counts(self, rng):
        region = rng.uniform(size=(13, 17)) > 0.5
        fm = features.FeatureMap(np.zeros((7, 9, 17)), "t", stride=2)
        selected, tied = features.region_cells(fm, region)
        assert not (selected & tied).any()

    def test_disjoint_regions_give_disjoint_cells(self, rng):
        region = rng.uniform(size=(16, 16)) > 0.5
        fm = features.FeatureMap(np.zeros((8, 8, 17)), "t", stride=2)
        sel_a, _ = features.region_cells(fm, region)
        sel_b, _ = features.region_cells(fm, ~region)
        assert not (sel_a & sel_b).any()

    def test_external_grid_proportional_blocks(self):
        # A 3-cell grid over 9 pixels owns blocks of 3 pixels each.
        region = np.zeros((9, 9), dtype=bool)
        region[0:3, 0:9] = True
        fm = features.FeatureMap(np.zeros((3, 3, 5)), "ext")
        selected, tied = features.region_cells(fm, region)
        assert selected[0].all() and not selected[1:].any()
        assert not tied.any()

    def test_grid_finer_than_image_rejected(self):
        fm = features.FeatureMap(np.zeros((10, 10, 3)), "ext")
        with pytest.raises(ShapeError):
            features.region_cells(fm, np.zeros((5, 5), dtype=bool))
