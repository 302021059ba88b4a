"""Raster ingestion tests: images, tensor files, superpixels, grid fallback."""

import numpy as np
import pytest
from PIL import Image

from cseg.errors import (
    CorruptFileError,
    NotNormalizedError,
    ShapeMismatchError,
    UnsupportedFormatError,
)
from cseg.raster import (
    ImagePlane,
    grid_superpixels,
    load_field,
    load_image,
    load_superpixels,
    load_truth,
    normalize_superpixels,
    save_field,
    save_image,
    save_index_png,
    save_truth,
)

from oracles import is_pixel_connected, superpixels_all_connected


def write_png(path, arr, mode):
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


class TestLoadImage:
    def test_white_pixel_png(self, tmp_path):
        path = tmp_path / "white.png"
        write_png(path, np.full((1, 1, 3), 255, dtype=np.uint8), "RGB")
        plane = load_image(path)
        assert (plane.width, plane.height, plane.channels) == (1, 1, 3)
        assert plane.data.tolist() == [[[1.0, 1.0, 1.0]]]

    def test_ppm_normalization_extremes(self, tmp_path):
        path = tmp_path / "two.ppm"
        path.write_bytes(b"P6\n2 1\n255\n" + bytes([0, 0, 0, 255, 0, 0]))
        plane = load_image(path)
        assert plane.pixel_matrix().tolist() == [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]

    def test_linear_map_is_exact(self, tmp_path):
        values = np.arange(256, dtype=np.uint8).reshape(16, 16)
        path = tmp_path / "ramp.png"
        write_png(path, values, "L")
        plane = load_image(path)
        assert np.array_equal(plane.data[:, :, 0], values / 255.0)

    def test_grayscale_png(self, tmp_path):
        path = tmp_path / "gray.png"
        write_png(path, np.array([[0, 128]], dtype=np.uint8), "L")
        plane = load_image(path)
        assert plane.channels == 1
        assert plane.data[0, 1, 0] == 128 / 255.0

    def test_unsupported_mode(self, tmp_path):
        path = tmp_path / "rgba.png"
        write_png(path, np.zeros((2, 2, 4), dtype=np.uint8), "RGBA")
        with pytest.raises(UnsupportedFormatError):
            load_image(path)

    def test_not_an_image(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not an image")
        with pytest.raises(UnsupportedFormatError):
            load_image(path)

    def test_truncated_png(self, tmp_path):
        good = tmp_path / "good.png"
        write_png(good, np.zeros((8, 8, 3), dtype=np.uint8), "RGB")
        bad = tmp_path / "bad.png"
        bad.write_bytes(good.read_bytes()[:40])
        with pytest.raises(CorruptFileError):
            load_image(bad)

    def test_truncated_ppm(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6\n4 4\n255\n\x00\x00")
        with pytest.raises(CorruptFileError):
            load_image(path)


class TestRoundTrip:
    @pytest.mark.parametrize("suffix", [".png", ".ppm"])
    def test_save_load_save_is_byte_identical(self, tmp_path, suffix):
        rng = np.random.default_rng(7)
        plane = ImagePlane(5, 4, 3, rng.integers(0, 256, (4, 5, 3)) / 255.0)
        first = tmp_path / f"first{suffix}"
        save_image(plane, first)
        second = tmp_path / f"second{suffix}"
        save_image(load_image(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_field_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        values = rng.random((3, 4, 5)).astype(np.float32)
        path = tmp_path / "field.cseg"
        save_field(path, values, dtype="f32")
        loaded = load_field(path)
        assert loaded.values.shape == (3, 4, 5)
        assert np.array_equal(loaded.values, values.astype(np.float64))

    def test_index_png_round_trip(self, tmp_path):
        ids = np.array([[0, 1], [700, 65535]], dtype=np.int64)
        path = tmp_path / "ids.png"
        save_index_png(ids, path)
        with Image.open(path) as img:
            assert np.array_equal(np.asarray(img), ids.astype(np.uint16))


class TestLoadField:
    def test_probability_accepts_exact(self, tmp_path):
        path = tmp_path / "p.cseg"
        save_field(path, np.array([[[0.5, 0.5]]]), dtype="f32", probability=True)
        field = load_field(path, expect_probability=True)
        assert field.probability and field.depth == 2

    def test_probability_rejects_sum_off(self, tmp_path):
        path = tmp_path / "p.cseg"
        save_field(path, np.array([[[0.7, 0.2]]]), dtype="f32")
        with pytest.raises(NotNormalizedError):
            load_field(path, expect_probability=True)

    def test_feature_path_skips_check(self, tmp_path):
        path = tmp_path / "f.cseg"
        save_field(path, np.random.default_rng(1).random((1, 1, 64)) * 9.0)
        field = load_field(path, expect_probability=False)
        assert field.depth == 64 and not field.probability

    def test_payload_length_mismatch(self, tmp_path):
        path = tmp_path / "bad.cseg"
        save_field(path, np.zeros((2, 2, 1)), dtype="f32")
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ShapeMismatchError):
            load_field(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.cseg"
        path.write_bytes(b"CSEG1{not json\n")
        with pytest.raises(CorruptFileError):
            load_field(path)


class TestSuperpixels:
    def test_valid_map_unchanged(self, tmp_path):
        ids = np.array([[0, 0, 1], [2, 2, 1]], dtype=np.int64)
        path = tmp_path / "sp.png"
        save_index_png(ids, path)
        sp = load_superpixels(path)
        assert np.array_equal(sp.ids, ids)

    def test_disconnected_id_is_split(self):
        ids = np.array([[0, 1, 0]])
        sp = normalize_superpixels(ids)
        assert sp.count == 3
        assert superpixels_all_connected(sp.ids)
        # ids stay dense and ordered by (old id, scan order)
        assert sp.ids.tolist() == [[0, 2, 1]]

    def test_sparse_ids_reindexed(self):
        sp = normalize_superpixels(np.array([[5, 5, 9]]))
        assert sp.ids.tolist() == [[0, 0, 1]]

    def test_fuzz_corpus_connected_and_dense(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            raw = rng.integers(0, 6, (rng.integers(2, 9), rng.integers(2, 9)))
            sp = normalize_superpixels(raw)
            assert superpixels_all_connected(sp.ids)
            present = np.unique(sp.ids)
            assert np.array_equal(present, np.arange(len(present)))


class TestTruth:
    def test_raw_tensor_truth(self, tmp_path):
        classes = np.array([[1, 255], [2, 2]], dtype=np.int64)
        instances = np.array([[1, 0], [0, 0]], dtype=np.int64)
        path = tmp_path / "gt.cseg"
        stacked = np.stack([classes, instances], axis=-1)
        save_field(path, stacked, dtype="u16")
        truth = load_truth(path)
        assert np.array_equal(truth.class_ids, classes)
        assert np.array_equal(truth.instance_ids, instances)
        assert truth.valid_mask().tolist() == [[True, False], [True, True]]

    def test_png_pair_truth(self, tmp_path):
        classes = np.array([[3, 3]], dtype=np.int64)
        cpath = tmp_path / "c.png"
        save_index_png(classes, cpath)
        truth = load_truth(cpath)
        assert np.array_equal(truth.instance_ids, np.zeros((1, 2), dtype=np.int32))

    def test_save_truth_round_trip(self, tmp_path):
        classes = np.array([[1, 2]], dtype=np.int64)
        instances = np.array([[0, 7]], dtype=np.int64)
        from cseg.raster import PanopticTruth

        truth = PanopticTruth(2, 1, classes.astype(np.int32), instances.astype(np.int32))
        path = tmp_path / "gt.cseg"
        save_truth(truth, path)
        again = load_truth(path)
        assert np.array_equal(again.class_ids, classes)
        assert np.array_equal(again.instance_ids, instances)


class TestGridSuperpixels:
    def test_exact_tiling(self):
        sp = grid_superpixels(4, 4, 4)
        assert sp.count == 4
        assert sp.ids.tolist() == [
            [0, 0, 1, 1],
            [0, 0, 1, 1],
            [2, 2, 3, 3],
            [2, 2, 3, 3],
        ]

    def test_uneven_split_sizes(self):
        # 5x5 into a 2x2 grid: row/col splits {2,3} or {3,2}, so tile sizes
        # must be the multiset {4, 6, 6, 9}, every tile 4-connected.
        sp = grid_superpixels(5, 5, 4)
        assert sp.count == 4
        assert sorted(sp.sizes().tolist()) == [4, 6, 6, 9]
        assert superpixels_all_connected(sp.ids)

    def test_degenerate_clamp(self):
        sp = grid_superpixels(1, 1, 10)
        assert sp.count == 1 and sp.ids.tolist() == [[0]]

    def test_count_bounds_and_connectivity(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            w, h = int(rng.integers(2, 40)), int(rng.integers(2, 40))
            target = int(rng.integers(1, 12))
            sp = grid_superpixels(w, h, target)
            if w * h >= 2 * target:
                assert target <= sp.count <= 2 * target
            assert superpixels_all_connected(sp.ids)
            assert sp.sizes().sum() == w * h
