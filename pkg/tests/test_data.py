import numpy as np
import pytest

from facefill.data import FaceDataset, dataset_from_arrays, load_image_folder, save_image_folder


class TestFaceDataset:
    def test_valid(self):
        rng = np.random.default_rng(0)
        ds = FaceDataset(images=[rng.random((8, 8, 3))], ids=["a"])
        assert len(ds) == 1
        assert ds.image_size == 8
        assert ds[0] is ds.images[0]

    def test_length_mismatch(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError):
            FaceDataset(images=[rng.random((8, 8, 3))], ids=["a", "b"])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            FaceDataset(images=[], ids=[])

    def test_mixed_sizes_rejected(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError):
            FaceDataset(images=[rng.random((8, 8, 3)), rng.random((16, 16, 3))], ids=["a", "b"])

    def test_labels_length_checked(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            FaceDataset(images=[rng.random((8, 8, 3))], ids=["a"], labels=[])

    def test_from_arrays_ids(self):
        rng = np.random.default_rng(4)
        ds = dataset_from_arrays([rng.random((8, 8, 3)) for _ in range(3)])
        assert ds.ids == ["img0000", "img0001", "img0002"]


class TestImageFolder:
    def test_round_trip_ordered(self, tmp_path):
        rng = np.random.default_rng(5)
        images = [rng.random((16, 16, 3)) for _ in range(4)]
        save_image_folder(images, tmp_path / "faces")
        ds = load_image_folder(tmp_path / "faces")
        assert len(ds) == 4
        assert ds.ids == sorted(ds.ids)
        for img, back in zip(images, ds.images):
            assert np.abs(img - back).max() <= 0.5 / 255 + 1e-12

    def test_missing_folder(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="dataset not found"):
            load_image_folder(tmp_path / "nope")

    def test_empty_folder(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(FileNotFoundError, match="dataset not found"):
            load_image_folder(tmp_path / "empty")

    def test_ignores_non_images(self, tmp_path):
        rng = np.random.default_rng(6)
        save_image_folder([rng.random((8, 8, 3))], tmp_path / "mixed")
        (tmp_path / "mixed" / "notes.txt").write_text("hello")
        assert len(load_image_folder(tmp_path / "mixed")) == 1
