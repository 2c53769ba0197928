import numpy as np
import pytest

from facefill.networks import NUM_PARSE_LABELS
from facefill.synthetic import (
    LABEL_BACKGROUND,
    LABEL_HAIR,
    LABEL_INNER_MOUTH,
    LABEL_LEFT_EYE,
    LABEL_NOSE,
    LABEL_RIGHT_EYE,
    LABEL_SKIN,
    make_face_dataset,
    make_identity_dataset,
    make_parsing_dataset,
    render_face,
    sample_face_params,
)


@pytest.fixture(scope="module")
def face():
    params = sample_face_params(np.random.default_rng(0))
    return render_face(params, size=64)


class TestRenderFace:
    def test_image_contract(self, face):
        img, labels = face
        assert img.shape == (64, 64, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert labels.shape == (64, 64)

    def test_all_major_regions_present(self, face):
        _, labels = face
        present = set(np.unique(labels))
        required = {
            LABEL_BACKGROUND,
            LABEL_SKIN,
            LABEL_LEFT_EYE,
            LABEL_RIGHT_EYE,
            LABEL_NOSE,
            LABEL_INNER_MOUTH,
            LABEL_HAIR,
        }
        assert required <= present
        assert present <= set(range(NUM_PARSE_LABELS))

    def test_eyes_left_of_right(self, face):
        _, labels = face
        left_cols = np.nonzero(labels == LABEL_LEFT_EYE)[1]
        right_cols = np.nonzero(labels == LABEL_RIGHT_EYE)[1]
        assert left_cols.max() < right_cols.min()

    def test_deterministic_without_jitter(self):
        params = sample_face_params(np.random.default_rng(1))
        a_img, a_lbl = render_face(params, size=32)
        b_img, b_lbl = render_face(params, size=32)
        assert np.array_equal(a_img, b_img)
        assert np.array_equal(a_lbl, b_lbl)

    def test_jitter_changes_pixels_not_structure(self):
        params = sample_face_params(np.random.default_rng(2))
        base, _ = render_face(params, size=32)
        jit, jit_lbl = render_face(params, size=32, jitter_rng=np.random.default_rng(3))
        assert not np.array_equal(base, jit)
        assert jit_lbl.shape == (32, 32)


class TestDatasets:
    def test_face_dataset_deterministic(self):
        a = make_face_dataset(3, size=32, seed=7)
        b = make_face_dataset(3, size=32, seed=7)
        assert len(a) == 3
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_different_seed_differs(self):
        a = make_face_dataset(2, size=32, seed=1)
        b = make_face_dataset(2, size=32, seed=2)
        assert not np.array_equal(a[0], b[0])

    def test_parsing_dataset_pairs(self):
        pairs = make_parsing_dataset(2, size=32, seed=0)
        for img, labels in pairs:
            assert img.shape == (32, 32, 3)
            assert labels.shape == (32, 32)
            assert labels.max() < NUM_PARSE_LABELS

    def test_identity_dataset_structure(self):
        sets = make_identity_dataset(3, 4, size=32, seed=0)
        assert sorted(sets) == ["id000", "id001", "id002"]
        for images in sets.values():
            assert len(images) == 4
            # same identity, jittered: near but not identical
            assert not np.array_equal(images[0], images[1])
            assert np.abs(images[0] - images[1]).mean() < 0.2

    def test_identities_differ_more_than_jitter(self):
        sets = make_identity_dataset(2, 2, size=32, seed=5)
        a, b = sets["id000"], sets["id001"]
        within = np.abs(a[0] - a[1]).mean()
        across = np.abs(a[0] - b[0]).mean()
        assert across > within
