import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facefill.completion import (
    POISSON_RESIDUAL_LIMIT,
    CompletionRequest,
    complete,
    composite,
    guidance_field,
    poisson_blend,
)
from facefill.masking import MaskSpec, rect_mask
from facefill.networks import build_model, desk_specs


@pytest.fixture(scope="module")
def tiny_model():
    return build_model(*desk_specs(image_size=32, base_channels=4, bottleneck_dim=32), seed=0)


def random_mask(rng, size):
    bitmap = rng.random((size, size)) < 0.35
    if not bitmap.any():
        bitmap[size // 2, size // 2] = True
    return MaskSpec(bitmap=bitmap)


class TestComposite:
    def test_two_by_two_hand_case(self):
        original = np.zeros((2, 2, 3))
        generated = np.ones((2, 2, 3))
        mask = MaskSpec(bitmap=np.array([[True, False], [False, True]]))
        out = composite(original, generated, mask)
        assert out[0, 0].tolist() == [1.0, 1.0, 1.0]
        assert out[0, 1].tolist() == [0.0, 0.0, 0.0]
        assert out[1, 0].tolist() == [0.0, 0.0, 0.0]
        assert out[1, 1].tolist() == [1.0, 1.0, 1.0]

    def test_outside_bit_identical(self):
        rng = np.random.default_rng(0)
        original = rng.random((16, 16, 3))
        generated = rng.random((16, 16, 3))
        mask = rect_mask(16, 3, 4, 5, 6)
        out = composite(original, generated, mask)
        outside = ~mask.bitmap
        assert np.array_equal(out[outside], original[outside])
        assert np.array_equal(out[mask.bitmap], generated[mask.bitmap])

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        original = rng.random((8, 8, 3))
        generated = rng.random((8, 8, 3))
        mask = rect_mask(8, 1, 1, 4, 4)
        once = composite(original, generated, mask)
        twice = composite(once, generated, mask)
        assert np.array_equal(once, twice)

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            composite(np.zeros((4, 4, 3)), np.zeros((8, 8, 3)), rect_mask(4, 0, 0, 1, 1))
        with pytest.raises(ValueError):
            composite(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), rect_mask(8, 0, 0, 1, 1))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_exactness_random_masks(self, seed):
        rng = np.random.default_rng(seed)
        original = rng.random((12, 12, 3))
        generated = rng.random((12, 12, 3))
        mask = random_mask(rng, 12)
        out = composite(original, generated, mask)
        sel = np.where(mask.bitmap[:, :, None], generated, original)
        assert np.abs(out - sel).max() == 0.0


class TestGuidanceField:
    def test_forward_differences(self):
        src = np.arange(12, dtype=np.float64).reshape(3, 4)[..., None] / 11.0
        gf = guidance_field(src)
        assert gf.gx[0, 0, 0] == pytest.approx(1 / 11)
        assert gf.gy[0, 0, 0] == pytest.approx(4 / 11)
        # zero padding in the last column/row
        assert np.all(gf.gx[:, -1] == 0.0)
        assert np.all(gf.gy[-1, :] == 0.0)

    def test_constant_source_zero_field(self):
        gf = guidance_field(np.full((5, 5, 3), 0.3))
        assert np.all(gf.gx == 0.0)
        assert np.all(gf.gy == 0.0)


def dense_blend_reference(target, source, bitmap):
    """Direct dense solve of the same blend equations, one channel at a time."""
    h, w = bitmap.shape
    pr, pc = np.nonzero(bitmap)
    n = len(pr)
    index = {(r, c): i for i, (r, c) in enumerate(zip(pr, pc))}
    out = target.copy()
    for ch in range(target.shape[2]):
        a = np.zeros((n, n))
        b = np.zeros(n)
        for i, (r, c) in enumerate(zip(pr, pc)):
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                qr, qc = r + dr, c + dc
                if not (0 <= qr < h and 0 <= qc < w):
                    continue
                a[i, i] += 1.0
                b[i] += source[r, c, ch] - source[qr, qc, ch]
                if bitmap[qr, qc]:
                    a[i, index[(qr, qc)]] -= 1.0
                else:
                    b[i] += target[qr, qc, ch]
        x = np.linalg.solve(a, b)
        for i, (r, c) in enumerate(zip(pr, pc)):
            out[r, c, ch] = x[i]
    return np.clip(out, 0.0, 1.0)


class TestPoissonBlend:
    def test_seamless_identity(self):
        # blending an image into itself returns it exactly (fixed point)
        rng = np.random.default_rng(2)
        img = rng.random((16, 16, 3))
        mask = rect_mask(16, 4, 4, 8, 8)
        out = poisson_blend(img, img, mask)
        assert np.abs(out - img).max() <= 1e-9

    def test_boundary_pixels_unchanged(self):
        rng = np.random.default_rng(3)
        target = rng.random((16, 16, 3))
        source = rng.random((16, 16, 3))
        mask = rect_mask(16, 5, 5, 6, 6)
        out = poisson_blend(target, source, mask)
        outside = ~mask.bitmap
        assert np.array_equal(out[outside], target[outside])

    def test_single_unknown_analytic(self):
        # one masked pixel, flat source: solution is the mean of the four
        # neighbor targets (4u = sum of neighbors + zero guidance)
        target = np.zeros((3, 3, 1))
        target[0, 1, 0] = 0.4
        target[2, 1, 0] = 0.8
        target[1, 0, 0] = 0.2
        target[1, 2, 0] = 0.6
        target3 = np.repeat(target, 3, axis=2)
        source3 = np.full((3, 3, 3), 0.5)
        mask = rect_mask(3, 1, 1, 1, 1)
        out = poisson_blend(target3, source3, mask)
        assert out[1, 1, 0] == pytest.approx(0.5, abs=1e-9)

    def test_constant_offset_preserves_gradients(self):
        # target = source + constant: interior follows the target offset,
        # source gradients are reproduced exactly
        rng = np.random.default_rng(4)
        source = rng.random((10, 10, 3)) * 0.5
        target = np.clip(source + 0.25, 0.0, 1.0)
        mask = rect_mask(10, 3, 3, 4, 4)
        out = poisson_blend(target, source, mask)
        assert np.abs(out - target).max() <= 1e-7

    @pytest.mark.parametrize("size", [8, 12, 16])
    def test_matches_dense_direct_solve(self, size):
        rng = np.random.default_rng(size)
        target = rng.random((size, size, 3))
        source = rng.random((size, size, 3))
        bitmap = rng.random((size, size)) < 0.3
        bitmap[size // 2, size // 2] = True
        mask = MaskSpec(bitmap=bitmap)
        fast = poisson_blend(target, source, mask)
        slow = dense_blend_reference(target, source, bitmap)
        assert np.abs(fast - slow).max() <= 1e-6

    def test_mask_touching_border(self):
        # border pixels have fewer in-image neighbors; system stays solvable
        rng = np.random.default_rng(5)
        target = rng.random((8, 8, 3))
        source = rng.random((8, 8, 3))
        mask = rect_mask(8, 0, 0, 4, 4)
        out = poisson_blend(target, source, mask)
        assert np.all(np.isfinite(out))
        slow = dense_blend_reference(target, source, mask.bitmap)
        assert np.abs(out - slow).max() <= 1e-6

    def test_full_frame_mask(self):
        # no boundary anywhere: solution reproduces source up to its mean
        # being free; identity case still must hold exactly
        rng = np.random.default_rng(6)
        img = rng.random((8, 8, 3))
        mask = rect_mask(8, 0, 0, 8, 8)
        out = poisson_blend(img, img, mask)
        assert np.abs(out - img).max() <= 1e-6

    def test_residual_limit_is_strict(self):
        assert POISSON_RESIDUAL_LIMIT == 1e-4

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            poisson_blend(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), MaskSpec(bitmap=np.zeros((4, 4), dtype=bool)))

    def test_values_clipped(self):
        rng = np.random.default_rng(7)
        target = rng.random((8, 8, 3))
        source = rng.random((8, 8, 3))
        out = poisson_blend(target, source, rect_mask(8, 2, 2, 4, 4))
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestCompletionRequest:
    def test_validates_image(self):
        with pytest.raises(ValueError):
            CompletionRequest(image=np.full((8, 8, 3), 2.0), mask=rect_mask(8, 0, 0, 2, 2))

    def test_validates_size_match(self):
        with pytest.raises(ValueError):
            CompletionRequest(image=np.zeros((8, 8, 3)), mask=rect_mask(16, 0, 0, 2, 2))


class TestComplete:
    def test_non_mask_pixels_untouched(self, tiny_model):
        rng = np.random.default_rng(8)
        img = rng.random((32, 32, 3))
        mask = rect_mask(32, 8, 8, 12, 12)
        out = complete(CompletionRequest(image=img, mask=mask, seed=0), tiny_model)
        outside = ~mask.bitmap
        assert np.array_equal(out[outside], img[outside])

    def test_deterministic_per_seed(self, tiny_model):
        rng = np.random.default_rng(9)
        img = rng.random((32, 32, 3))
        mask = rect_mask(32, 4, 4, 10, 10)
        a = complete(CompletionRequest(image=img, mask=mask, seed=7), tiny_model)
        b = complete(CompletionRequest(image=img, mask=mask, seed=7), tiny_model)
        assert np.array_equal(a, b)

    def test_seed_changes_only_mask_pixels(self, tiny_model):
        rng = np.random.default_rng(10)
        img = rng.random((32, 32, 3))
        mask = rect_mask(32, 4, 4, 10, 10)
        a = complete(CompletionRequest(image=img, mask=mask, seed=1), tiny_model)
        b = complete(CompletionRequest(image=img, mask=mask, seed=2), tiny_model)
        outside = ~mask.bitmap
        assert np.array_equal(a[outside], b[outside])

    def test_empty_mask_warns_and_returns_input(self, tiny_model):
        rng = np.random.default_rng(11)
        img = rng.random((32, 32, 3))
        empty = MaskSpec(bitmap=np.zeros((32, 32), dtype=bool))
        with pytest.warns(UserWarning, match="empty mask"):
            out = complete(CompletionRequest(image=img, mask=empty), tiny_model)
        assert np.array_equal(out, img)
        assert out is not img

    def test_blend_keeps_outside_exact(self, tiny_model):
        rng = np.random.default_rng(12)
        img = rng.random((32, 32, 3))
        mask = rect_mask(32, 8, 8, 10, 10)
        out = complete(CompletionRequest(image=img, mask=mask, seed=0, blend=True), tiny_model)
        outside = ~mask.bitmap
        assert np.array_equal(out[outside], img[outside])
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_wrong_image_size_rejected(self, tiny_model):
        with pytest.raises(ValueError):
            complete(CompletionRequest(image=np.zeros((16, 16, 3)), mask=rect_mask(16, 0, 0, 4, 4)), tiny_model)

    def test_missing_model_rejected(self):
        with pytest.raises(ValueError):
            complete(CompletionRequest(image=np.zeros((32, 32, 3)), mask=rect_mask(32, 0, 0, 4, 4)), None)

    def test_oversized_mask_warns(self, tiny_model):
        rng = np.random.default_rng(13)
        img = rng.random((32, 32, 3))
        big = rect_mask(32, 0, 0, 32, 32)  # 1024 pixels < limit, so craft >limit via model at 128? use area check
        # the soft limit is 4096 pixels; a 32x32 frame cannot exceed it, so
        # check the warning path directly at a larger frame with the raw fn
        from facefill.masking import warn_if_oversized

        with pytest.warns(UserWarning):
            warn_if_oversized(rect_mask(128, 0, 0, 65, 65))
        # and the complete() path stays silent for in-limit masks
        import warnings as _w

        with _w.catch_warnings():
            _w.simplefilter("error")
            complete(CompletionRequest(image=img, mask=big, seed=0), tiny_model)
