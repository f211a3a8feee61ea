import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mobiattn.errors import DatasetError, ParameterError
from mobiattn.imageio import decode_pnm, encode_pnm, read_image, write_image
from mobiattn.preprocess import (AugmentConfig, DatasetStats, augment, brightness_contrast, compute_stats,
                                 draw_augment, hflip, minmax_normalize, resize, rotate, scale, zscore)


def scalar_bilinear(img2d, y, x, clamp):
    """Independent per-point bilinear lookup used as the oracle."""
    h, w = len(img2d), len(img2d[0])
    if clamp:
        y = min(max(y, 0.0), h - 1)
        x = min(max(x, 0.0), w - 1)

    def px(i, j):
        if 0 <= i < h and 0 <= j < w:
            return img2d[i][j]
        return 0.0

    i0, j0 = math.floor(y), math.floor(x)
    dy, dx = y - i0, x - j0
    return ((1 - dy) * (1 - dx) * px(i0, j0) + (1 - dy) * dx * px(i0, j0 + 1)
            + dy * (1 - dx) * px(i0 + 1, j0) + dy * dx * px(i0 + 1, j0 + 1))


def scalar_resize(img2d, oh, ow):
    h, w = len(img2d), len(img2d[0])
    return [[scalar_bilinear(img2d, (i + 0.5) * h / oh - 0.5, (j + 0.5) * w / ow - 0.5, True)
             for j in range(ow)] for i in range(oh)]


images = arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6)),
                elements=st.floats(-10, 10))


class TestResize:
    def test_constant(self):
        img = np.full((2, 3, 5), 0.37)
        for oh, ow in [(1, 1), (7, 2), (3, 5), (10, 11)]:
            npt.assert_allclose(resize(img, oh, ow), 0.37, rtol=0, atol=1e-15)

    def test_identity(self):
        img = np.random.default_rng(0).uniform(size=(3, 4, 6))
        assert np.array_equal(resize(img, 4, 6), img)

    def test_row_upsample_against_scalar_oracle(self):
        img = np.array([[[0.0, 1.0]]])
        out = resize(img, 1, 4)
        expected = scalar_resize([[0.0, 1.0]], 1, 4)
        npt.assert_allclose(out[0], expected, atol=1e-15)
        npt.assert_allclose(out[0, 0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)
        assert np.all(np.diff(out[0, 0]) >= 0)

    def test_random_against_scalar_oracle(self):
        img = np.random.default_rng(1).uniform(size=(1, 5, 3))
        out = resize(img, 7, 4)
        npt.assert_allclose(out[0], scalar_resize(img[0].tolist(), 7, 4), atol=1e-14)

    def test_zero_extent(self):
        with pytest.raises(ParameterError):
            resize(np.ones((1, 2, 2)), 0, 3)

    @given(images, st.integers(1, 9), st.integers(1, 9))
    def test_range(self, img, oh, ow):
        out = resize(img, oh, ow)
        assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12


class TestNormalize:
    def test_minmax(self):
        npt.assert_array_equal(minmax_normalize(np.array([255.0, 0.0])), [1.0, 0.0])
        assert minmax_normalize(np.array([51.0]))[0] == pytest.approx(0.2, abs=1e-15)

    def test_zscore_identity_and_zero(self):
        img = np.random.default_rng(0).uniform(size=(2, 3, 3))
        stats = DatasetStats(np.zeros(2), np.ones(2))
        assert np.array_equal(zscore(img, stats), img)
        mu = np.array([0.3, 0.6])
        flat = np.broadcast_to(mu[:, None, None], (2, 3, 3))
        assert np.all(zscore(flat, DatasetStats(mu, np.array([0.1, 0.2]))) == 0)

    def test_bad_std(self):
        with pytest.raises(ParameterError):
            DatasetStats(np.zeros(1), np.zeros(1))

    def test_stats_hand_computed(self):
        imgs = [np.array([[[0.0, 1.0], [1.0, 0.0]]])]
        s = compute_stats(imgs)
        npt.assert_allclose(s.mean, [0.5])
        npt.assert_allclose(s.std, [0.5])

    def test_stats_errors(self):
        with pytest.raises(DatasetError):
            compute_stats([])
        with pytest.raises(DatasetError, match="channel 1"):
            compute_stats([np.stack([np.eye(2), np.full((2, 2), 0.4)])])

    def test_stats_shuffle_invariant(self):
        rng = np.random.default_rng(3)
        imgs = [rng.uniform(size=(3, 4, 4)) for _ in range(6)]
        a = compute_stats(imgs)
        b = compute_stats(imgs[::-1])
        npt.assert_allclose(a.mean, b.mean, rtol=1e-14)
        npt.assert_allclose(a.std, b.std, rtol=1e-14)

    @settings(max_examples=40)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_zscore_contract(self, n, seed):
        rng = np.random.default_rng(seed)
        imgs = [rng.uniform(0, 1, (3, 5, 4)) * rng.uniform(0.1, 3) for _ in range(n)]
        stats = compute_stats(imgs)
        z = np.stack([zscore(i, stats) for i in imgs])
        per_channel = z.transpose(1, 0, 2, 3).reshape(3, -1)
        assert np.all(np.abs(per_channel.mean(axis=1)) < 1e-9)
        assert np.all(np.abs(per_channel.var(axis=1) - 1) < 1e-9)


class TestGeometric:
    def test_rotate_zero_identity(self):
        img = np.random.default_rng(0).uniform(size=(3, 5, 7))
        assert np.array_equal(rotate(img, 0.0), img)

    def test_rotate_pi_is_double_flip(self):
        img = np.random.default_rng(0).uniform(size=(2, 6, 6))
        npt.assert_allclose(rotate(img, math.pi), img[:, ::-1, ::-1], atol=1e-9)

    def test_rotate_quarter_turn_moves_pixel(self):
        img = np.zeros((1, 5, 5))
        img[0, 2, 3] = 1.0  # offset x=+1, y=0 from the center (2, 2)
        out = rotate(img, math.pi / 2)
        # (x, y) -> (x cos - y sin, x sin + y cos) = (0, 1): row 3, column 2
        assert out[0, 3, 2] == pytest.approx(1.0, abs=1e-12)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    @given(images, st.floats(-7, 7))
    def test_rotate_range(self, img, theta):
        lo, hi = min(img.min(), 0.0), max(img.max(), 0.0)
        out = rotate(img, theta)
        assert out.min() >= lo - 1e-12 and out.max() <= hi + 1e-12

    def test_hflip(self):
        npt.assert_array_equal(hflip(np.array([[[1.0, 2.0, 3.0]]])), [[[3.0, 2.0, 1.0]]])
        col = np.random.default_rng(0).uniform(size=(2, 4, 1))
        assert np.array_equal(hflip(col), col)

    @given(images)
    def test_hflip_involution(self, img):
        assert np.array_equal(hflip(hflip(img)), img)

    def test_scale_identity(self):
        img = np.random.default_rng(0).uniform(size=(3, 5, 5))
        assert np.array_equal(scale(img, 1.0), img)

    def test_scale_constant_interior(self):
        out = scale(np.full((1, 8, 8), 0.6), 2.0)
        npt.assert_allclose(out, 0.6, atol=1e-15)

    def test_scale_two_is_upsampled_center(self):
        img = np.random.default_rng(2).uniform(size=(1, 4, 4))
        out = scale(img, 2.0)[0]
        # interior outputs sample only inside the central 2x2, where zoom == upsample
        upsampled = np.array(scalar_resize(img[0, 1:3, 1:3].tolist(), 4, 4))
        npt.assert_allclose(out[1:3, 1:3], upsampled[1:3, 1:3], atol=1e-14)
        # every output samples the full image at center + offset / 2
        full = [[scalar_bilinear(img[0].tolist(), 1.5 + (i - 1.5) / 2, 1.5 + (j - 1.5) / 2, False)
                 for j in range(4)] for i in range(4)]
        npt.assert_allclose(out, full, atol=1e-14)

    def test_scale_out_pads_zero(self):
        out = scale(np.ones((1, 9, 9)), 0.5)
        assert out[0, 0, 0] == 0.0 and out[0, 4, 4] == 1.0

    def test_bad_scale(self):
        with pytest.raises(ParameterError):
            scale(np.ones((1, 2, 2)), 0.0)


class TestPhotometric:
    def test_identity(self):
        img = np.random.default_rng(0).uniform(size=(3, 2, 2))
        assert np.array_equal(brightness_contrast(img, 1.0, 0.0), img)

    def test_shift_and_gain(self):
        assert brightness_contrast(np.array([0.5]), 1.0, 0.2)[0] == pytest.approx(0.7, abs=1e-15)
        assert brightness_contrast(np.array([0.5]), 2.0, 0.0)[0] == 1.0

    def test_no_clamp(self):
        assert brightness_contrast(np.array([0.9]), 2.0, 0.5)[0] == pytest.approx(2.3)

    def test_bad_alpha(self):
        with pytest.raises(ParameterError):
            brightness_contrast(np.ones(1), 0.0, 0.0)


class TestAugment:
    def test_identity_config(self):
        img = np.random.default_rng(0).uniform(size=(3, 6, 6))
        for k in range(5):
            assert np.array_equal(augment(img, AugmentConfig.identity(seed=9), k), img)

    def test_deterministic(self):
        img = np.random.default_rng(0).uniform(size=(3, 6, 6))
        cfg = AugmentConfig(seed=5)
        assert augment(img, cfg, 3).tobytes() == augment(img, cfg, 3).tobytes()
        assert not np.array_equal(augment(img, cfg, 3), augment(img, cfg, 4))

    def test_composition(self):
        img = np.random.default_rng(1).uniform(size=(3, 8, 8))
        cfg = AugmentConfig(rotation_max_deg=30, flip_probability=0.5, seed=17)
        for k in range(8):
            d = draw_augment(cfg, k)
            manual = rotate(img, d.theta)
            if d.flip:
                manual = hflip(manual)
            manual = brightness_contrast(scale(manual, d.scale), d.alpha, d.beta)
            assert np.array_equal(augment(img, cfg, k), manual)

    def test_draws_within_ranges(self):
        cfg = AugmentConfig(rotation_max_deg=10, scale_range=(0.8, 1.2), brightness_range=(-0.2, 0.1),
                            contrast_range=(0.5, 1.5), seed=1)
        flips = 0
        for k in range(200):
            d = draw_augment(cfg, k)
            assert abs(d.theta) <= math.radians(10)
            assert 0.8 <= d.scale < 1.2 and -0.2 <= d.beta < 0.1 and 0.5 <= d.alpha < 1.5
            flips += d.flip
        assert 60 < flips < 140

    @pytest.mark.parametrize("kw", [dict(rotation_max_deg=-1), dict(flip_probability=1.5),
                                    dict(scale_range=(0, 1)), dict(scale_range=(1.2, 1.1)),
                                    dict(contrast_range=(-1, 1)), dict(brightness_range=(0.2, 0.1))])
    def test_invalid_config(self, kw):
        with pytest.raises(ParameterError):
            AugmentConfig(**kw)


class TestImageIO:
    def test_round_trip_rgb_and_gray(self, tmp_path):
        rng = np.random.default_rng(0)
        for c, suffix in ((3, "ppm"), (1, "pgm")):
            img = rng.integers(0, 256, (c, 5, 7)).astype(np.float64)
            write_image(tmp_path / f"x.{suffix}", img, 0.0, 255.0)
            assert np.array_equal(read_image(tmp_path / f"x.{suffix}"), img)

    def test_header_with_comment(self):
        buf = b"P5\n# made by hand\n2 1\n255\n\x00\xff"
        npt.assert_array_equal(decode_pnm(buf)[:, :, 0], [[0, 255]])

    def test_encode_layout(self):
        raw = encode_pnm(np.array([[[1, 2, 3]]], dtype=np.uint8))
        assert raw == b"P6\n1 1\n255\n\x01\x02\x03"

    def test_bad_files(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P2\n1 1\n255\n0")
        (tmp_path / "b.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
        for name in ("a.pgm", "b.pgm", "missing.pgm"):
            with pytest.raises(DatasetError, match=name):
                read_image(tmp_path / name)
