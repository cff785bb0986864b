"""Raster transforms against brute-force per-pixel oracles and exact group
identities."""

import math

import numpy as np
import pytest

from satpipe.raster import RasterImage
from satpipe.transforms import (
    TransformSpec,
    TransformError,
    _zoom,
    blur,
    channel_noise,
    flip,
    normalize_gsd,
    rescale,
    rotate,
    round_half_up,
    zoom,
)

from conftest import make_image


# ---------------------------------------------------------------------------
# independent oracles: naive per-pixel implementations of the documented
# conventions (half-pixel bilinear mapping, clamp-to-edge or zero fill)


def oracle_rescale(px: np.ndarray, width: int, height: int) -> np.ndarray:
    src_h, src_w, channels = px.shape
    out = np.zeros((height, width, channels))
    for y in range(height):
        sy = min(max((y + 0.5) * (src_h / height) - 0.5, 0.0), src_h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, src_h - 1)
        fy = sy - y0
        for x in range(width):
            sx = min(max((x + 0.5) * (src_w / width) - 0.5, 0.0), src_w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, src_w - 1)
            fx = sx - x0
            for ch in range(channels):
                top = px[y0, x0, ch] * (1 - fx) + px[y0, x1, ch] * fx
                bot = px[y1, x0, ch] * (1 - fx) + px[y1, x1, ch] * fx
                out[y, x, ch] = top * (1 - fy) + bot * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def oracle_blur(px: np.ndarray, sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    taps = np.exp(-(np.arange(-radius, radius + 1) ** 2) / (2 * sigma * sigma))
    kernel = np.outer(taps, taps)
    kernel /= kernel.sum()
    h, w, channels = px.shape
    out = np.zeros((h, w, channels))
    for y in range(h):
        for x in range(w):
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sy = min(max(y + dy, 0), h - 1)
                    sx = min(max(x + dx, 0), w - 1)
                    out[y, x] += kernel[dy + radius, dx + radius] * px[sy, sx]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def oracle_rotate(px: np.ndarray, degrees: float) -> np.ndarray:
    h, w, channels = px.shape
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    out = np.zeros((h, w, channels))
    for y in range(h):
        for x in range(w):
            rx, ry = x - cx, y - cy
            sx = rx * cos_t + ry * sin_t + cx
            sy = -rx * sin_t + ry * cos_t + cy
            x0, y0 = int(math.floor(sx)), int(math.floor(sy))
            fx, fy = sx - x0, sy - y0
            for dy, wy in ((0, 1 - fy), (1, fy)):
                for dx, wx in ((0, 1 - fx), (1, fx)):
                    ix, iy = x0 + dx, y0 + dy
                    if 0 <= ix < w and 0 <= iy < h:
                        out[y, x] += wy * wx * px[iy, ix]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def oracle_zoom(px: np.ndarray, factor: float) -> np.ndarray:
    h, w = px.shape[:2]
    if factor == 1.0:
        return px.copy()
    if factor > 1.0:
        cw = max(1, round_half_up(w / factor))
        ch = max(1, round_half_up(h / factor))
        x0, y0 = (w - cw) // 2, (h - ch) // 2
        return oracle_rescale(px[y0 : y0 + ch, x0 : x0 + cw], w, h)
    sw = max(1, round_half_up(w * factor))
    sh = max(1, round_half_up(h * factor))
    small = oracle_rescale(px, sw, sh)
    out = np.zeros_like(px)
    x0, y0 = (w - sw) // 2, (h - sh) // 2
    out[y0 : y0 + sh, x0 : x0 + sw] = small
    return out


def splitmix64_reference(seed):
    """Independent replay of the documented generator."""
    mask = (1 << 64) - 1
    state = seed & mask
    while True:
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        yield z ^ (z >> 31)


def assert_within_one(a: np.ndarray, b: np.ndarray):
    assert a.shape == b.shape
    diff = np.abs(a.astype(np.int16) - b.astype(np.int16))
    assert int(diff.max(initial=0)) <= 1, f"max deviation {diff.max()}"


class TestRotate:
    def test_180_is_involution(self):
        image = make_image(7, 5, seed=10)
        assert rotate(rotate(image, 180), 180).same_pixels(image)

    def test_90_four_times_is_identity(self):
        image = make_image(6, 9, seed=11)
        out = image
        for _ in range(4):
            out = rotate(out, 90)
        assert out.same_pixels(image)

    def test_90_swaps_dims(self):
        image = make_image(8, 3, seed=12)
        out = rotate(image, 90)
        assert (out.width, out.height) == (3, 8)

    def test_90_is_clockwise(self):
        px = np.zeros((3, 3, 1), dtype=np.uint8)
        px[0, 0, 0] = 255
        out = rotate(RasterImage(px), 90)
        assert out.pixels[0, 2, 0] == 255  # top-left lands top-right

    def test_unsupported_angle_rejected(self):
        with pytest.raises(TransformError):
            rotate(make_image(4, 4), 60)

    @pytest.mark.parametrize("degrees", [15, 30, 45])
    def test_bilinear_angles_match_oracle(self, degrees):
        image = make_image(11, 9, seed=13 + degrees)
        assert_within_one(rotate(image, degrees).pixels, oracle_rotate(image.pixels.astype(float), degrees))


class TestFlip:
    def test_involutions(self):
        image = make_image(6, 4, seed=14)
        for axis in ("east_west", "north_south"):
            assert flip(flip(image, axis), axis).same_pixels(image)

    def test_flip_both_axes_equals_rotate_180(self):
        image = make_image(9, 5, seed=15)
        assert flip(flip(image, "east_west"), "north_south").same_pixels(rotate(image, 180))

    def test_east_west_reverses_columns(self):
        px = np.array([[[10], [200]]], dtype=np.uint8)  # 2x1 image [A, B]
        out = flip(RasterImage(px), "east_west")
        assert out.pixels[0, 0, 0] == 200 and out.pixels[0, 1, 0] == 10

    def test_unknown_axis_rejected(self):
        with pytest.raises(TransformError):
            flip(make_image(2, 2), "diagonal")


class TestZoom:
    def test_factor_one_is_identity(self):
        image = make_image(10, 8, seed=16)
        assert zoom(image, 1.0).same_pixels(image)

    def test_factor_two_constant_invariance(self):
        image = RasterImage(np.full((8, 8, 3), 77, dtype=np.uint8))
        out = _zoom(image, 2.0)  # beyond the public range, checked directly
        assert (out.width, out.height) == (8, 8)
        assert np.all(out.pixels == 77)

    def test_zoom_out_half_matches_oracle_with_zero_border(self):
        image = make_image(4, 4, seed=17)
        out = zoom(image, 0.75)
        expected = oracle_zoom(image.pixels.astype(float), 0.75)
        assert_within_one(out.pixels, expected)
        out_half = _zoom(image, 0.5)
        expected_half = oracle_zoom(image.pixels.astype(float), 0.5)
        assert_within_one(out_half.pixels, expected_half)
        assert np.all(out_half.pixels[0, :, :] == 0)  # zero border
        assert np.all(out_half.pixels[:, 0, :] == 0)

    def test_out_of_range_rejected(self):
        with pytest.raises(TransformError):
            zoom(make_image(4, 4), 2.0)
        with pytest.raises(TransformError):
            zoom(make_image(4, 4), 0.5)


class TestChannelNoise:
    def test_zero_amplitude_is_identity(self):
        image = make_image(5, 5, seed=18)
        assert channel_noise(image, 0, seed=123).same_pixels(image)

    def test_same_seed_is_deterministic(self):
        image = make_image(5, 5, seed=19)
        a = channel_noise(image, 20, seed=42)
        b = channel_noise(image, 20, seed=42)
        assert a.same_pixels(b)

    def test_offsets_replay_documented_stream(self):
        image = RasterImage(np.full((4, 4, 3), 128, dtype=np.uint8))
        out = channel_noise(image, 10, seed=77)
        stream = splitmix64_reference(77)
        expected = [128 + (next(stream) % 21) - 10 for _ in range(3)]
        for ch in range(3):
            values = np.unique(out.pixels[:, :, ch])
            assert values.size == 1
            assert 118 <= values[0] <= 138
            assert values[0] == expected[ch]

    def test_amplitude_out_of_range_rejected(self):
        with pytest.raises(TransformError):
            channel_noise(make_image(2, 2), 65, seed=0)


class TestBlur:
    def test_constant_preserved(self):
        image = RasterImage(np.full((9, 9, 3), 200, dtype=np.uint8))
        out = blur(image, 1.5)
        assert np.all(np.abs(out.pixels.astype(int) - 200) <= 1)

    def test_impulse_response_symmetric(self):
        px = np.zeros((11, 11, 1), dtype=np.uint8)
        px[5, 5, 0] = 255
        out = blur(RasterImage(px), 1.0).pixels[:, :, 0].astype(int)
        for d in range(1, 4):
            assert out[5, 5 + d] == out[5, 5 - d]
            assert out[5 + d, 5] == out[5 - d, 5]

    def test_impulse_matches_direct_convolution(self):
        px = np.zeros((5, 5, 1), dtype=np.uint8)
        px[2, 2, 0] = 255
        out = blur(RasterImage(px), 1.0)
        assert_within_one(out.pixels, oracle_blur(px.astype(float), 1.0))

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(TransformError):
            blur(make_image(3, 3), 0.0)


class TestRescale:
    def test_same_dims_bit_exact(self):
        image = make_image(7, 6, seed=20)
        assert rescale(image, 7, 6).same_pixels(image)

    def test_constant_preserved(self):
        image = RasterImage(np.full((5, 4, 3), 99, dtype=np.uint8))
        out = rescale(image, 11, 3)
        assert np.all(out.pixels == 99)

    def test_gradient_downscale_matches_oracle(self):
        ramp = np.arange(16, dtype=np.uint8).reshape(4, 4, 1) * 16
        out = rescale(RasterImage(ramp), 2, 2)
        assert_within_one(out.pixels, oracle_rescale(ramp.astype(float), 2, 2))


class TestNormalizeGsd:
    def test_equal_gsd_is_identity(self):
        image = make_image(12, 10, seed=21)
        assert normalize_gsd(image, 1.3, 1.3).same_pixels(image)

    def test_factor_two_doubles_dims(self):
        image = make_image(200, 100, seed=22)
        out = normalize_gsd(image, 2.0, 1.0)
        assert (out.width, out.height) == (400, 200)

    def test_median_sized_image_at_median_gsd_unchanged(self):
        image = make_image(245, 196, seed=23)
        out = normalize_gsd(image, 2.0, 2.0)
        assert out.same_pixels(image)


class TestSpecAndProperties:
    def test_spec_validation(self):
        with pytest.raises(TransformError):
            TransformSpec.rotate(17)
        with pytest.raises(TransformError):
            TransformSpec.zoom(1.7)
        with pytest.raises(TransformError):
            TransformSpec(kind="warp")
        spec = TransformSpec.channel_noise(10, seed=3)
        assert TransformSpec.from_dict(spec.to_dict()) == spec

    def test_channel_count_preserved(self):
        for channels in (1, 3):
            image = make_image(9, 7, channels=channels, seed=24)
            for spec in (
                TransformSpec.rotate(45),
                TransformSpec.flip("east_west"),
                TransformSpec.zoom(1.25),
                TransformSpec.channel_noise(10, seed=1),
                TransformSpec.blur(1.0),
                TransformSpec.rescale(5, 5),
            ):
                assert spec.apply(image).channels == channels

    def test_determinism(self):
        image = make_image(10, 10, seed=25)
        for spec in (
            TransformSpec.rotate(30),
            TransformSpec.zoom(0.8),
            TransformSpec.blur(2.0),
            TransformSpec.channel_noise(15, seed=9),
        ):
            assert spec.apply(image).same_pixels(spec.apply(image))

    def test_randomized_oracle_agreement_small_images(self):
        rng = np.random.default_rng(99)
        for case in range(30):
            w = int(rng.integers(2, 17))
            h = int(rng.integers(2, 17))
            image = make_image(w, h, seed=1000 + case)
            px = image.pixels.astype(float)

            tw = int(rng.integers(1, 17))
            th = int(rng.integers(1, 17))
            assert_within_one(rescale(image, tw, th).pixels, oracle_rescale(px, tw, th))

            factor = float(rng.uniform(1 / 1.5, 1.5))
            assert_within_one(zoom(image, factor).pixels, oracle_zoom(px, factor))

            sigma = float(rng.uniform(0.4, 2.0))
            assert_within_one(blur(image, sigma).pixels, oracle_blur(px, sigma))
