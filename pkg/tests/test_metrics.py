import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgfilter import imageio
from dgfilter.metrics import (INFINITE, MetricReport, evaluate_pair, ms_ssim, ms_ssim_levels, psnr, ssim,
                              to_luma, uiqi)
from oracles import ssim_reference, uiqi_reference


@pytest.fixture
def texture(rng):
    """Smooth-ish 8-bit luma image with structure at several scales."""
    y, x = np.mgrid[0:64, 0:64]
    base = 128 + 60 * np.sin(x / 5.0) * np.cos(y / 7.0) + 30 * np.sin((x + y) / 2.0)
    return np.clip(base + rng.normal(0, 5, size=base.shape), 0, 255)


class TestPsnr:
    def test_identical_is_infinite(self, texture):
        assert psnr(texture, texture) == INFINITE == math.inf

    def test_offset_sixteen(self):
        a = np.full((8, 8), 100.0)
        assert psnr(a, a + 16) == pytest.approx(24.0486, abs=1e-3)
        assert psnr(a, a + 16) == pytest.approx(10 * math.log10(255 ** 2 / 256), abs=1e-12)

    def test_zero_db(self):
        assert psnr(np.zeros((4, 4)), np.full((4, 4), 255.0)) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric(self, texture, rng):
        b = texture + rng.normal(0, 3, size=texture.shape)
        assert psnr(texture, b) == psnr(b, texture)

    def test_strictly_decreasing_in_mse(self, texture, rng):
        noise = rng.normal(size=texture.shape)
        values = [psnr(texture, texture + s * noise) for s in (0.5, 1, 2, 4, 8)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_rejects(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((2, 2)), peak=0)


class TestSsim:
    def test_identical(self, texture):
        assert abs(ssim(texture, texture) - 1.0) <= 1e-9

    def test_negative_image(self, texture):
        assert ssim(texture, 255 - texture) < 1

    def test_matches_nested_loop_oracle(self, rng):
        a = rng.integers(0, 256, size=(16, 16)).astype(float)
        b = np.clip(a + rng.normal(0, 20, size=a.shape), 0, 255)
        assert abs(ssim(a, b) - ssim_reference(a, b)) <= 1e-9

    def test_symmetric(self, texture, rng):
        b = texture + rng.normal(0, 10, size=texture.shape)
        assert ssim(texture, b) == pytest.approx(ssim(b, texture), abs=1e-12)

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_rgb_uses_luma(self, rng):
        rgb = rng.integers(0, 256, size=(16, 16, 3)).astype(float)
        other = np.clip(rgb + rng.normal(0, 10, size=rgb.shape), 0, 255)
        assert ssim(rgb, other) == ssim(to_luma(rgb), to_luma(other))


class TestMsSsim:
    def test_identical(self, rng):
        a = rng.integers(0, 256, size=(176, 176)).astype(float)
        assert ms_ssim_levels(a.shape) == 5
        assert abs(ms_ssim(a, a) - 1.0) <= 1e-9

    def test_single_level_is_ssim(self, texture, rng):
        b = texture + rng.normal(0, 10, size=texture.shape)
        assert ms_ssim(texture, b, levels=1) == pytest.approx(ssim(texture, b), abs=1e-12)

    def test_level_reduction(self):
        assert ms_ssim_levels((64, 64)) == 3
        assert ms_ssim_levels((21, 40)) == 1
        with pytest.raises(ValueError):
            ms_ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_monotone_in_noise(self, texture):
        noise = np.random.default_rng(7).normal(size=texture.shape)
        values = [ms_ssim(texture, texture + s * noise) for s in (1, 3, 6, 12, 24)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_symmetric(self, texture, rng):
        b = texture + rng.normal(0, 10, size=texture.shape)
        assert ms_ssim(texture, b) == pytest.approx(ms_ssim(b, texture), abs=1e-12)


class TestUiqi:
    def test_identical(self, texture):
        assert abs(uiqi(texture, texture) - 1.0) <= 1e-9

    def test_negative_correlation(self, texture):
        assert uiqi(texture, 255 - texture) < 0

    def test_matches_nested_loop_oracle(self, rng):
        a = rng.integers(0, 256, size=(16, 16)).astype(float)
        b = np.clip(a + rng.normal(0, 20, size=a.shape), 0, 255)
        a[:8, :8] = 7.0  # constant blocks exercise the special cases
        b[:8, :8] = 7.0
        b[8:, 8:] = 0.0
        assert abs(uiqi(a, b) - uiqi_reference(a, b)) <= 1e-9

    def test_constant_images(self):
        a = np.full((8, 8), 50.0)
        assert uiqi(a, a) == 1.0
        assert uiqi(np.zeros((8, 8)), np.zeros((8, 8))) == 1.0

    def test_symmetric(self, texture, rng):
        b = texture + rng.normal(0, 10, size=texture.shape)
        assert uiqi(texture, b) == pytest.approx(uiqi(b, texture), abs=1e-12)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=20, deadline=None)
def test_one_only_when_identical(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, size=(24, 24)).astype(float)
    b = a.copy()
    i, j = rng.integers(0, 24, size=2)
    b[i, j] = (b[i, j] + 1 + rng.integers(0, 254)) % 256
    for fn in (ssim, ms_ssim, uiqi):
        assert fn(a, a) == pytest.approx(1.0, abs=1e-9)
        assert fn(a, b) < 1.0 - 1e-9


def test_png_round_trip_matches_memory(tmp_path, rng):
    pred = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    ref = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    imageio.write_png(tmp_path / "p.png", pred)
    imageio.write_png(tmp_path / "r.png", ref)
    disk = evaluate_pair(imageio.read_rgb(tmp_path / "p.png"), imageio.read_rgb(tmp_path / "r.png"))
    assert disk == evaluate_pair(pred, ref)


def test_quantization_convention():
    v = np.array([[[-1.0, 0.0, 1.0, 0.004, 2.0]]]).reshape(1, 1, 5).repeat(3, axis=0)
    b = imageio.unit_to_bytes(v)
    assert b[0, :, 0].tolist() == [0, 128, 255, 128, 255]
    assert np.allclose(imageio.bytes_to_unit(np.array([[[0, 255, 51]]], np.uint8))[:, 0, 0], [-1, 1, 51 / 127.5 - 1])


class TestReport:
    def test_mean_and_json(self):
        r = MetricReport()
        r.add("a.png", {"psnr": 30.0, "ssim": 0.9})
        r.add("b.png", {"psnr": 20.0, "ssim": 0.7})
        assert r.count == 2 and r.mean("psnr") == 25.0
        doc = r.to_json()
        assert doc["psnr"] == {"per_image": [30.0, 20.0], "mean": 25.0}
        assert doc["ssim"]["mean"] == pytest.approx(np.mean(doc["ssim"]["per_image"]))
        assert r.to_csv().splitlines()[0] == "image,psnr,ssim"

    def test_infinite_serialized(self):
        r = MetricReport()
        r.add("x", {"psnr": math.inf})
        doc = json.loads(json.dumps(r.to_json()))
        assert doc["psnr"] == {"per_image": ["inf"], "mean": "inf"}
