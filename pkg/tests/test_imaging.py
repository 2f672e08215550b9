"""Image container, codec, degradation, and metric tests.

The SSIM check compares against a reference implementation written here
with explicit window loops, so the two routes share no code.
"""
from __future__ import annotations

import numpy as np
import pytest

from specdiff import imaging, linops
from specdiff.imaging import ImageTensor
from specdiff.sampler import make_rng


def _checkerboard(side: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    i, j = np.indices((side, side))
    return np.where((i + j) % 2 == 0, hi, lo)[None, :, :].astype(float)


def test_image_tensor_shape_and_vector_roundtrip():
    data = make_rng(1).uniform(size=(3, 4, 5))
    img = ImageTensor(data)
    assert (img.channels, img.height, img.width) == (3, 4, 5)
    back = ImageTensor.from_vector(img.to_vector(), 3, 4, 5)
    assert np.array_equal(back.data, data)
    with pytest.raises(ValueError):
        ImageTensor(np.zeros((4, 5)))


def test_byte_export_rounds_half_away_from_zero():
    img = ImageTensor(np.array([[[0.0, 127.5 / 255.0, 128.4999 / 255.0, 1.0]]]))
    assert imaging.to_bytes(img).ravel().tolist() == [0, 128, 128, 255]
    clipped = ImageTensor(np.array([[[-0.3, 1.7]]]))
    assert imaging.to_bytes(clipped).ravel().tolist() == [0, 255]


def test_png_roundtrip_quantization_error(tmp_path):
    rng = make_rng(7)
    img = ImageTensor(rng.uniform(size=(3, 8, 8)))
    path = tmp_path / "x.png"
    imaging.save_png(img, path)
    back = imaging.load_image(path)
    assert back.data.shape == img.data.shape
    assert np.max(np.abs(back.data - img.data)) <= 1.0 / 510.0 + 1e-12


def test_png_roundtrip_is_exact_on_byte_aligned_values(tmp_path):
    rng = make_rng(8)
    raw = rng.integers(0, 256, size=(1, 6, 6)).astype(float) / 255.0
    img = ImageTensor(raw)
    path = tmp_path / "g.png"
    imaging.save_png(img, path)
    assert np.array_equal(imaging.load_image(path).data, raw)


def test_binary_ppm_and_pgm_load(tmp_path):
    rng = make_rng(9)
    rgb = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
    ppm = tmp_path / "c.ppm"
    ppm.write_bytes(b"P6\n5 4\n255\n" + rgb.tobytes())
    img = imaging.load_image(ppm)
    assert img.data.shape == (3, 4, 5)
    assert np.array_equal(img.data, rgb.transpose(2, 0, 1).astype(float) / 255.0)

    gray = rng.integers(0, 256, size=(4, 5), dtype=np.uint8)
    pgm = tmp_path / "g.pgm"
    pgm.write_bytes(b"P5\n5 4\n255\n" + gray.tobytes())
    img = imaging.load_image(pgm)
    assert img.data.shape == (1, 4, 5)
    assert np.array_equal(img.data[0], gray.astype(float) / 255.0)


def test_degrade_without_noise_is_exact_apply():
    op = linops.build_block_sr(4, 2, 1)
    img = ImageTensor(make_rng(3).uniform(size=(1, 4, 4)))
    y = imaging.degrade(img, op, 0.0, make_rng(0))
    assert np.array_equal(y, op.apply(img.to_vector()))


def test_degrade_noise_variance():
    """Var(y - x) under the identity operator sits within 2% of sigma_y^2."""
    side = 1000
    op = linops.build_denoising(side, 1)
    img = ImageTensor(make_rng(4).uniform(size=(1, side, side)))
    y = imaging.degrade(img, op, 0.1, make_rng(5))
    resid = y - img.to_vector()
    assert abs(resid.var() - 0.01) < 0.02 * 0.01
    assert abs(resid.mean()) < 4 * 0.1 / np.sqrt(side * side)


def test_degrade_rejects_bad_inputs():
    op = linops.build_denoising(4, 1)
    img = ImageTensor(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        imaging.degrade(img, op, 0.1, make_rng(0))  # 4 pixels vs n = 16
    ok = ImageTensor(np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        imaging.degrade(ok, op, -0.1, make_rng(0))


def test_psnr_hand_values():
    x = np.full((1, 8, 8), 0.5)
    assert imaging.psnr(x, x) == 100.0
    assert imaging.psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)
    zeros = np.zeros((1, 8, 8))
    assert imaging.psnr(zeros, np.ones((1, 8, 8))) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        imaging.psnr(zeros, np.zeros((1, 8, 9)))


def test_psnr_translation_symmetry():
    rng = make_rng(6)
    x = rng.uniform(size=(1, 6, 6))
    y = rng.uniform(size=(1, 6, 6))
    assert imaging.psnr(x, x + 0.07) == pytest.approx(imaging.psnr(x, x - 0.07), abs=1e-12)
    assert imaging.psnr(x, x + 0.07) == pytest.approx(imaging.psnr(y, y + 0.07), abs=1e-12)


def _reference_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Windowed SSIM coded with explicit position loops and a 2-D kernel."""
    size, sigma = 11, 1.5
    half = size // 2
    ii, jj = np.indices((size, size)) - half
    kernel = np.exp(-(ii ** 2 + jj ** 2) / (2.0 * sigma ** 2))
    kernel /= kernel.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    per_channel = []
    for ch in range(a.shape[0]):
        vals = []
        for r in range(a.shape[1] - size + 1):
            for c in range(a.shape[2] - size + 1):
                wa = a[ch, r:r + size, c:c + size]
                wb = b[ch, r:r + size, c:c + size]
                mu_a = (kernel * wa).sum()
                mu_b = (kernel * wb).sum()
                va = (kernel * wa * wa).sum() - mu_a ** 2
                vb = (kernel * wb * wb).sum() - mu_b ** 2
                cov = (kernel * wa * wb).sum() - mu_a * mu_b
                num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
                den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
                vals.append(num / den)
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


def test_ssim_identical_is_one():
    x = make_rng(10).uniform(size=(3, 16, 16))
    assert imaging.ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_checkerboard_against_reference():
    x = _checkerboard(16, 0.2, 0.8)
    shifted = x + 0.1
    got = imaging.ssim(x, shifted)
    want = _reference_ssim(x, shifted)
    assert got == pytest.approx(want, abs=1e-6)
    assert got < 1.0


def test_ssim_random_images_against_reference():
    rng = make_rng(11)
    for _ in range(3):
        a = rng.uniform(size=(1, 13, 15))
        b = np.clip(a + 0.2 * rng.standard_normal(a.shape), 0.0, 1.0)
        assert imaging.ssim(a, b) == pytest.approx(_reference_ssim(a, b), abs=1e-6)


def test_ssim_anticorrelated_binary_image_is_negative():
    x = _checkerboard(16)
    assert imaging.ssim(x, 1.0 - x) < 0.0


def test_ssim_rejects_small_or_mismatched_images():
    small = np.zeros((1, 10, 10))
    with pytest.raises(ValueError):
        imaging.ssim(small, small)
    a = np.zeros((1, 16, 16))
    with pytest.raises(ValueError):
        imaging.ssim(a, np.zeros((1, 16, 17)))


def test_aggregate_hand_cases():
    zeros = ImageTensor(np.zeros((1, 4, 4)))
    ones = ImageTensor(np.ones((1, 4, 4)))
    mean, std = imaging.aggregate([zeros, ones])
    assert np.allclose(mean.data, 0.5)
    # sample std of {0, 1} is sqrt(1/2); the default scale is 4
    assert np.allclose(std.data, 4.0 * np.sqrt(0.5), atol=1e-12)

    mean, std = imaging.aggregate([ones, ones, ones])
    assert np.allclose(mean.data, 1.0)
    assert np.allclose(std.data, 0.0)

    mean, std = imaging.aggregate([zeros, ones], std_scale=2.0)
    assert np.allclose(std.data, 2.0 * np.sqrt(0.5), atol=1e-12)

    with pytest.raises(ValueError):
        imaging.aggregate([zeros])
    with pytest.raises(ValueError):
        imaging.aggregate([])


def test_aggregate_mean_converges_like_root_n():
    rng = make_rng(12)
    center = 0.5

    def mean_error(count):
        samples = [ImageTensor(center + 0.2 * rng.standard_normal((1, 8, 8)))
                   for _ in range(count)]
        mean, _ = imaging.aggregate(samples)
        return float(np.sqrt(np.mean((mean.data - center) ** 2)))

    # 16x the samples should shrink the error by about 4; allow slack
    assert mean_error(256) < mean_error(16) / 2.0


def test_write_metrics_format(tmp_path):
    path = tmp_path / "metrics.txt"
    imaging.write_metrics(path, {"psnr": 31.25, "samples": 3, "note": "ok"})
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["psnr=31.25", "samples=3", "note=ok"]
