"""Image containers, codecs, degradation helpers, and quality metrics.

Images are planar float64 (channels, height, width) in [0, 1]. Byte values
map in as v / 255 and out by rounding half away from zero after clamping.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP_DB = 100.0
PSNR_CAP_MSE = 1e-10


@dataclass(frozen=True)
class ImageTensor:
    """Planar (C, H, W) float64 image in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 3:
            raise ValueError("image data must be (channels, height, width)")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def to_vector(self) -> np.ndarray:
        return self.data.ravel().copy()

    @classmethod
    def from_vector(cls, vec, channels: int, height: int, width: int) -> "ImageTensor":
        vec = np.asarray(vec, dtype=float)
        return cls(vec.reshape(channels, height, width).copy())


def load_image(path) -> ImageTensor:
    """Read an 8-bit PNG / binary PPM / PGM into [0, 1] floats."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB") if "A" in img.mode or len(img.getbands()) > 1 else img.convert("L")
        arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        planes = arr[None, :, :]
    else:
        planes = arr.transpose(2, 0, 1)
    return ImageTensor(planes.astype(float) / 255.0)


def to_bytes(img: ImageTensor) -> np.ndarray:
    """Clamp to [0, 1] and round half away from zero to uint8."""
    clamped = np.clip(img.data, 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def save_png(img: ImageTensor, path) -> None:
    arr = to_bytes(img)
    if arr.shape[0] == 1:
        pil = Image.fromarray(arr[0], mode="L")
    elif arr.shape[0] == 3:
        pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    else:
        raise ValueError("only 1- or 3-channel images can be written")
    pil.save(Path(path), format="PNG")


def degrade(img: ImageTensor, op, sigma_y: float, rng: np.random.Generator) -> np.ndarray:
    """y = H x + sigma_y * eps with eps drawn from rng (even when sigma_y = 0,
    no draw happens in that case)."""
    if sigma_y < 0:
        raise ValueError("sigma_y must be >= 0")
    y = op.apply(img.to_vector())
    if sigma_y > 0:
        y = y + sigma_y * rng.standard_normal(op.m)
    return y


def psnr(x, ref) -> float:
    """Peak SNR in dB against a [0, 1] range, capped at 100 dB."""
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ValueError("psnr inputs must have matching shapes")
    mse = float(np.mean((x - ref) ** 2))
    if mse < PSNR_CAP_MSE:
        return PSNR_CAP_DB
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Valid-mode separable correlation with the 1-D window g."""
    size = g.shape[0]
    rows = np.lib.stride_tricks.sliding_window_view(plane, size, axis=0)
    out = np.tensordot(rows, g, axes=([2], [0]))
    cols = np.lib.stride_tricks.sliding_window_view(out, size, axis=1)
    return np.tensordot(cols, g, axes=([2], [0]))


def ssim(x, ref) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window, averaged per channel."""
    a = np.asarray(x, dtype=float)
    b = np.asarray(ref, dtype=float)
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.shape != b.shape or a.ndim != 3:
        raise ValueError("ssim inputs must be matching (C, H, W) arrays")
    if min(a.shape[1], a.shape[2]) < SSIM_WINDOW:
        raise ValueError(f"ssim needs sides of at least {SSIM_WINDOW} pixels")
    g = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    scores = []
    for ch in range(a.shape[0]):
        pa, pb = a[ch], b[ch]
        mu_a = _windowed(pa, g)
        mu_b = _windowed(pb, g)
        var_a = _windowed(pa * pa, g) - mu_a * mu_a
        var_b = _windowed(pb * pb, g) - mu_b * mu_b
        cov = _windowed(pa * pb, g) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def aggregate(samples: list[ImageTensor], std_scale: float = 4.0):
    """Per-pixel mean and scaled sample std across restored samples."""
    if len(samples) < 2:
        raise ValueError("aggregate needs at least two samples")
    stack = np.stack([s.data for s in samples])
    mean = ImageTensor(stack.mean(axis=0))
    std = stack.std(axis=0, ddof=1) * std_scale
    return mean, ImageTensor(std)


def write_metrics(path, values: dict) -> None:
    """UTF-8 `name=value` lines, insertion order preserved."""
    lines = []
    for key, val in values.items():
        if isinstance(val, float):
            lines.append(f"{key}={val:.10g}")
        else:
            lines.append(f"{key}={val}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
