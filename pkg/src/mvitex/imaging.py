"""Float image helpers: bilinear sampling, PSNR, and 8-bit PNG at the file boundary.

Images are numpy arrays of shape (H, W, 3) with channels nominally in [0,1].
All math stays floating point; quantization happens only when writing files.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

PSNR_CAP_DB = 99.0


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample at continuous pixel coords (x right, y down), clamped at edges.

    Pixel centers sit at integer coordinates; (0,0) is the first pixel center.
    """
    h, w = img.shape[:2]
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )


def resample(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize mapping pixel centers to pixel centers."""
    if img.shape[0] == height and img.shape[1] == width:
        return np.asarray(img, dtype=np.float64)
    xs = (np.arange(width) + 0.5) / width * img.shape[1] - 0.5
    ys = (np.arange(height) + 0.5) / height * img.shape[0] - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(np.asarray(img, dtype=np.float64), gx, gy)


def psnr(rendered: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10*log10(1/MSE) for unit-range images, capped at 99 dB when MSE is zero.

    With a mask, only masked pixels enter the MSE (all three channels each).
    """
    a = np.asarray(rendered, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is not None:
        if not np.any(mask):
            raise ValueError("PSNR mask selects no pixels")
        a = a[mask]
        b = b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def write_png(path, img: np.ndarray):
    data = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((data * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0
