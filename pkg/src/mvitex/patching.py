"""Fixed-size patch extraction from renders, and the adjoint scatter.

When the render is exactly patch-sized there is a single admissible offset,
so early training steps score the whole frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchRect:
    x0: int
    y0: int
    size: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.size < 1:
            raise ValueError("patch rect offsets must be >= 0 and size >= 1")


def sample_patch(
    img_w: int, img_h: int, patch_size: int, rng: np.random.Generator
) -> PatchRect:
    """Integer-uniform patch offset, both extremes included."""
    if img_w < patch_size or img_h < patch_size:
        raise ValueError(
            f"image {img_w}x{img_h} is smaller than the {patch_size} patch"
        )
    x0 = int(rng.integers(0, img_w - patch_size + 1))
    y0 = int(rng.integers(0, img_h - patch_size + 1))
    return PatchRect(x0=x0, y0=y0, size=patch_size)


def _check_rect(rect: PatchRect, width: int, height: int):
    if rect.x0 + rect.size > width or rect.y0 + rect.size > height:
        raise ValueError(f"rect {rect} exceeds image {width}x{height}")


def extract(img: np.ndarray, rect: PatchRect) -> np.ndarray:
    """Exact pixel copy of the rect, no resampling."""
    h, w = img.shape[:2]
    _check_rect(rect, w, h)
    return img[rect.y0 : rect.y0 + rect.size, rect.x0 : rect.x0 + rect.size].copy()


def scatter_gradient(
    full_w: int, full_h: int, rect: PatchRect, patch_grad: np.ndarray
) -> np.ndarray:
    """Adjoint of extract: place the patch gradient into a zero full-size image."""
    if patch_grad.shape[:2] != (rect.size, rect.size):
        raise ValueError(
            f"patch gradient shape {patch_grad.shape[:2]} does not match rect size "
            f"{rect.size}"
        )
    _check_rect(rect, full_w, full_h)
    full = np.zeros((full_h, full_w) + patch_grad.shape[2:], dtype=patch_grad.dtype)
    full[rect.y0 : rect.y0 + rect.size, rect.x0 : rect.x0 + rect.size] = patch_grad
    return full
