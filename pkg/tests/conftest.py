"""Shared synthetic fixtures: deterministic images, masks, and textures."""
from __future__ import annotations

import numpy as np
import pytest

from camoscore import imaging


def square_mask(frame: int, side: int, top: int, left: int) -> np.ndarray:
    m = np.zeros((frame, frame), dtype=bool)
    m[top:top + side, left:left + side] = True
    return m


def disk_mask(frame: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:frame, 0:frame]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2


def random_blob_mask(frame: int, rng: np.random.Generator, blobs: int = 3) -> np.ndarray:
    """Union of a few random rectangles, guaranteed non-empty."""
    m = np.zeros((frame, frame), dtype=bool)
    for _ in range(blobs):
        h = int(rng.integers(2, max(3, frame // 2)))
        w = int(rng.integers(2, max(3, frame // 2)))
        top = int(rng.integers(0, frame - h + 1))
        left = int(rng.integers(0, frame - w + 1))
        m[top:top + h, left:left + w] = True
    if not m.any():
        m[frame // 2, frame // 2] = True
    return m


def checkerboard(h: int, w: int, period: int = 4, lo: float = 0.25, hi: float = 0.75) -> np.ndarray:
    """Two-tone periodic texture; tones kept off zero so no pixel is black."""
    yy, xx = np.mgrid[0:h, 0:w]
    cells = ((yy // period) + (xx // period)) % 2
    plane = np.where(cells == 0, lo, hi)
    return np.repeat(plane[:, :, None], 3, axis=2).astype(np.float64)


def flat_image(h: int, w: int, color) -> np.ndarray:
    img = np.zeros((h, w, 3), dtype=np.float64)
    img[:, :] = np.asarray(color, dtype=np.float64)
    return img


def noise_image(h: int, w: int, seed: int = 0, smooth: int = 0) -> np.ndarray:
    """Seeded random RGB texture, optionally box-smoothed for gradients."""
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.05, 0.95, size=(h, w, 3))
    for _ in range(smooth):
        img = (img
               + np.roll(img, 1, axis=0) + np.roll(img, -1, axis=0)
               + np.roll(img, 1, axis=1) + np.roll(img, -1, axis=1)) / 5.0
    return np.clip(img, 0.0, 1.0)


def write_pair(tmpdir, name: str, image: np.ndarray, mask: np.ndarray):
    """Write an image/mask pair as PNGs, returning both paths."""
    img_path = tmpdir / f"{name}.png"
    mask_path = tmpdir / f"{name}_mask.png"
    imaging.save_image(image, img_path)
    imaging.save_mask(mask, mask_path)
    return img_path, mask_path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
