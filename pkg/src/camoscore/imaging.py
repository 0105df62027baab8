"""Image and mask primitives: loading, binary morphology, trimaps, crops.

Images are float64 arrays of shape (H, W, C) with values in [0, 1] and
C in {1, 3}; masks are boolean arrays of shape (H, W).  All morphology
uses square structuring elements with zero padding outside the frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DegenerateInputError, FormatError, ParameterError, ShapeError

SUPPORTED_FORMATS = ("PNG", "JPEG")


# ---------------------------------------------------------------------------
# loading and saving
# ---------------------------------------------------------------------------

def _decode(path: str | Path) -> Image.Image:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image") from exc
    except OSError as exc:
        # Pillow reports truncated streams as OSError after identifying them.
        raise FormatError(f"{path}: {exc}") from exc
    if img.format not in SUPPORTED_FORMATS:
        raise FormatError(f"{path}: unsupported format {img.format!r}, expected PNG or JPEG")
    return img


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG or JPEG into a (H, W, C) float array scaled to [0, 1]."""
    img = _decode(path)
    if img.mode in ("L", "I;16", "I"):
        img = img.convert("L")
    elif img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def load_mask(path: str | Path, threshold: float = 0.5) -> np.ndarray:
    """Read a mask image as a boolean (H, W) array, thresholding at 0.5."""
    img = _decode(path).convert("L")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr > threshold


def save_image(arr: np.ndarray, path: str | Path) -> None:
    """Write a float image in [0, 1] as an 8-bit PNG."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if data.shape[2] == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    elif data.shape[2] == 3:
        Image.fromarray(data, mode="RGB").save(path)
    else:
        raise ShapeError(f"cannot save image with {data.shape[2]} channels")


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a boolean mask as an 8-bit PNG with values {0, 255}."""
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def check_image(arr: np.ndarray) -> np.ndarray:
    """Validate an image array: (H, W, C), C in {1, 3}, finite, in [0, 1]."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeError(f"expected (H, W, 1|3) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ShapeError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ShapeError("image values must lie in [0, 1]")
    return arr.astype(np.float64, copy=False)


def binarize(plane: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a single-channel plane into a boolean mask (> threshold)."""
    plane = np.asarray(plane)
    if plane.ndim == 3:
        if plane.shape[2] != 1:
            raise ShapeError(f"binarize expects one channel, got {plane.shape[2]}")
        plane = plane[:, :, 0]
    elif plane.ndim != 2:
        raise ShapeError(f"binarize expects a 2-d plane, got shape {plane.shape}")
    return plane > threshold


# ---------------------------------------------------------------------------
# morphology
# ---------------------------------------------------------------------------

def _check_kernel(kernel: int) -> int:
    if not isinstance(kernel, (int, np.integer)) or kernel < 1 or kernel % 2 == 0:
        raise ParameterError(f"kernel must be a positive odd integer, got {kernel}")
    return int(kernel)


def erode(mask: np.ndarray, kernel: int) -> np.ndarray:
    """Binary erosion with a kernel x kernel square, zero padded."""
    kernel = _check_kernel(kernel)
    mask = np.asarray(mask, dtype=bool)
    if kernel == 1:
        return mask.copy()
    structure = np.ones((kernel, kernel), dtype=bool)
    return ndimage.binary_erosion(mask, structure=structure, border_value=0)


def dilate(mask: np.ndarray, kernel: int) -> np.ndarray:
    """Binary dilation with a kernel x kernel square, zero padded."""
    kernel = _check_kernel(kernel)
    mask = np.asarray(mask, dtype=bool)
    if kernel == 1:
        return mask.copy()
    structure = np.ones((kernel, kernel), dtype=bool)
    return ndimage.binary_dilation(mask, structure=structure, border_value=0)


def select_kernels(
    mask: np.ndarray,
    erode_target: float = 0.8,
    dilate_target: float = 1.2,
    kernel_max: int = 21,
) -> tuple[int, int]:
    """Pick erosion and dilation kernels adapted to the mask's size.

    Scans odd kernels in [1, kernel_max] and returns, independently for
    each operation, the kernel whose resulting area is closest to
    erode_target (dilate_target) times the mask area.  Erosion kernels
    that empty the mask are excluded, so the erosion pick always leaves
    at least one pixel.  Ties go to the smaller kernel.
    """
    _check_kernel(kernel_max)
    mask = np.asarray(mask, dtype=bool)
    area = int(mask.sum())
    if area == 0:
        raise DegenerateInputError("cannot select kernels for an empty mask")

    # A square erosion/dilation of side 2i+1 equals i iterations of the
    # 3x3 square, which lets one incremental sweep cover all candidates.
    structure = np.ones((3, 3), dtype=bool)
    best_e, best_e_diff = 1, abs(area - erode_target * area)
    best_d, best_d_diff = 1, abs(area - dilate_target * area)
    eroded, dilated = mask, mask
    for kernel in range(3, kernel_max + 1, 2):
        eroded = ndimage.binary_erosion(eroded, structure=structure, border_value=0)
        dilated = ndimage.binary_dilation(dilated, structure=structure, border_value=0)
        e_area = int(eroded.sum())
        d_area = int(dilated.sum())
        if e_area > 0:
            diff = abs(e_area - erode_target * area)
            if diff < best_e_diff:
                best_e, best_e_diff = kernel, diff
        diff = abs(d_area - dilate_target * area)
        if diff < best_d_diff:
            best_d, best_d_diff = kernel, diff
    return best_e, best_d


# ---------------------------------------------------------------------------
# trimaps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trimap:
    """Partition of the frame into foreground, background, and a boundary band.

    fg is the eroded mask, bg the complement of the dilated mask, and
    band everything in between; the three regions are disjoint and
    cover the frame.
    """

    fg: np.ndarray
    bg: np.ndarray
    band: np.ndarray
    erode_kernel: int
    dilate_kernel: int

    @property
    def degenerate_background(self) -> bool:
        return not self.bg.any()


def make_trimap(
    mask: np.ndarray,
    kernels: tuple[int, int] | None = None,
    erode_target: float = 0.8,
    dilate_target: float = 1.2,
    kernel_max: int = 21,
) -> Trimap:
    """Build the fg / band / bg partition used by every downstream score.

    Kernels are selected adaptively unless an explicit (erode, dilate)
    pair is given.  A mask covering the whole frame yields an empty
    background; callers surface that as a degenerate-input warning.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateInputError("cannot build a trimap from an empty mask")
    if kernels is None:
        kernels = select_kernels(mask, erode_target, dilate_target, kernel_max)
    k_e, k_d = kernels
    fg = erode(mask, k_e)
    bg = ~dilate(mask, k_d)
    band = ~(fg | bg)
    return Trimap(fg=fg, bg=bg, band=band, erode_kernel=int(k_e), dilate_kernel=int(k_d))


# ---------------------------------------------------------------------------
# object crops
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CropBox:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def apply(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.y0:self.y1, self.x0:self.x1]


def bounding_box(mask: np.ndarray) -> CropBox:
    """Tight half-open bounding box of the true pixels."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise DegenerateInputError("cannot bound an empty mask")
    return CropBox(x0=int(cols[0]), y0=int(rows[0]), x1=int(cols[-1]) + 1, y1=int(rows[-1]) + 1)


def crop_box_for(mask: np.ndarray, margin: float = 0.5) -> CropBox:
    """Object bounding box expanded by ``margin`` of its size per side.

    The expansion is rounded to whole pixels and clamped to the frame.
    """
    if margin < 0:
        raise ParameterError(f"crop margin must be >= 0, got {margin}")
    box = bounding_box(mask)
    h, w = np.asarray(mask).shape
    dx = int(round(margin * box.width))
    dy = int(round(margin * box.height))
    return CropBox(
        x0=max(0, box.x0 - dx),
        y0=max(0, box.y0 - dy),
        x1=min(w, box.x1 + dx),
        y1=min(h, box.y1 + dy),
    )


def crop_to_object(
    image: np.ndarray, mask: np.ndarray, margin: float = 0.5
) -> tuple[np.ndarray, np.ndarray, CropBox]:
    """Crop image and mask to the expanded object box."""
    image = np.asarray(image)
    mask = np.asarray(mask, dtype=bool)
    if image.shape[:2] != mask.shape:
        raise ShapeError(
            f"image {image.shape[:2]} and mask {mask.shape} sizes do not match"
        )
    box = crop_box_for(mask, margin)
    return box.apply(image), box.apply(mask), box
