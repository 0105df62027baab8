"""Boundary visibility: edge detection and band-restricted contour F1.

The detector is a Sobel gradient pipeline: grayscale conversion, 3x3
derivatives with replicated borders, magnitude normalized by its own
maximum, single-pixel thinning along the gradient direction, then
double-threshold hysteresis.  Thinning resolves plateau ties toward the
brighter pixel so mask contours land on the mask's own perimeter ring.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ShapeError
from .imaging import Trimap, dilate, erode, load_image

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luminance plane of a (H, W, C) image, C in {1, 3}."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.shape[2] == 1:
        return image[:, :, 0]
    if image.shape[2] == 3:
        return image @ GRAY_WEIGHTS
    raise ShapeError(f"expected 1 or 3 channels, got {image.shape[2]}")


def sobel_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives with edge-replicated borders."""
    p = np.pad(gray, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def _shifted(arr: np.ndarray, dy: int, dx: int, fill: float) -> np.ndarray:
    """arr sampled at (y+dy, x+dx), out-of-frame positions filled."""
    out = np.full_like(arr, fill)
    h, w = arr.shape
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    yd = slice(max(0, -dy), min(h, h - dy))
    xd = slice(max(0, -dx), min(w, w - dx))
    out[yd, xd] = arr[ys, xs]
    return out


def _thin(mag: np.ndarray, gray: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Suppress non-maxima along the quantized gradient direction.

    A pixel survives against each of its two neighbors along the
    gradient unless the neighbor has larger magnitude, or equal
    magnitude and larger gray value, or equal both and an earlier
    scan position.  The gray tie-break puts step-edge responses on the
    brighter side; the scan tie-break keeps the result deterministic.
    """
    h, w = mag.shape
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    direction = np.zeros((h, w), dtype=np.int8)
    direction[(angle >= np.pi / 8) & (angle < 3 * np.pi / 8)] = 1   # +x+y diagonal
    direction[(angle >= 3 * np.pi / 8) & (angle < 5 * np.pi / 8)] = 2  # vertical
    direction[(angle >= 5 * np.pi / 8) & (angle < 7 * np.pi / 8)] = 3  # +x-y diagonal
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (-1, 1)}

    scan = np.arange(h * w, dtype=np.float64).reshape(h, w)
    keep = mag > 0.0
    for d, (dy, dx) in offsets.items():
        sel = direction == d
        if not sel.any():
            continue
        for sy, sx in ((dy, dx), (-dy, -dx)):
            n_mag = _shifted(mag, sy, sx, -np.inf)
            n_gray = _shifted(gray, sy, sx, -np.inf)
            n_scan = _shifted(scan, sy, sx, np.inf)
            beats = (n_mag > mag) | (
                (n_mag == mag) & ((n_gray > gray) | ((n_gray == gray) & (n_scan < scan)))
            )
            keep &= ~(sel & beats)
    return keep


@dataclass(frozen=True)
class ContourMap:
    """Binary-ish contour strength plane plus its provenance label."""

    plane: np.ndarray
    source: str = "builtin"

    def binary(self, threshold: float = 0.5) -> np.ndarray:
        return self.plane > threshold


def detect_edges(image: np.ndarray, high: float = 0.2, low: float = 0.08) -> ContourMap:
    """Thin contour map of an image: Sobel, thinning, hysteresis.

    Thresholds apply to the magnitude normalized by its own maximum;
    weak pixels survive only when 8-connected to a strong pixel.  A
    constant image has no gradient and yields an all-zero map.
    """
    gray = to_grayscale(image)
    gx, gy = sobel_gradients(gray)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak == 0.0:
        return ContourMap(plane=np.zeros_like(gray))
    mag = mag / peak

    keep = _thin(mag, gray, gx, gy)
    strong = keep & (mag >= high)
    weak = keep & (mag >= low)
    if not strong.any():
        return ContourMap(plane=np.zeros_like(gray))
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    good = np.zeros(count + 1, dtype=bool)
    good[np.unique(labels[strong])] = True
    good[0] = False
    return ContourMap(plane=good[labels].astype(np.float64))


def render_mask(mask: np.ndarray) -> np.ndarray:
    """Binary mask as a float grayscale plane for the edge detector."""
    return np.asarray(mask, dtype=bool).astype(np.float64)


def contour_sidecar(image_path: str | Path) -> Path:
    """Path of the contour-map sidecar conventionally paired with an image."""
    image_path = Path(image_path)
    return image_path.with_name(image_path.stem + ".contour.png")


def load_contour_map(path: str | Path) -> ContourMap:
    """Load an externally produced contour strength map from an image file."""
    arr = load_image(path)
    plane = arr[:, :, 0] if arr.shape[2] == 1 else to_grayscale(arr)
    return ContourMap(plane=plane, source=f"external:{Path(path).name}")


def ground_truth_contours(mask: np.ndarray, high: float = 0.2, low: float = 0.08) -> ContourMap:
    """Reference contours: the same detector run on the rendered mask.

    Inside the boundary band this coincides with the mask's inner
    morphological gradient (mask minus its 3x3 erosion).
    """
    return detect_edges(render_mask(mask)[:, :, None], high=high, low=low)


def inner_gradient(mask: np.ndarray, kernel: int = 3) -> np.ndarray:
    """Morphological inner gradient: mask pixels lost to a kernel erosion."""
    mask = np.asarray(mask, dtype=bool)
    return mask & ~erode(mask, kernel)


@dataclass(frozen=True)
class BoundaryResult:
    s_b: float
    f1: float
    precision: float
    recall: float
    contour_source: str = "builtin"


def boundary_f1(
    c_gt: ContourMap,
    c: ContourMap,
    band: np.ndarray,
    tolerance: int = 3,
    threshold: float = 0.5,
) -> tuple[float, float, float]:
    """Band-restricted contour F1 with a one-pixel match tolerance.

    Precision matches detected pixels against the dilated reference,
    recall matches reference pixels against the dilated detection; a
    tolerance kernel of 1 disables the slack and reduces both to plain
    intersection counts.  Both contour sets empty inside the band is
    scored 0 by convention (b scores treat it as perfect camouflage).
    """
    band = np.asarray(band, dtype=bool)
    gb = c_gt.binary(threshold) & band
    cb = c.binary(threshold) & band
    if not gb.any() and not cb.any():
        return 0.0, 0.0, 0.0
    if not cb.any() or not gb.any():
        return 0.0, 0.0, 0.0
    precision = float((cb & dilate(gb, tolerance)).sum() / cb.sum())
    recall = float((gb & dilate(cb, tolerance)).sum() / gb.sum())
    if precision + recall == 0.0:
        return 0.0, precision, recall
    f1 = 2.0 * precision * recall / (precision + recall)
    return f1, precision, recall


def boundary_score(
    image: np.ndarray,
    mask: np.ndarray,
    trimap: Trimap,
    contour_map: ContourMap | None = None,
    high: float = 0.2,
    low: float = 0.08,
    tolerance: int = 3,
    threshold: float = 0.5,
) -> BoundaryResult:
    """Boundary visibility score: one minus the band-restricted F1.

    A perfectly hidden boundary leaves no detectable contour where the
    reference says one should be, driving F1 to 0 and the score to 1.
    """
    c_gt = ground_truth_contours(mask, high=high, low=low)
    c = contour_map if contour_map is not None else detect_edges(image, high=high, low=low)
    if c.plane.shape != c_gt.plane.shape:
        raise ShapeError(
            f"contour map shape {c.plane.shape} does not match mask {c_gt.plane.shape}"
        )
    f1, precision, recall = boundary_f1(c_gt, c, trimap.band, tolerance, threshold)
    return BoundaryResult(
        s_b=1.0 - f1,
        f1=f1,
        precision=precision,
        recall=recall,
        contour_source=c.source,
    )
