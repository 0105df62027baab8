"""Per-cell appearance features and the feature tensor interchange format.

The built-in extractor walks a stride-2 grid and describes each cell by
17 numbers drawn from the 5x5 window around it: mean and standard
deviation per RGB channel (6), an 8-bin gradient orientation histogram
(8), mean gradient magnitude (1), 16-bin luminance entropy (1), and
local contrast (1).  Window statistics replicate the frame edge, so a
constant image yields constant means and zeros everywhere else.

External feature tensors use the CAMF container: magic "CAMF", u32
version 1, u32 grid height/width/dim, float32 row-major payload, all
little-endian, stored in a ``<stem>.feat`` sidecar next to the image.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .boundary import sobel_gradients, to_grayscale
from .errors import FormatError, ShapeError

BUILTIN_DIM = 17
BUILTIN_ID = "builtin-v1"
CAMF_MAGIC = b"CAMF"
CAMF_VERSION = 1

_ENTROPY_BINS = 16
_ORIENT_BINS = 8
_MAG_EPS = 1e-12


@dataclass(frozen=True)
class FeatureMap:
    """Dense grid of feature vectors covering an image."""

    vectors: np.ndarray          # (Hg, Wg, D) float
    extractor_id: str
    stride: int | None = None    # pixel stride when produced by the builtin

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]


def _window_mean(plane: np.ndarray, window: int) -> np.ndarray:
    return ndimage.uniform_filter(plane, size=window, mode="nearest")


def extract_features(image: np.ndarray, stride: int = 2, window: int = 5) -> FeatureMap:
    """Built-in 17-dimensional descriptor on a stride-2 grid."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.shape[2] == 1:
        rgb = np.repeat(image, 3, axis=2)
    elif image.shape[2] == 3:
        rgb = image
    else:
        raise ShapeError(f"expected 1 or 3 channels, got {image.shape[2]}")

    gray = to_grayscale(rgb)
    gx, gy = sobel_gradients(gray)
    mag = np.hypot(gx, gy)

    planes = []
    for c in range(3):                      # window mean per channel
        planes.append(_window_mean(rgb[:, :, c], window))
    for c in range(3):                      # window std per channel
        m1 = _window_mean(rgb[:, :, c], window)
        m2 = _window_mean(rgb[:, :, c] ** 2, window)
        planes.append(np.sqrt(np.maximum(m2 - m1 * m1, 0.0)))

    # orientation histogram: fraction of window pixels whose gradient
    # falls in each of 8 angle bins; zero-magnitude pixels vote nowhere
    angle = np.arctan2(gy, gx)
    bins = np.floor((angle + np.pi) / (np.pi / 4)).astype(np.intp) % _ORIENT_BINS
    active = mag > _MAG_EPS
    for b in range(_ORIENT_BINS):
        planes.append(_window_mean(((bins == b) & active).astype(np.float64), window))

    planes.append(_window_mean(mag, window))            # mean gradient magnitude

    # 16-bin luminance entropy, normalized by the 4-bit maximum
    lum_bins = np.minimum((gray * _ENTROPY_BINS).astype(np.intp), _ENTROPY_BINS - 1)
    probs = [
        _window_mean((lum_bins == b).astype(np.float64), window)
        for b in range(_ENTROPY_BINS)
    ]
    entropy = np.zeros_like(gray)
    for p in probs:
        nz = p > 0.0
        entropy[nz] -= p[nz] * np.log2(p[nz])
    planes.append(entropy / np.log2(_ENTROPY_BINS))

    contrast = (
        ndimage.maximum_filter(gray, size=window, mode="nearest")
        - ndimage.minimum_filter(gray, size=window, mode="nearest")
    )
    planes.append(contrast)

    stack = np.stack(planes, axis=2)[::stride, ::stride]
    return FeatureMap(vectors=np.ascontiguousarray(stack), extractor_id=BUILTIN_ID, stride=stride)


# ---------------------------------------------------------------------------
# CAMF tensor files
# ---------------------------------------------------------------------------

def write_feature_file(path: str | Path, fm: FeatureMap) -> None:
    """Write a feature map as a CAMF tensor (float32, little-endian)."""
    hg, wg = fm.grid_shape
    payload = np.ascontiguousarray(fm.vectors, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(CAMF_MAGIC)
        fh.write(struct.pack("<IIII", CAMF_VERSION, hg, wg, fm.dim))
        fh.write(payload)


def read_feature_file(path: str | Path) -> FeatureMap:
    """Read a CAMF tensor, validating magic, version, size, and finiteness."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 20 or blob[:4] != CAMF_MAGIC:
        raise FormatError(f"{path}: not a CAMF feature tensor")
    version, hg, wg, dim = struct.unpack("<IIII", blob[4:20])
    if version != CAMF_VERSION:
        raise FormatError(f"{path}: unsupported CAMF version {version}")
    expected = hg * wg * dim * 4
    if len(blob) - 20 != expected:
        raise FormatError(
            f"{path}: payload holds {len(blob) - 20} bytes, header implies {expected}"
        )
    vectors = np.frombuffer(blob, dtype="<f4", offset=20).reshape(hg, wg, dim)
    if not np.isfinite(vectors).all():
        raise FormatError(f"{path}: tensor contains non-finite values")
    return FeatureMap(vectors=vectors.copy(), extractor_id=f"external:{path.name}")


def feature_sidecar(image_path: str | Path) -> Path:
    """Path of the CAMF sidecar conventionally paired with an image."""
    image_path = Path(image_path)
    return image_path.with_name(image_path.stem + ".feat")


# ---------------------------------------------------------------------------
# region downsampling
# ---------------------------------------------------------------------------

def _grid_bounds(extent: int, cells: int, stride: int | None) -> np.ndarray:
    """Pixel boundaries of each grid cell's block along one axis."""
    if stride is not None:
        bounds = np.minimum(np.arange(cells + 1) * stride, extent)
    else:
        bounds = (np.arange(cells + 1) * extent) // cells
    return bounds.astype(np.intp)


def region_cells(
    fm: FeatureMap, region: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Majority-vote the pixel region down to the feature grid.

    Each grid cell owns a block of pixels; a cell joins the region when
    strictly more than half its block is inside, and exact half ties
    are excluded from both sides.  Returns (selected, tied) boolean
    grids.
    """
    region = np.asarray(region, dtype=bool)
    h, w = region.shape
    hg, wg = fm.grid_shape
    if hg > h or wg > w:
        raise ShapeError(f"feature grid {hg}x{wg} finer than image {h}x{w}")
    yb = _grid_bounds(h, hg, fm.stride)
    xb = _grid_bounds(w, wg, fm.stride)
    ii = np.zeros((h + 1, w + 1), dtype=np.int64)
    ii[1:, 1:] = np.cumsum(np.cumsum(region.astype(np.int64), axis=0), axis=1)
    counts = (
        ii[np.ix_(yb[1:], xb[1:])]
        - ii[np.ix_(yb[:-1], xb[1:])]
        - ii[np.ix_(yb[1:], xb[:-1])]
        + ii[np.ix_(yb[:-1], xb[:-1])]
    )
    sizes = np.outer(np.diff(yb), np.diff(xb))
    selected = 2 * counts > sizes
    tied = 2 * counts == sizes
    tied &= sizes > 0
    return selected, tied
