"""Reconstruction fidelity: rebuild the foreground from background patches.

Every foreground patch is replaced by its nearest background patch;
overlapping replacements are averaged per pixel.  A foreground pixel
counts as well-hidden when its reconstructed RGB vector lands within a
relative tolerance of the original, and the score is the fraction of
foreground pixels that do.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InsufficientBackgroundError
from .imaging import Trimap
from .patches import build_index, extract_patches


@dataclass(frozen=True)
class Reconstruction:
    """Outcome of one foreground reconstruction.

    image holds the original frame with the covered area replaced by
    averaged patches, hit_mask flags pixels passing the relative test,
    coverage flags pixels touched by at least one replacement patch,
    and s_rf is the mean hit rate over the foreground region.
    """

    image: np.ndarray
    hit_mask: np.ndarray
    coverage: np.ndarray
    s_rf: float
    warnings: tuple[str, ...] = ()


def average_composite(
    anchors: np.ndarray,
    vectors: np.ndarray,
    shape: tuple[int, int],
    patch_side: int,
    channels: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Paste patch vectors at their anchors, averaging where they overlap.

    Returns the composite (zeros where uncovered) and the per-pixel
    contribution count.
    """
    h, w = shape
    acc = np.zeros((h, w, channels), dtype=np.float64)
    counts = np.zeros((h, w), dtype=np.int64)
    tiles = vectors.reshape(-1, patch_side, patch_side, channels)
    for (y, x), tile in zip(anchors, tiles):
        acc[y:y + patch_side, x:x + patch_side] += tile
        counts[y:y + patch_side, x:x + patch_side] += 1
    covered = counts > 0
    acc[covered] /= counts[covered, None]
    return acc, counts


def relative_hits(image: np.ndarray, recon: np.ndarray, lam: float) -> np.ndarray:
    """Per-pixel test: reconstruction error strictly below lam * pixel norm.

    A zero pixel (pure black) can never pass because the comparison is
    strict; that is intended behaviour of the relative tolerance.
    """
    diff = np.linalg.norm(image - recon, axis=2)
    norm = np.linalg.norm(image, axis=2)
    return diff < lam * norm


def reconstruction_score(
    image: np.ndarray,
    trimap: Trimap,
    patch_side: int = 7,
    stride: int = 4,
    bg_stride: int = 1,
    lam: float = 0.2,
    method: str = "exact",
    ann_trees: int = 4,
    ann_checks: int = 64,
    seed: int = 0,
) -> Reconstruction:
    """Score how well the foreground can be rebuilt from the background."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w, channels = image.shape
    if (h, w) != trimap.fg.shape:
        raise DegenerateInputError("image and trimap sizes do not match")
    if not trimap.fg.any():
        raise DegenerateInputError("trimap has no foreground pixels")

    try:
        bg_grid = extract_patches(image, trimap.bg, patch_side, bg_stride, mode="inside")
    except InsufficientBackgroundError as exc:
        # No clean background patch to draw from: the object cannot be
        # reconstructed at all, which scores zero by definition.
        blank = image.copy()
        blank[trimap.fg] = 0.0
        return Reconstruction(
            image=blank,
            hit_mask=np.zeros((h, w), dtype=bool),
            coverage=np.zeros((h, w), dtype=bool),
            s_rf=0.0,
            warnings=(f"insufficient-background: {exc}",),
        )

    fg_grid = extract_patches(image, trimap.fg, patch_side, stride, mode="intersect")
    index = build_index(bg_grid, method=method, trees=ann_trees, checks=ann_checks, seed=seed)
    nearest, _ = index.query(fg_grid.vectors)
    replacements = bg_grid.vectors[nearest]

    composite, counts = average_composite(
        fg_grid.anchors, replacements, (h, w), patch_side, channels
    )
    coverage = counts > 0
    recon = image.copy()
    recon[coverage] = composite[coverage]

    hits = relative_hits(image, recon, lam) & coverage
    s_rf = float(hits[trimap.fg].mean())
    return Reconstruction(
        image=recon, hit_mask=hits, coverage=coverage, s_rf=s_rf, warnings=()
    )
