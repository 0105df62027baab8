"""Synthetic camouflage video sequences with ground-truth masks.

A source (image, mask) pair yields a sprite and an inpainted background
plate; random integer trajectories move both, with optional static
segments where the sprite rides the background motion.  The plate
wraps toroidally (unbounded background translation without revealing
borders) while the sprite reflects at the frame bounds, so the object
never leaves the frame.
"""
from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imaging
from .errors import (
    CannotFillError,
    FormatError,
    InsufficientBackgroundError,
    ParameterError,
    ShapeError,
)
from .patches import extract_patches

DEFAULT_LENGTH = 30
DEFAULT_MAX_STEP = 3
STATIC_LENGTH_RANGE = (3, 8)
MAX_STATIC_SEGMENTS = 2


# ---------------------------------------------------------------------------
# sprites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sprite:
    """Object pixels cut out along the mask, with their source location."""

    rgb: np.ndarray
    alpha: np.ndarray
    origin: tuple

    @property
    def shape(self) -> tuple:
        return self.alpha.shape


def extract_sprite(image: np.ndarray, mask: np.ndarray) -> Sprite:
    """Cut the masked object out of an image at its tight bounding box."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape[:2]:
        raise ShapeError(
            f"mask shape {mask.shape} does not match image {image.shape[:2]}"
        )
    box = imaging.bounding_box(mask)
    return Sprite(
        rgb=box.apply(image).copy(),
        alpha=box.apply(mask).copy(),
        origin=(box.y0, box.x0),
    )


# ---------------------------------------------------------------------------
# background plate
# ---------------------------------------------------------------------------

def _window_bounds(center: int, side: int, extent: int) -> tuple:
    """Clamped [start, stop) of a side-long window centered near a pixel."""
    start = min(max(center - side // 2, 0), extent - side)
    return start, start + side


def fill_background(
    image: np.ndarray,
    mask: np.ndarray,
    patch_side: int = 7,
) -> np.ndarray:
    """Inpaint the masked hole by onion-peel patch matching.

    Each step fills the hole-boundary pixel with the most known pixels
    in its window, copying the corresponding pixel of the background
    patch that best matches the window's known portion.  The candidate
    patches are drawn once from the original clean background, so the
    hole shrinks by one pixel per step and the loop always terminates.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    image = imaging.check_image(image)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape[:2]:
        raise ShapeError(
            f"mask shape {mask.shape} does not match image {image.shape[:2]}"
        )
    if not mask.any():
        return image.copy()
    if mask.all():
        raise CannotFillError("mask covers the whole frame; nothing to fill from")

    h, w, channels = image.shape
    if patch_side > min(h, w):
        raise ParameterError(f"patch side {patch_side} exceeds the frame {h}x{w}")
    try:
        grid = extract_patches(image, ~mask, patch_side, 1, mode="inside")
    except InsufficientBackgroundError as exc:
        raise CannotFillError(
            f"background holds no clean {patch_side}x{patch_side} patch: {exc}"
        ) from None
    vectors = grid.vectors

    plate = image.copy()
    known = ~mask
    neighbors = np.ones((3, 3), dtype=bool)
    while not known.all():
        boundary = ~known & ndimage.binary_dilation(known, structure=neighbors)
        # integral image of known pixels for clamped window counts
        padded = np.zeros((h + 1, w + 1), dtype=np.int64)
        np.cumsum(np.cumsum(known, axis=0), axis=1, out=padded[1:, 1:])
        ys, xs = np.nonzero(boundary)
        best = -1
        target = (ys[0], xs[0])
        for y, x in zip(ys, xs):
            y0, y1 = _window_bounds(y, patch_side, h)
            x0, x1 = _window_bounds(x, patch_side, w)
            count = int(padded[y1, x1] - padded[y0, x1]
                        - padded[y1, x0] + padded[y0, x0])
            if count > best:
                best = count
                target = (y, x)

        y, x = target
        y0, y1 = _window_bounds(y, patch_side, h)
        x0, x1 = _window_bounds(x, patch_side, w)
        window = plate[y0:y1, x0:x1]
        window_known = known[y0:y1, x0:x1]
        cols = np.repeat(window_known.ravel(), channels)
        q = window.reshape(-1)[cols]
        diff = vectors[:, cols] - q
        choice = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
        patch = vectors[choice].reshape(patch_side, patch_side, channels)
        plate[y, x] = patch[y - y0, x - x0]
        known[y, x] = True
    return plate


def plate_sidecar(image_path: str | Path) -> Path:
    """Path of the background-plate sidecar conventionally paired with an image."""
    image_path = Path(image_path)
    return image_path.with_name(image_path.stem + ".plate.png")


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceSpec:
    """Trajectory plan for one sequence.

    fg_traj[0] is the sprite's absolute (x, y) start; later entries are
    per-frame (dx, dy) displacements.  bg_traj[0] is always (0, 0).
    Inside each static [start, end) segment the fg and bg displacements
    are equal, so the sprite has zero motion relative to the plate.
    """

    length: int
    fg_traj: tuple
    bg_traj: tuple
    static_segments: tuple
    seed: int
    sprite_source: str = "builtin"
    plate_source: str = "builtin-fill"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "length": self.length,
            "fg_traj": [list(step) for step in self.fg_traj],
            "bg_traj": [list(step) for step in self.bg_traj],
            "static_segments": [list(seg) for seg in self.static_segments],
            "sprite_source": self.sprite_source,
            "plate_source": self.plate_source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SequenceSpec":
        try:
            spec = cls(
                length=int(data["length"]),
                fg_traj=tuple((int(x), int(y)) for x, y in data["fg_traj"]),
                bg_traj=tuple((int(x), int(y)) for x, y in data["bg_traj"]),
                static_segments=tuple(
                    (int(s), int(e)) for s, e in data["static_segments"]
                ),
                seed=int(data["seed"]),
                sprite_source=data.get("sprite_source", "builtin"),
                plate_source=data.get("plate_source", "builtin-fill"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed sequence plan: {exc}") from None
        if len(spec.fg_traj) != spec.length or len(spec.bg_traj) != spec.length:
            raise FormatError("trajectory length does not match the frame count")
        return spec


def reflect_steps(start: int, deltas, limit: int) -> tuple:
    """Walk 1-d steps from start, reflecting at 0 and limit.

    Returns (positions, adjusted) where positions has one entry per
    frame (the start first) and adjusted holds the displacements that
    were actually taken after reflection.
    """
    if limit < 0:
        raise ParameterError("no valid positions: sprite larger than frame")
    pos = int(start)
    positions = [pos]
    adjusted = []
    for d in deltas:
        p = pos + int(d)
        if limit == 0:
            p = 0
        while not 0 <= p <= limit:
            p = -p if p < 0 else 2 * limit - p
        adjusted.append(p - pos)
        pos = p
        positions.append(pos)
    return positions, adjusted


def _sample_static_segments(length: int, rng) -> list:
    wanted = int(rng.integers(0, MAX_STATIC_SEGMENTS + 1))
    segments: list = []
    lo, hi = STATIC_LENGTH_RANGE
    tries = 0
    while len(segments) < wanted and tries < 50:
        tries += 1
        seg_len = int(rng.integers(lo, hi + 1))
        if length - seg_len < 1:
            continue
        start = int(rng.integers(1, length - seg_len + 1))
        end = start + seg_len
        if all(end <= s or start >= e for s, e in segments):
            segments.append((start, end))
    segments.sort()
    return segments


def sample_trajectories(
    frame_shape: tuple,
    sprite_shape: tuple,
    length: int = DEFAULT_LENGTH,
    seed: int = 0,
    max_step: int = DEFAULT_MAX_STEP,
) -> SequenceSpec:
    """Draw a sequence plan: random steps, a valid start, static segments.

    The start position is drawn uniformly from the positions that keep
    the whole path in frame; if no such start exists the path is walked
    with reflection at the bounds instead (copying any reflected step
    back into the background inside static segments, preserving their
    zero-relative-motion invariant).
    """
    h, w = int(frame_shape[0]), int(frame_shape[1])
    sh, sw = int(sprite_shape[0]), int(sprite_shape[1])
    if sh > h or sw > w:
        raise ParameterError(f"sprite {sh}x{sw} does not fit the frame {h}x{w}")
    if length < 1:
        raise ParameterError(f"length must be >= 1, got {length}")
    if max_step < 0:
        raise ParameterError(f"max_step must be >= 0, got {max_step}")

    rng = np.random.default_rng(seed)
    steps = length - 1
    bg = rng.integers(-max_step, max_step + 1, size=(steps, 2))
    fg = rng.integers(-max_step, max_step + 1, size=(steps, 2))
    segments = _sample_static_segments(length, rng)
    for s, e in segments:
        fg[s - 1:e - 1] = bg[s - 1:e - 1]

    limits = (w - sw, h - sh)  # x, y order to match (dx, dy) steps
    start = []
    needs_reflection = False
    for axis, limit in enumerate(limits):
        cum = np.concatenate([[0], np.cumsum(fg[:, axis])])
        lo = int(max(0, -cum.min()))
        hi = int(min(limit, limit - cum.max()))
        if lo > hi:
            needs_reflection = True
            start.append(int(rng.integers(0, limit + 1)))
        else:
            start.append(int(rng.integers(lo, hi + 1)))

    if needs_reflection:
        for axis, limit in enumerate(limits):
            _, adjusted = reflect_steps(start[axis], fg[:, axis], limit)
            fg[:, axis] = adjusted
        for s, e in segments:
            bg[s - 1:e - 1] = fg[s - 1:e - 1]

    fg_traj = [tuple(start)] + [tuple(int(v) for v in step) for step in fg]
    bg_traj = [(0, 0)] + [tuple(int(v) for v in step) for step in bg]
    return SequenceSpec(
        length=length,
        fg_traj=tuple(fg_traj),
        bg_traj=tuple(bg_traj),
        static_segments=tuple(segments),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------

def _check_static_invariant(seq: SequenceSpec) -> None:
    for s, e in seq.static_segments:
        if not 1 <= s < e <= seq.length:
            raise ParameterError(f"static segment [{s}, {e}) outside frames 1..{seq.length}")
        for t in range(s, e):
            if seq.fg_traj[t] != seq.bg_traj[t]:
                raise ParameterError(
                    f"static segment [{s}, {e}) broken at frame {t}: "
                    f"fg step {seq.fg_traj[t]} != bg step {seq.bg_traj[t]}"
                )


def composite_sequence(sprite: Sprite, plate: np.ndarray, seq: SequenceSpec) -> tuple:
    """Render frames and masks: rolled plate under the pasted sprite."""
    plate = np.asarray(plate, dtype=np.float64)
    if plate.ndim == 2:
        plate = plate[:, :, None]
    if plate.shape[2] != sprite.rgb.shape[2]:
        raise ShapeError(
            f"plate has {plate.shape[2]} channels, sprite {sprite.rgb.shape[2]}"
        )
    _check_static_invariant(seq)
    h, w = plate.shape[:2]
    sh, sw = sprite.shape
    x, y = seq.fg_traj[0]
    bx = by = 0
    frames = []
    masks = []
    for t in range(seq.length):
        if t > 0:
            x += seq.fg_traj[t][0]
            y += seq.fg_traj[t][1]
            bx += seq.bg_traj[t][0]
            by += seq.bg_traj[t][1]
        if not (0 <= y <= h - sh and 0 <= x <= w - sw):
            raise ParameterError(
                f"frame {t}: sprite at ({x}, {y}) leaves the {h}x{w} frame"
            )
        frame = np.roll(plate, shift=(by, bx), axis=(0, 1))
        frame[y:y + sh, x:x + sw][sprite.alpha] = sprite.rgb[sprite.alpha]
        mask = np.zeros((h, w), dtype=bool)
        mask[y:y + sh, x:x + sw] = sprite.alpha
        frames.append(frame)
        masks.append(mask)
    return frames, masks


# ---------------------------------------------------------------------------
# dataset emission
# ---------------------------------------------------------------------------

def synthesize_sequence(
    image: np.ndarray,
    mask: np.ndarray,
    length: int = DEFAULT_LENGTH,
    seed: int = 0,
    max_step: int = DEFAULT_MAX_STEP,
    plate: np.ndarray | None = None,
    sprite_source: str = "builtin",
    plate_source: str | None = None,
) -> tuple:
    """One sequence end to end: sprite, plate, plan, rendered frames."""
    sprite = extract_sprite(image, mask)
    if plate is None:
        plate = fill_background(image, mask)
        plate_source = plate_source or "builtin-fill"
    else:
        plate = np.asarray(plate, dtype=np.float64)
        if plate.ndim == 2:
            plate = plate[:, :, None]
        if plate.shape[:2] != np.asarray(mask).shape:
            raise ShapeError(
                f"plate shape {plate.shape[:2]} does not match frame "
                f"{np.asarray(mask).shape}"
            )
        plate_source = plate_source or "external"
    seq = sample_trajectories(plate.shape[:2], sprite.shape, length, seed, max_step)
    seq = SequenceSpec(
        length=seq.length,
        fg_traj=seq.fg_traj,
        bg_traj=seq.bg_traj,
        static_segments=seq.static_segments,
        seed=seq.seed,
        sprite_source=sprite_source,
        plate_source=plate_source,
    )
    frames, masks = composite_sequence(sprite, plate, seq)
    return seq, frames, masks


def emit_dataset(
    image: np.ndarray,
    mask: np.ndarray,
    out_dir: str | Path,
    count: int = 10,
    length: int = DEFAULT_LENGTH,
    seed: int = 0,
    max_step: int = DEFAULT_MAX_STEP,
    plate: np.ndarray | None = None,
    dataset_id: str = "synthetic-video",
    sprite_source: str = "builtin",
    plate_source: str | None = None,
    train_fraction: float = 0.8,
    threads: int = 0,
) -> Path:
    """Emit a train/test split of synthetic sequences plus a manifest.

    Layout: out/{train,test}/{seq_id}/frame_%05d.png + mask_%05d.png +
    spec.json.  The manifest at out/manifest.json has kind "video" with
    one group per sequence, so the corpus scores through score_dataset.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if not 0.0 <= train_fraction <= 1.0:
        raise ParameterError(f"train fraction must lie in [0, 1], got {train_fraction}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    master = np.random.default_rng(seed)
    seq_seeds = [int(s) for s in master.integers(0, 2 ** 31 - 1, size=count)]
    n_train = int(round(count * train_fraction))
    order = master.permutation(count)
    split = {}
    for rank, idx in enumerate(order):
        split[int(idx)] = "train" if rank < n_train else "test"

    shared_plate = plate if plate is not None else fill_background(image, mask)
    resolved_plate_source = plate_source or (
        "builtin-fill" if plate is None else "external"
    )

    entries: list = [None] * count
    lock = threading.Lock()

    def build(i: int) -> None:
        seq_id = f"seq_{i:05d}"
        seq, frames, masks = synthesize_sequence(
            image, mask, length=length, seed=seq_seeds[i], max_step=max_step,
            plate=shared_plate, sprite_source=sprite_source,
            plate_source=resolved_plate_source,
        )
        seq_dir = out_dir / split[i] / seq_id
        seq_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for t, (frame, m) in enumerate(zip(frames, masks)):
            imaging.save_image(frame, seq_dir / f"frame_{t:05d}.png")
            imaging.save_mask(m, seq_dir / f"mask_{t:05d}.png")
            rel = f"{split[i]}/{seq_id}"
            rows.append({
                "id": f"{seq_id}_{t:05d}",
                "image": f"{rel}/frame_{t:05d}.png",
                "mask": f"{rel}/mask_{t:05d}.png",
                "group": seq_id,
            })
        (seq_dir / "spec.json").write_text(
            json.dumps(seq.to_dict(), indent=2) + "\n", encoding="utf-8")
        with lock:
            entries[i] = rows

    workers = threads if threads > 0 else min(count, 8)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(build, range(count)))

    manifest = {
        "dataset_id": dataset_id,
        "kind": "video",
        "examples": [row for rows in entries for row in rows],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path
