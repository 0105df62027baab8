"""Patch grids over image regions and nearest-neighbor patch search.

Patches are square windows flattened to vectors in row-major pixel,
then channel order.  The exact index is a chunked brute-force scan;
the approximate index is a small randomized k-d forest searched
best-bin-first under a checked-leaves budget.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InsufficientBackgroundError, ParameterError


def grid_anchors(size: int, patch_side: int, stride: int) -> np.ndarray:
    """1-d anchor offsets tiling [0, size) with stride, clamped at the end.

    Anchors run 0, stride, 2*stride, ... while a full patch fits; if the
    last one stops short of the end, a final anchor is clamped to
    size - patch_side so the tiling always reaches the frame edge.
    """
    if patch_side > size:
        raise ParameterError(f"patch side {patch_side} exceeds extent {size}")
    anchors = list(range(0, size - patch_side + 1, stride))
    if anchors[-1] + patch_side < size:
        anchors.append(size - patch_side)
    return np.asarray(anchors, dtype=np.intp)


@dataclass(frozen=True)
class PatchGrid:
    """Flattened patch vectors plus their (y, x) anchors.

    Anchors are sorted row-major, which downstream code relies on for
    deterministic first-minimum tie breaking.
    """

    anchors: np.ndarray          # (N, 2) int, (y, x) top-left corners
    vectors: np.ndarray          # (N, patch_side**2 * C) float
    patch_side: int
    stride: int
    image_shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.anchors)


def _window_sums(region: np.ndarray, side: int) -> np.ndarray:
    """Count of region pixels under each side x side window (valid placements)."""
    ii = np.zeros((region.shape[0] + 1, region.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = np.cumsum(np.cumsum(region.astype(np.int64), axis=0), axis=1)
    return (ii[side:, side:] - ii[:-side, side:] - ii[side:, :-side] + ii[:-side, :-side])


def extract_patches(
    image: np.ndarray,
    region: np.ndarray,
    patch_side: int = 7,
    stride: int = 4,
    mode: str = "intersect",
) -> PatchGrid:
    """Collect patches anchored on the stride tiling, filtered by region.

    mode "intersect" keeps anchors whose patch overlaps the region by at
    least one pixel (foreground grids: together they cover every region
    pixel).  mode "inside" keeps anchors whose patch lies entirely
    within the region (background indexes, free of contamination).
    """
    image = np.asarray(image, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.shape[:2] != region.shape:
        raise ParameterError("image and region shapes do not match")
    if mode not in ("intersect", "inside"):
        raise ParameterError(f"unknown patch grid mode {mode!r}")
    h, w = region.shape
    if not region.any():
        if mode == "inside":
            raise InsufficientBackgroundError("region has no pixels to index")
        raise DegenerateInputError("cannot tile an empty region")

    ys = grid_anchors(h, patch_side, stride)
    xs = grid_anchors(w, patch_side, stride)
    counts = _window_sums(region, patch_side)[np.ix_(ys, xs)]
    if mode == "intersect":
        keep = counts > 0
    else:
        keep = counts == patch_side * patch_side
    gy, gx = np.nonzero(keep)
    if gy.size == 0:
        # "inside" with a region thinner than one patch in every spot.
        raise InsufficientBackgroundError(
            f"region cannot host a single {patch_side}x{patch_side} patch"
        )
    anchors = np.stack([ys[gy], xs[gx]], axis=1)

    windows = np.lib.stride_tricks.sliding_window_view(image, (patch_side, patch_side), axis=(0, 1))
    # windows: (H-side+1, W-side+1, C, side, side) -> vector order (y, x, c)
    vecs = windows[anchors[:, 0], anchors[:, 1]]          # (N, C, side, side)
    vecs = np.moveaxis(vecs, 1, -1).reshape(len(anchors), -1)
    return PatchGrid(
        anchors=anchors,
        vectors=np.ascontiguousarray(vecs),
        patch_side=patch_side,
        stride=stride,
        image_shape=(h, w),
    )


# ---------------------------------------------------------------------------
# exact search
# ---------------------------------------------------------------------------

class ExactPatchIndex:
    """Brute-force nearest patch search, chunked so memory stays bounded.

    Ties on distance resolve to the lowest (y, x) anchor because the
    grid is row-major sorted and argmin keeps the first minimum.
    """

    def __init__(self, grid: PatchGrid):
        if len(grid) == 0:
            raise InsufficientBackgroundError("cannot index an empty patch grid")
        self.grid = grid
        self._vectors = grid.vectors
        self._sq_norms = np.einsum("nd,nd->n", self._vectors, self._vectors)

    def query(self, queries: np.ndarray, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """Return (indexes, squared distances) of nearest patches."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        n = len(queries)
        idx = np.empty(n, dtype=np.intp)
        dist = np.empty(n, dtype=np.float64)
        for start in range(0, n, chunk):
            q = queries[start:start + chunk]
            # ||q - v||^2 = ||q||^2 - 2 q.v + ||v||^2, computed as one GEMM
            cross = q @ self._vectors.T
            d2 = self._sq_norms[None, :] - 2.0 * cross
            d2 += np.einsum("nd,nd->n", q, q)[:, None]
            best = np.argmin(d2, axis=1)
            idx[start:start + chunk] = best
            np.maximum(d2[np.arange(len(q)), best], 0.0, out=dist[start:start + chunk])
        return idx, dist


# ---------------------------------------------------------------------------
# approximate search
# ---------------------------------------------------------------------------

class _KDTree:
    """One randomized k-d tree: split dims drawn from the top-variance few."""

    __slots__ = ("split_dim", "split_val", "left", "right", "points", "leaf_size")

    def __init__(self, vectors, indexes, rng, leaf_size, top_k=5):
        self.leaf_size = leaf_size
        if len(indexes) <= leaf_size:
            self.points = indexes
            self.split_dim = -1
            self.split_val = 0.0
            self.left = self.right = None
            return
        self.points = None
        sub = vectors[indexes]
        variances = sub.var(axis=0)
        order = np.argsort(variances)[::-1][:top_k]
        candidates = order[variances[order] > 0]
        if candidates.size == 0:
            # all duplicate points: no useful split, keep as one big leaf
            self.points = indexes
            self.split_dim = -1
            self.split_val = 0.0
            self.left = self.right = None
            return
        self.split_dim = int(candidates[rng.integers(0, len(candidates))])
        values = sub[:, self.split_dim]
        self.split_val = float(np.median(values))
        go_left = values <= self.split_val
        if go_left.all() or not go_left.any():
            go_left = values < self.split_val
        if go_left.all() or not go_left.any():
            half = len(indexes) // 2
            order2 = np.argsort(values, kind="stable")
            go_left = np.zeros(len(indexes), dtype=bool)
            go_left[order2[:half]] = True
        self.left = _KDTree(vectors, indexes[go_left], rng, leaf_size, top_k)
        self.right = _KDTree(vectors, indexes[~go_left], rng, leaf_size, top_k)


class ApproxPatchIndex:
    """Randomized k-d forest searched best-bin-first with a leaf budget.

    Quality contract: with default parameters the returned patch
    distance is within 1.05x of the exact minimum on at least 95% of
    queries (verified against the exact index in tests).
    """

    def __init__(
        self,
        grid: PatchGrid,
        trees: int = 4,
        leaf_size: int = 16,
        seed: int = 0,
        checks: int = 64,
    ):
        if len(grid) == 0:
            raise InsufficientBackgroundError("cannot index an empty patch grid")
        self.grid = grid
        self.checks = checks
        self._vectors = grid.vectors
        rng = np.random.default_rng(seed)
        indexes = np.arange(len(grid), dtype=np.intp)
        self._trees = [_KDTree(self._vectors, indexes, rng, leaf_size) for _ in range(trees)]

    def _query_one(self, q: np.ndarray, max_checks: int) -> tuple[int, float]:
        best_idx, best_d2 = -1, np.inf
        checked = 0
        heap: list[tuple[float, int, _KDTree]] = []
        counter = 0
        for tree in self._trees:
            heapq.heappush(heap, (0.0, counter, tree))
            counter += 1
        while heap and checked < max_checks:
            bound, _, node = heapq.heappop(heap)
            if bound >= best_d2:
                continue
            # descend to the leaf for q, queueing far branches with bounds
            while node.points is None:
                diff = q[node.split_dim] - node.split_val
                near, far = (node.left, node.right) if diff <= 0 else (node.right, node.left)
                far_bound = max(bound, diff * diff)
                if far_bound < best_d2:
                    heapq.heappush(heap, (far_bound, counter, far))
                    counter += 1
                node = near
            pts = node.points
            d2 = np.einsum("nd,nd->n", self._vectors[pts] - q, self._vectors[pts] - q)
            j = int(np.argmin(d2))
            if d2[j] < best_d2 or (d2[j] == best_d2 and pts[j] < best_idx):
                best_idx, best_d2 = int(pts[j]), float(d2[j])
            checked += 1
        return best_idx, max(best_d2, 0.0)

    def query(self, queries: np.ndarray, max_checks: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        budget = self.checks if max_checks is None else max_checks
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        idx = np.empty(len(queries), dtype=np.intp)
        dist = np.empty(len(queries), dtype=np.float64)
        for i, q in enumerate(queries):
            idx[i], dist[i] = self._query_one(q, budget)
        return idx, dist


def build_index(
    grid: PatchGrid,
    method: str = "exact",
    trees: int = 4,
    checks: int = 64,
    seed: int = 0,
):
    if method == "exact":
        return ExactPatchIndex(grid)
    if method == "kdtree":
        return ApproxPatchIndex(grid, trees=trees, checks=checks, seed=seed)
    raise ParameterError(f"unknown nearest-neighbor method {method!r}")
