"""Rank correlation and alpha calibration against human rankings.

Kendall tau-b is computed from exact integer pair counts (concordant,
discordant, ties in one variable only), so the O(n^2) reference route
and the merge-sort fast path produce bit-identical floats.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import (
    DegenerateInputError,
    FormatError,
    IdMismatchError,
    ParameterError,
    ShapeError,
)

RANK_KEYS = {"s_rf": True, "s_b": True, "s_alpha": True, "d2": False}


def _tau_counts_brute(x, y):
    """All-pairs count of (concordant, discordant, tied-x-only, tied-y-only)."""
    n = len(x)
    p = q = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx and dy:
                if dx == dy:
                    p += 1
                else:
                    q += 1
            elif dy:
                tx += 1
            elif dx:
                ty += 1
    return p, q, tx, ty


def _count_inversions(values):
    """Strict inversions (i < j with values[i] > values[j]) by merge sort."""
    arr = list(values)
    buf = [0] * len(arr)

    def merge(lo, hi):
        if hi - lo <= 1:
            return 0
        mid = (lo + hi) // 2
        inv = merge(lo, mid) + merge(mid, hi)
        i, j, k = lo, mid, lo
        while i < mid and j < hi:
            if arr[j] < arr[i]:
                buf[k] = arr[j]
                j += 1
                inv += mid - i
            else:
                buf[k] = arr[i]
                i += 1
            k += 1
        while i < mid:
            buf[k] = arr[i]
            i += 1
            k += 1
        while j < hi:
            buf[k] = arr[j]
            j += 1
            k += 1
        arr[lo:hi] = buf[lo:hi]
        return inv

    return merge(0, len(arr))


def _run_pairs(values):
    """Sum of c*(c-1)/2 over runs of equal consecutive values."""
    total = 0
    run = 1
    for a, b in zip(values, values[1:]):
        if b == a:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def _tau_counts_fast(x, y):
    """Knight-style O(n log n) route to the same four integer counts."""
    n = len(x)
    order = sorted(range(n), key=lambda i: (x[i], y[i]))
    xs = [x[i] for i in order]
    ys = [y[i] for i in order]

    ntie_x = _run_pairs(xs)
    ntie_xy = _run_pairs(list(zip(xs, ys)))
    ntie_y = _run_pairs(sorted(ys))
    # ys is sorted within each equal-x run, so tied-x pairs contribute no
    # inversions; every inversion is a strictly discordant pair
    q = _count_inversions(ys)
    tot = n * (n - 1) // 2
    p = tot - q - ntie_x - ntie_y + ntie_xy
    return p, q, ntie_x - ntie_xy, ntie_y - ntie_xy


def _tau_from_counts(p, q, tx, ty, n, variant):
    if variant == "a":
        return (p - q) / (n * (n - 1) // 2)
    den_x = p + q + tx
    den_y = p + q + ty
    if den_x == 0 or den_y == 0:
        raise DegenerateInputError("kendall tau undefined: one ranking is all ties")
    return (p - q) / math.sqrt(den_x * den_y)


def kendall_tau(x: Sequence[float], y: Sequence[float], variant: str = "b",
                method: str = "fast") -> float:
    """Kendall rank correlation between two paired value sequences.

    variant "b" adjusts the denominator for ties; "a" divides by the
    total pair count. method selects the merge-sort fast path or the
    all-pairs reference; both yield bit-identical results.
    """
    if variant not in ("a", "b"):
        raise ParameterError(f"unknown tau variant {variant!r}")
    if method not in ("fast", "brute"):
        raise ParameterError(f"unknown tau method {method!r}")
    if len(x) != len(y):
        raise ShapeError(f"paired sequences differ in length: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise DegenerateInputError("kendall tau needs at least two pairs")
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    counts = _tau_counts_brute(x, y) if method == "brute" else _tau_counts_fast(x, y)
    return _tau_from_counts(*counts, n, variant)


def _check_same_ids(ids_a, ids_b, label_a, label_b):
    a, b = set(ids_a), set(ids_b)
    if a != b:
        missing = sorted(b - a)
        extra = sorted(a - b)
        raise IdMismatchError(
            f"id sets differ: only in {label_b}: {missing}; only in {label_a}: {extra}",
            details={"only_" + label_b: missing, "only_" + label_a: extra},
        )


def kendall_tau_ids(a: Mapping[str, float], b: Mapping[str, float],
                    variant: str = "b", method: str = "fast") -> float:
    """Kendall tau between two id -> value mappings over the same id set."""
    _check_same_ids(a, b, "first", "second")
    ids = sorted(a)
    return kendall_tau([a[i] for i in ids], [b[i] for i in ids],
                       variant=variant, method=method)


@dataclass(frozen=True)
class HumanRanking:
    """Human study values per example id; higher always means better camouflage.

    kind "score" holds ratings directly; kind "time_seconds" holds
    time-to-find, where a longer search also means better camouflage,
    so values are used in the same direction.
    """

    values: dict
    kind: str = "score"


def load_human_ranking(path) -> HumanRanking:
    """Parse a human ranking CSV with header `id,score` or `id,time_seconds`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty human ranking file")
        header = [h.strip().lower() for h in header]
        if header not in (["id", "score"], ["id", "time_seconds"]):
            raise FormatError(
                f"{path}: header must be 'id,score' or 'id,time_seconds', "
                f"got {','.join(header)!r}"
            )
        kind = header[1]
        values = {}
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            ident = row[0].strip()
            if not ident:
                raise FormatError(f"{path}:{line}: empty id")
            if ident in values:
                raise FormatError(f"{path}:{line}: duplicate id {ident!r}")
            try:
                values[ident] = float(row[1])
            except ValueError:
                raise FormatError(
                    f"{path}:{line}: non-numeric {kind} value {row[1]!r}"
                ) from None
    return HumanRanking(values=values, kind=kind)


def rank_reports(reports, key: str = "s_alpha"):
    """Order score reports by one score key.

    Scores sort descending (higher = better camouflage), d2 ascending
    (lower = better blended). Ties break by example_id. Reports whose
    value for the key is None (e.g. d2 on a degenerate region) are
    dropped from the ranking.
    """
    if key not in RANK_KEYS:
        raise ParameterError(f"unknown ranking key {key!r}; expected one of "
                             + ", ".join(sorted(RANK_KEYS)))
    rows = [r for r in reports if getattr(r, key) is not None]
    if not rows:
        raise DegenerateInputError(f"nothing to rank by {key!r}")
    descending = RANK_KEYS[key]
    sign = -1.0 if descending else 1.0
    return sorted(rows, key=lambda r: (sign * getattr(r, key), r.example_id))


ALPHA_GRID = tuple(i / 20 for i in range(21))


def calibrate_alpha(reports, human, grid: Sequence[float] = ALPHA_GRID,
                    variant: str = "b"):
    """Grid-search the alpha maximizing rank agreement with human values.

    reports carry per-example s_rf and s_b; human is a HumanRanking or a
    plain id -> value mapping. Returns (alpha, tau); ties prefer the
    smallest alpha.
    """
    human_values = human.values if isinstance(human, HumanRanking) else dict(human)
    s_rf = {r.example_id: r.s_rf for r in reports}
    s_b = {r.example_id: r.s_b for r in reports}
    _check_same_ids(s_rf, human_values, "reports", "human")
    ids = sorted(s_rf)
    if len(ids) < 3:
        raise DegenerateInputError(
            f"alpha calibration needs at least 3 examples, got {len(ids)}"
        )
    hvals = [human_values[i] for i in ids]
    if min(hvals) == max(hvals):
        raise DegenerateInputError("human ranking is all ties; cannot calibrate")
    for alpha in grid:
        if not 0.0 <= alpha <= 1.0:
            raise ParameterError(f"alpha grid value {alpha} outside [0, 1]")
    best_alpha = None
    best_tau = -math.inf
    for alpha in sorted(grid):
        combined = [(1.0 - alpha) * s_rf[i] + alpha * s_b[i] for i in ids]
        try:
            tau = kendall_tau(combined, hvals, variant=variant)
        except DegenerateInputError:
            # an alpha can collapse every combined score to one value;
            # tau is undefined there, so that grid point just loses
            continue
        if tau > best_tau:
            best_alpha, best_tau = alpha, tau
    if best_alpha is None:
        raise DegenerateInputError(
            "combined scores are fully tied at every grid alpha")
    return best_alpha, best_tau
