"""Score aggregation: the per-example pipeline, dataset runs, and reports.

A single example flows crop -> trimap -> reconstruction -> boundary ->
features -> Frechet, and the two bounded scores fold into the convex
combination s_alpha.  Dataset runs fan examples over a thread pool and
aggregate by dataset kind: flat mean for image sets, per-group means
first (then the mean of group means) for video and multiview sets.
"""
from __future__ import annotations

import csv
import io
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import boundary, features, frechet, imaging, reconstruction
from .config import RunConfig
from .errors import (
    CamoscoreError,
    DegenerateInputError,
    DegenerateRegionError,
    FormatError,
    ManifestError,
    ParameterError,
    ShapeError,
)

MANIFEST_KINDS = ("image", "video", "multiview")
SCORE_KEYS = ("s_rf", "s_b", "s_alpha", "d2")
CSV_COLUMNS = ("example_id", "group", "s_rf", "s_b", "s_alpha", "d2", "warnings")


def combined_score(s_rf: float, s_b: float, alpha: float = 0.35) -> float:
    """Convex combination of the reconstruction and boundary scores."""
    for name, value in (("s_rf", s_rf), ("s_b", s_b), ("alpha", alpha)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    return (1.0 - alpha) * s_rf + alpha * s_b


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreReport:
    """Everything one scored example reports back."""

    example_id: str
    s_rf: float
    s_b: float
    s_alpha: float
    d2: float | None
    warnings: tuple = ()
    crop: imaging.CropBox | None = None
    kernels: tuple = (1, 1)
    config_hash: str = ""
    extractor_id: str = features.BUILTIN_ID
    contour_source: str = "builtin"
    group: str | None = None

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "group": self.group,
            "s_rf": self.s_rf,
            "s_b": self.s_b,
            "s_alpha": self.s_alpha,
            "d2": self.d2,
            "warnings": list(self.warnings),
            "crop": list(self.crop.as_tuple()) if self.crop is not None else None,
            "kernels": list(self.kernels),
            "config_hash": self.config_hash,
            "extractor_id": self.extractor_id,
            "contour_source": self.contour_source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreReport":
        try:
            crop = data.get("crop")
            return cls(
                example_id=data["example_id"],
                s_rf=data["s_rf"],
                s_b=data["s_b"],
                s_alpha=data["s_alpha"],
                d2=data.get("d2"),
                warnings=tuple(data.get("warnings", ())),
                crop=imaging.CropBox(*crop) if crop is not None else None,
                kernels=tuple(data.get("kernels", (1, 1))),
                config_hash=data.get("config_hash", ""),
                extractor_id=data.get("extractor_id", features.BUILTIN_ID),
                contour_source=data.get("contour_source", "builtin"),
                group=data.get("group"),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed score report entry: {exc}") from None


@dataclass(frozen=True)
class DatasetReport:
    """Per-example reports plus group and dataset level aggregates."""

    dataset_id: str
    kind: str
    per_example: tuple
    per_group: dict
    summary: dict
    failures: tuple = ()
    config: dict | None = None

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "kind": self.kind,
            "summary": dict(self.summary),
            "per_group": {g: dict(v) for g, v in self.per_group.items()},
            "per_example": [r.to_dict() for r in self.per_example],
            "failures": [dict(f) for f in self.failures],
            "config": dict(self.config) if self.config is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetReport":
        try:
            return cls(
                dataset_id=data["dataset_id"],
                kind=data["kind"],
                per_example=tuple(ScoreReport.from_dict(e) for e in data["per_example"]),
                per_group=dict(data.get("per_group", {})),
                summary=dict(data["summary"]),
                failures=tuple(data.get("failures", ())),
                config=data.get("config"),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed dataset report: {exc}") from None


def load_dataset_report(path: str | Path) -> DatasetReport:
    """Read a dataset report back from its JSON emission."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return DatasetReport.from_dict(data)


# ---------------------------------------------------------------------------
# single example pipeline
# ---------------------------------------------------------------------------

def score_example(
    image: np.ndarray,
    mask: np.ndarray,
    config: RunConfig | None = None,
    example_id: str = "example",
    feature_map: features.FeatureMap | None = None,
    contour_map: boundary.ContourMap | None = None,
    group: str | None = None,
) -> ScoreReport:
    """Score one image/mask pair end to end.

    feature_map and contour_map, when given, are externally computed
    maps covering the full (uncropped) frame; otherwise the builtin
    extractor and edge detector run on the cropped frame.
    """
    cfg = config if config is not None else RunConfig()
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    image = imaging.check_image(image)
    mask = np.asarray(mask)
    if mask.dtype != bool:
        mask = imaging.binarize(mask)
    if mask.shape != image.shape[:2]:
        raise ShapeError(
            f"mask shape {mask.shape} does not match image {image.shape[:2]}"
        )
    if not mask.any():
        raise DegenerateInputError(f"{example_id}: mask selects no pixels")

    warnings: list[str] = []
    if cfg.crop:
        box = imaging.crop_box_for(mask, cfg.crop_margin)
    else:
        box = imaging.CropBox(0, 0, mask.shape[1], mask.shape[0])
    img_c = box.apply(image)
    mask_c = box.apply(mask)

    trimap = imaging.make_trimap(
        mask_c,
        erode_target=cfg.erode_target,
        dilate_target=cfg.dilate_target,
        kernel_max=cfg.kernel_max,
    )
    if trimap.degenerate_background:
        warnings.append("degenerate-background: no clean background inside the crop")

    recon = reconstruction.reconstruction_score(
        img_c,
        trimap,
        patch_side=cfg.patch_side,
        stride=cfg.stride,
        bg_stride=cfg.bg_stride,
        lam=cfg.lam,
        method=cfg.nn_method,
        ann_trees=cfg.ann_trees,
        ann_checks=cfg.ann_checks,
        seed=cfg.seed,
    )
    warnings.extend(recon.warnings)

    cropped_contours = None
    if contour_map is not None:
        if contour_map.plane.shape != mask.shape:
            raise ShapeError(
                f"contour map shape {contour_map.plane.shape} does not match "
                f"the full frame {mask.shape}"
            )
        cropped_contours = boundary.ContourMap(
            plane=box.apply(contour_map.plane), source=contour_map.source
        )
    bres = boundary.boundary_score(
        img_c,
        mask_c,
        trimap,
        contour_map=cropped_contours,
        high=cfg.edge_high,
        low=cfg.edge_low,
        tolerance=cfg.match_tolerance,
        threshold=cfg.contour_threshold,
    )

    if feature_map is not None:
        # external maps describe the full frame, so the cropped regions
        # are embedded back at the crop offset before cell selection
        fm = feature_map
        fg_region = np.zeros(mask.shape, dtype=bool)
        bg_region = np.zeros(mask.shape, dtype=bool)
        fg_region[box.y0:box.y1, box.x0:box.x1] = trimap.fg
        bg_region[box.y0:box.y1, box.x0:box.x1] = trimap.bg
    else:
        fm = features.extract_features(
            img_c, stride=cfg.feature_stride, window=cfg.feature_window
        )
        fg_region, bg_region = trimap.fg, trimap.bg

    d2 = None
    try:
        st_fg = frechet.region_stats(fm, fg_region)
        st_bg = frechet.region_stats(fm, bg_region)
        for st, label in ((st_fg, "fg"), (st_bg, "bg")):
            note = frechet.few_sample_warning(st, label)
            if note:
                warnings.append(note)
        fres = frechet.frechet_distance(st_fg, st_bg, iterations=cfg.sqrt_iterations)
        warnings.extend(fres.warnings)
        d2 = float(fres.d2)
    except DegenerateRegionError as exc:
        warnings.append(f"frechet-skipped: {exc}")

    return ScoreReport(
        example_id=example_id,
        s_rf=float(recon.s_rf),
        s_b=float(bres.s_b),
        s_alpha=float(combined_score(recon.s_rf, bres.s_b, cfg.alpha)),
        d2=d2,
        warnings=tuple(warnings),
        crop=box,
        kernels=(trimap.erode_kernel, trimap.dilate_kernel),
        config_hash=cfg.config_hash(),
        extractor_id=fm.extractor_id,
        contour_source=bres.contour_source,
        group=group,
    )


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestExample:
    example_id: str
    image: Path
    mask: Path
    group: str | None = None


@dataclass(frozen=True)
class Manifest:
    dataset_id: str
    kind: str
    examples: tuple


def load_manifest(path: str | Path) -> Manifest:
    """Parse a dataset manifest, resolving paths relative to its directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    for key in ("dataset_id", "kind", "examples"):
        if key not in data:
            raise ManifestError(f"{path}: manifest lacks {key!r}")
    kind = data["kind"]
    if kind not in MANIFEST_KINDS:
        raise ManifestError(
            f"{path}: kind must be one of {', '.join(MANIFEST_KINDS)}, got {kind!r}"
        )
    entries = data["examples"]
    if not isinstance(entries, list) or not entries:
        raise ManifestError(f"{path}: manifest lists no examples")

    base = path.parent
    seen: set = set()
    examples = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ManifestError(f"{path}: example #{i} is not an object")
        for key in ("id", "image", "mask"):
            if not isinstance(entry.get(key), str) or not entry.get(key):
                raise ManifestError(f"{path}: example #{i} lacks a string {key!r}")
        ident = entry["id"]
        if ident in seen:
            raise ManifestError(f"{path}: duplicate example id {ident!r}")
        seen.add(ident)
        group = entry.get("group")
        if group is not None and not isinstance(group, str):
            raise ManifestError(f"{path}: example {ident!r} group must be a string")
        if kind != "image" and group is None:
            raise ManifestError(
                f"{path}: example {ident!r} needs a group for kind {kind!r}"
            )
        examples.append(ManifestExample(
            example_id=ident,
            image=base / entry["image"],
            mask=base / entry["mask"],
            group=group,
        ))
    return Manifest(dataset_id=data["dataset_id"], kind=kind, examples=tuple(examples))


def _external_dir(value: str, label: str) -> Path | None:
    if value == "builtin":
        return None
    if value.startswith("external:"):
        return Path(value[len("external:"):])
    raise ParameterError(f"{label} must be 'builtin' or 'external:<dir>', got {value!r}")


def sidecar_paths(example: ManifestExample, config: RunConfig) -> tuple[Path | None, Path | None]:
    """Feature and contour sidecar paths an example resolves to, if external."""
    feat_dir = _external_dir(config.extractor, "extractor")
    cont_dir = _external_dir(config.contours, "contours")
    feat = feat_dir / features.feature_sidecar(example.image).name if feat_dir else None
    cont = cont_dir / boundary.contour_sidecar(example.image).name if cont_dir else None
    return feat, cont


def score_pair(
    image_path: str | Path,
    mask_path: str | Path,
    config: RunConfig | None = None,
    example_id: str | None = None,
    group: str | None = None,
) -> ScoreReport:
    """Score one image/mask pair from disk, loading any external sidecars."""
    cfg = config or RunConfig()
    image_path = Path(image_path)
    mask_path = Path(mask_path)
    if example_id is None:
        example_id = image_path.stem
    example = ManifestExample(example_id=example_id, image=image_path,
                              mask=mask_path, group=group)
    feat, cont = sidecar_paths(example, cfg)
    missing = [str(p) for p in (image_path, mask_path, feat, cont)
               if p is not None and not p.is_file()]
    if missing:
        raise FormatError("missing input files: " + ", ".join(missing))
    image = imaging.load_image(image_path)
    mask = imaging.load_mask(mask_path)
    feature_map = features.read_feature_file(feat) if feat else None
    contour_map = boundary.load_contour_map(cont) if cont else None
    return score_example(image, mask, cfg, example_id=example_id,
                         feature_map=feature_map, contour_map=contour_map,
                         group=group)


# ---------------------------------------------------------------------------
# dataset runs
# ---------------------------------------------------------------------------

def _mean_or_none(values) -> float | None:
    # sorted before summing so the mean is invariant to input order
    vals = sorted(v for v in values if v is not None)
    return float(np.mean(vals)) if vals else None


def _aggregate(kind: str, scored: list) -> tuple[dict, dict]:
    """Group means and the dataset summary for one run."""
    per_group: dict = {}
    summary: dict = {}
    if kind == "image":
        for key in SCORE_KEYS:
            summary[key] = _mean_or_none(getattr(r, key) for r in scored)
        summary["n_groups"] = None
        return per_group, summary

    members: dict = {}
    for r in scored:
        members.setdefault(r.group, []).append(r)
    for g, rows in members.items():
        per_group[g] = {"n": len(rows)}
        for key in SCORE_KEYS:
            per_group[g][key] = _mean_or_none(getattr(r, key) for r in rows)
    for key in SCORE_KEYS:
        summary[key] = _mean_or_none(per_group[g][key] for g in per_group)
    summary["n_groups"] = len(per_group)
    return per_group, summary


def score_dataset(manifest: Manifest | str | Path, config: RunConfig | None = None) -> DatasetReport:
    """Score every manifest example and aggregate by the dataset kind.

    Examples are scored on a thread pool; per-example failures are
    collected (not raised) and excluded from the means.  Results follow
    manifest order regardless of scheduling.
    """
    cfg = config if config is not None else RunConfig()
    man = manifest if isinstance(manifest, Manifest) else load_manifest(manifest)

    missing = []
    per_example_sidecars = []
    for ex in man.examples:
        feat, cont = sidecar_paths(ex, cfg)
        per_example_sidecars.append((feat, cont))
        for p in (ex.image, ex.mask, feat, cont):
            if p is not None and not p.exists():
                missing.append(str(p))
    if missing:
        raise ManifestError(
            "missing files:\n  " + "\n  ".join(missing),
            details={"missing": missing},
        )

    dims_lock = threading.Lock()
    external_dims: dict = {}

    def run(ex: ManifestExample, feat: Path | None, cont: Path | None) -> ScoreReport:
        image = imaging.load_image(ex.image)
        mask = imaging.load_mask(ex.mask)
        fm = features.read_feature_file(feat) if feat is not None else None
        cm = boundary.load_contour_map(cont) if cont is not None else None
        if fm is not None:
            with dims_lock:
                external_dims.setdefault(fm.dim, ex.example_id)
        return score_example(
            image, mask, cfg,
            example_id=ex.example_id, feature_map=fm, contour_map=cm, group=ex.group,
        )

    results: list = [None] * len(man.examples)
    failures: list = []
    with ThreadPoolExecutor(max_workers=cfg.resolved_threads()) as pool:
        futures = [
            pool.submit(run, ex, feat, cont)
            for ex, (feat, cont) in zip(man.examples, per_example_sidecars)
        ]
        for i, (ex, fut) in enumerate(zip(man.examples, futures)):
            try:
                results[i] = fut.result()
            except CamoscoreError as exc:
                failures.append({
                    "example_id": ex.example_id,
                    "code": exc.code,
                    "error": str(exc),
                })
    if len(external_dims) > 1:
        listing = ", ".join(
            f"dim {d} ({external_dims[d]})" for d in sorted(external_dims)
        )
        raise FormatError(f"external feature dimensionality is inconsistent: {listing}")

    scored = [r for r in results if r is not None]
    per_group, summary = _aggregate(man.kind, scored)
    summary = {
        "n_examples": len(man.examples),
        "n_scored": len(scored),
        "n_failed": len(failures),
        **summary,
    }
    return DatasetReport(
        dataset_id=man.dataset_id,
        kind=man.kind,
        per_example=tuple(scored),
        per_group=per_group,
        summary=summary,
        failures=tuple(failures),
        config=cfg.to_dict(),
    )


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def report_csv(report: DatasetReport) -> str:
    """Flat CSV of the per-example scores."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.per_example:
        writer.writerow([
            r.example_id,
            _csv_cell(r.group),
            _csv_cell(r.s_rf),
            _csv_cell(r.s_b),
            _csv_cell(r.s_alpha),
            _csv_cell(r.d2),
            "; ".join(r.warnings),
        ])
    return out.getvalue()


def summary_table(reports) -> str:
    """Aligned per-dataset summary table (one row per dataset report)."""
    if isinstance(reports, DatasetReport):
        reports = [reports]
    header = ("dataset", "kind", "scored", "failed", "s_rf", "s_b", "s_alpha", "d2")
    rows = [header]
    for rep in reports:
        s = rep.summary
        fmt = lambda v: "-" if v is None else f"{v:.3f}"
        rows.append((
            rep.dataset_id,
            rep.kind,
            str(s["n_scored"]),
            str(s["n_failed"]),
            fmt(s["s_rf"]),
            fmt(s["s_b"]),
            fmt(s["s_alpha"]),
            fmt(s["d2"]),
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
