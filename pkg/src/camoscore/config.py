"""Run configuration: one frozen dataclass threaded through the pipeline."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .errors import ParameterError

THREADS_ENV = "CAMOSCORE_THREADS"


@dataclass(frozen=True)
class RunConfig:
    """All tunable knobs of the scoring pipeline with their defaults.

    The defaults reproduce the reference behaviour: alpha 0.35 blend,
    0.2 relative reconstruction tolerance, 7x7 patches on a stride-4
    grid, trimap kernels searched over odd sizes up to 21, and the
    built-in feature extractor and contour detector.
    """

    alpha: float = 0.35
    lam: float = 0.2              # relative RGB tolerance for reconstruction hits
    patch_side: int = 7
    stride: int = 4               # foreground grid stride (patch_side - overlap)
    bg_stride: int = 1            # background index stride (dense by default)
    kernel_max: int = 21          # odd trimap kernels scanned in [1, kernel_max]
    erode_target: float = 0.8     # erosion aims at this fraction of mask area
    dilate_target: float = 1.2    # dilation aims at this multiple of mask area
    crop: bool = True
    crop_margin: float = 0.5      # bbox expansion per side before scoring
    nn_method: str = "exact"      # "exact" or "kdtree"
    ann_trees: int = 4
    ann_checks: int = 64          # leaf budget for the approximate search
    edge_high: float = 0.2
    edge_low: float = 0.08
    contour_threshold: float = 0.5
    match_tolerance: int = 3      # dilation kernel for contour matching, 1 disables
    feature_stride: int = 2
    feature_window: int = 5
    sqrt_iterations: int = 100
    extractor: str = "builtin"    # "builtin" or "external:<dir>"
    contours: str = "builtin"     # "builtin" or "external:<dir>"
    threads: int = 0              # 0 resolves to CAMOSCORE_THREADS or cpu count
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lam <= 0.0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if self.patch_side < 1 or self.patch_side % 2 == 0:
            raise ParameterError(f"patch_side must be odd and >= 1, got {self.patch_side}")
        if self.stride < 1 or self.bg_stride < 1:
            raise ParameterError("strides must be >= 1")
        if self.kernel_max < 1 or self.kernel_max % 2 == 0:
            raise ParameterError(f"kernel_max must be odd and >= 1, got {self.kernel_max}")
        if self.nn_method not in ("exact", "kdtree"):
            raise ParameterError(f"unknown nn_method {self.nn_method!r}")
        if not 0.0 <= self.edge_low <= self.edge_high <= 1.0:
            raise ParameterError("edge thresholds must satisfy 0 <= low <= high <= 1")
        if self.match_tolerance < 1 or self.match_tolerance % 2 == 0:
            raise ParameterError("match_tolerance must be an odd kernel size")
        for field, label in ((self.extractor, "extractor"), (self.contours, "contours")):
            if field != "builtin" and not field.startswith("external:"):
                raise ParameterError(f"{label} must be 'builtin' or 'external:<dir>'")
        if self.threads < 0:
            raise ParameterError("threads must be >= 0")

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        """Stable short hash recorded in every report for provenance.

        Covers every score-determining field; the thread count only
        changes how work is scheduled, so it is left out.
        """
        fields = {k: v for k, v in self.to_dict().items() if k != "threads"}
        blob = json.dumps(fields, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get(THREADS_ENV, "").strip()
        if env:
            try:
                parsed = int(env)
            except ValueError:
                raise ParameterError(f"{THREADS_ENV} must be an integer, got {env!r}")
            if parsed < 1:
                raise ParameterError(f"{THREADS_ENV} must be >= 1, got {parsed}")
            return parsed
        return os.cpu_count() or 1
