"""Camouflage effectiveness scoring for images and videos."""
import importlib.resources
import json

from .config import RunConfig
from .errors import (
    CamoscoreError,
    CannotFillError,
    ConvergenceError,
    DegenerateInputError,
    DegenerateRegionError,
    FormatError,
    IdMismatchError,
    InsufficientBackgroundError,
    ManifestError,
    ParameterError,
    ShapeError,
)
from .ranking import (
    HumanRanking,
    calibrate_alpha,
    kendall_tau,
    kendall_tau_ids,
    load_human_ranking,
    rank_reports,
)
from .scoring import (
    DatasetReport,
    ScoreReport,
    combined_score,
    load_dataset_report,
    load_manifest,
    score_dataset,
    score_example,
    score_pair,
)
from .synth import SequenceSpec, Sprite, emit_dataset, synthesize_sequence

__version__ = "0.1.0"


def load_schema(name: str) -> dict:
    """Load one of the JSON schemas shipped with the package.

    Names: score_report, dataset_report, sequence_spec.
    """
    resource = importlib.resources.files(__name__) / "schemas" / f"{name}.schema.json"
    return json.loads(resource.read_text(encoding="utf-8"))


__all__ = [
    "CamoscoreError",
    "CannotFillError",
    "ConvergenceError",
    "DatasetReport",
    "DegenerateInputError",
    "DegenerateRegionError",
    "FormatError",
    "HumanRanking",
    "IdMismatchError",
    "InsufficientBackgroundError",
    "ManifestError",
    "ParameterError",
    "RunConfig",
    "ScoreReport",
    "SequenceSpec",
    "ShapeError",
    "Sprite",
    "calibrate_alpha",
    "combined_score",
    "emit_dataset",
    "kendall_tau",
    "kendall_tau_ids",
    "load_dataset_report",
    "load_human_ranking",
    "load_manifest",
    "load_schema",
    "rank_reports",
    "score_dataset",
    "score_example",
    "score_pair",
    "synthesize_sequence",
    "__version__",
]
