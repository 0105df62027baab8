"""Request and response models for the scoring service.

Score endpoints take server-visible file paths (images stay on disk);
ranking endpoints take report payloads inline, so a remote client can
post a report it holds locally.  Partial config dicts overlay the
defaults field by field.
"""
from __future__ import annotations

from pydantic import BaseModel, Field


class ScoreRequest(BaseModel):
    image: str
    mask: str
    example_id: str | None = None
    config: dict = Field(default_factory=dict)


class ScoreDatasetRequest(BaseModel):
    manifest: str
    config: dict = Field(default_factory=dict)


class ScoreDatasetResponse(BaseModel):
    report: dict
    csv: str
    table: str


class RankRequest(BaseModel):
    report: dict
    key: str = "s_alpha"


class RankRow(BaseModel):
    rank: int
    example_id: str
    group: str | None = None
    value: float


class RankResponse(BaseModel):
    key: str
    rows: list[RankRow]


class HumanPayload(BaseModel):
    values: dict[str, float]
    kind: str = "score"


class CompareHumanRequest(BaseModel):
    report: dict
    human: HumanPayload
    variant: str = "b"
    calibrate: bool = False


class Calibration(BaseModel):
    alpha: float
    tau: float


class CompareHumanResponse(BaseModel):
    n: int
    variant: str
    taus: dict[str, float | None]
    calibration: Calibration | None = None


class CalibrateAlphaRequest(BaseModel):
    report: dict
    human: HumanPayload
    grid: list[float] | None = None
    variant: str = "b"


class SynthVideoRequest(BaseModel):
    image: str
    mask: str
    out_dir: str
    count: int = 1000
    length: int = 30
    seed: int = 0
    max_step: int = 3
    plates: str = "builtin"
    dataset_id: str = "synthetic-video"
    config: dict = Field(default_factory=dict)


class SynthVideoResponse(BaseModel):
    manifest: str
    count: int
    length: int


class ErrorBody(BaseModel):
    code: str
    message: str
    exit_code: int


class ErrorResponse(BaseModel):
    error: ErrorBody
