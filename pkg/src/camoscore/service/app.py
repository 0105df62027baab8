"""FastAPI application exposing the scoring pipeline.

Deliberate failures surface as HTTP 400 with a JSON error body that
carries the library's stable error code plus the exit code a CLI
should use: 1 for I/O and format problems, 2 for degenerate inputs,
3 for configuration mistakes.
"""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import imaging, synth
from ..config import RunConfig
from ..errors import (
    CamoscoreError,
    DegenerateInputError,
    IdMismatchError,
    ParameterError,
)
from ..ranking import (
    ALPHA_GRID,
    HumanRanking,
    calibrate_alpha,
    kendall_tau_ids,
    rank_reports,
)
from ..scoring import (
    SCORE_KEYS,
    DatasetReport,
    load_manifest,
    report_csv,
    score_dataset,
    score_pair,
    summary_table,
)
from . import schemas

SERVICE_VERSION = "0.1.0"


def _config(data: dict) -> RunConfig:
    return RunConfig.from_dict(data or {})


def _report_from_payload(data: dict) -> DatasetReport:
    return DatasetReport.from_dict(data)


def _check_ids(reports, human: HumanRanking) -> None:
    report_ids = {r.example_id for r in reports}
    human_ids = set(human.values)
    if report_ids != human_ids:
        extra = sorted(human_ids - report_ids)
        missing = sorted(report_ids - human_ids)
        raise IdMismatchError(
            f"report and human ids differ; only in human file: {extra}, "
            f"only in report: {missing}"
        )


def _tau_table(reports, human: HumanRanking, variant: str) -> dict:
    """Kendall tau of each score column against the human values.

    Examples whose value for a column is missing (d2 on a degenerate
    region) are dropped from that column; a column with fewer than two
    remaining values reports None.
    """
    taus: dict = {}
    for key in SCORE_KEYS:
        values = {r.example_id: getattr(r, key) for r in reports
                  if getattr(r, key) is not None}
        if len(values) < 2:
            taus[key] = None
            continue
        subset = {i: human.values[i] for i in values}
        try:
            taus[key] = kendall_tau_ids(values, subset, variant=variant)
        except DegenerateInputError:
            taus[key] = None
    return taus


def create_app() -> FastAPI:
    app = FastAPI(title="camoscore", version=SERVICE_VERSION)

    @app.exception_handler(CamoscoreError)
    async def _camoscore_error(request, exc: CamoscoreError):
        return JSONResponse(status_code=400, content={"error": {
            "code": exc.code, "message": str(exc), "exit_code": exc.exit_code,
        }})

    @app.exception_handler(OSError)
    async def _os_error(request, exc: OSError):
        return JSONResponse(status_code=400, content={"error": {
            "code": "io", "message": str(exc), "exit_code": 1,
        }})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": SERVICE_VERSION}

    @app.get("/config")
    def default_config() -> dict:
        cfg = RunConfig()
        return {"config": cfg.to_dict(), "config_hash": cfg.config_hash()}

    @app.post("/score")
    def score(req: schemas.ScoreRequest) -> dict:
        cfg = _config(req.config)
        report = score_pair(req.image, req.mask, cfg, example_id=req.example_id)
        return report.to_dict()

    @app.post("/score-dataset")
    def score_dataset_route(req: schemas.ScoreDatasetRequest) -> schemas.ScoreDatasetResponse:
        cfg = _config(req.config)
        manifest = load_manifest(req.manifest)
        report = score_dataset(manifest, cfg)
        return schemas.ScoreDatasetResponse(
            report=report.to_dict(),
            csv=report_csv(report),
            table=summary_table([report]),
        )

    @app.post("/rank")
    def rank(req: schemas.RankRequest) -> schemas.RankResponse:
        report = _report_from_payload(req.report)
        ordered = rank_reports(report.per_example, key=req.key)
        rows = [
            schemas.RankRow(rank=i + 1, example_id=r.example_id,
                            group=r.group, value=float(getattr(r, req.key)))
            for i, r in enumerate(ordered)
        ]
        return schemas.RankResponse(key=req.key, rows=rows)

    @app.post("/compare-human")
    def compare_human(req: schemas.CompareHumanRequest) -> schemas.CompareHumanResponse:
        report = _report_from_payload(req.report)
        human = HumanRanking(values=dict(req.human.values), kind=req.human.kind)
        _check_ids(report.per_example, human)
        taus = _tau_table(report.per_example, human, req.variant)
        calibration = None
        if req.calibrate:
            alpha, tau = calibrate_alpha(report.per_example, human,
                                         variant=req.variant)
            calibration = schemas.Calibration(alpha=alpha, tau=tau)
        return schemas.CompareHumanResponse(
            n=len(report.per_example), variant=req.variant, taus=taus,
            calibration=calibration,
        )

    @app.post("/calibrate-alpha")
    def calibrate(req: schemas.CalibrateAlphaRequest) -> schemas.Calibration:
        report = _report_from_payload(req.report)
        human = HumanRanking(values=dict(req.human.values), kind=req.human.kind)
        grid = tuple(req.grid) if req.grid is not None else ALPHA_GRID
        alpha, tau = calibrate_alpha(report.per_example, human, grid=grid,
                                     variant=req.variant)
        return schemas.Calibration(alpha=alpha, tau=tau)

    @app.post("/synth-video")
    def synth_video(req: schemas.SynthVideoRequest) -> schemas.SynthVideoResponse:
        cfg = _config(req.config)
        image = imaging.load_image(req.image)
        mask = imaging.load_mask(req.mask)
        plate = None
        plate_source = None
        if req.plates != "builtin":
            prefix = "external:"
            if not req.plates.startswith(prefix):
                raise ParameterError(
                    f"plates must be 'builtin' or 'external:<dir>', got {req.plates!r}")
            plate_dir = Path(req.plates[len(prefix):])
            plate_path = plate_dir / synth.plate_sidecar(req.image).name
            plate = imaging.load_image(plate_path)
            plate_source = f"external:{plate_path.name}"
        manifest = synth.emit_dataset(
            image, mask, req.out_dir, count=req.count, length=req.length,
            seed=req.seed, max_step=req.max_step, plate=plate,
            dataset_id=req.dataset_id, sprite_source=Path(req.image).name,
            plate_source=plate_source, threads=cfg.resolved_threads(),
        )
        return schemas.SynthVideoResponse(manifest=str(manifest),
                                          count=req.count, length=req.length)

    return app
