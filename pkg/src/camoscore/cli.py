"""Command line client for the camouflage scoring service.

Commands talk to the HTTP service; by default an in-process instance
handles the request, and --server targets a remote one started with
`camoscore serve`.  Exit codes are stable: 0 success, 1 I/O or format
problems, 2 degenerate inputs, 3 configuration mistakes.
"""
from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from .config import RunConfig
from .errors import CamoscoreError, FormatError
from .ranking import load_human_ranking
from .scoring import SCORE_KEYS

REQUEST_TIMEOUT = 3600.0


class ServiceClient:
    """Minimal JSON-over-HTTP client with an in-process default."""

    def __init__(self, server: str | None = None):
        self._server = server

    def request(self, method: str, path: str, payload: dict | None = None) -> dict:
        if self._server:
            with httpx.Client(base_url=self._server, timeout=REQUEST_TIMEOUT) as client:
                response = client.request(method, path, json=payload)
        else:
            response = asyncio.run(self._in_process(method, path, payload))
        if response.status_code != 200:
            _raise_service_error(response)
        return response.json()

    async def _in_process(self, method: str, path: str, payload: dict | None):
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://camoscore",
                                     timeout=REQUEST_TIMEOUT) as client:
            return await client.request(method, path, json=payload)


def _raise_service_error(response) -> None:
    try:
        payload = response.json()
    except ValueError:
        payload = {}
    body = payload.get("error") if isinstance(payload, dict) else None
    if body:
        err = CamoscoreError(body.get("message", "service error"))
        err.code = body.get("code", "error")
        err.exit_code = int(body.get("exit_code", 1))
        raise err
    raise CamoscoreError(f"service returned HTTP {response.status_code}")


def _load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def _config_options(fn):
    options = [
        click.option("--config", "config_file", type=click.Path(), default=None,
                     metavar="FILE", help="JSON file of config overrides."),
        click.option("--alpha", type=float, default=None,
                     help="Boundary weight in the combined score."),
        click.option("--lambda", "lam", type=float, default=None,
                     help="Relative reconstruction tolerance."),
        click.option("--threads", type=int, default=None,
                     help="Worker threads (default: logical cores)."),
        click.option("--seed", type=int, default=None,
                     help="Seed for randomized components."),
        click.option("--nn-method", type=click.Choice(["exact", "ann"]),
                     default=None, help="Patch nearest-neighbor backend."),
        click.option("--features", "extractor", default=None, metavar="SPEC",
                     help="Feature source: builtin or external:DIR."),
        click.option("--contours", default=None, metavar="SPEC",
                     help="Contour source: builtin or external:DIR."),
        click.option("--crop/--no-crop", "crop", default=None,
                     help="Crop to the local background before scoring."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(config_file, **flags) -> dict:
    """Merge config sources: flags > config file > defaults."""
    data: dict = {}
    if config_file:
        loaded = _load_json(config_file)
        if not isinstance(loaded, dict):
            raise FormatError(f"{config_file}: config must be a JSON object")
        data.update(loaded)
    for key, value in flags.items():
        if value is not None:
            data[key] = value
    RunConfig.from_dict(data)  # validate early, before any work
    return data


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--server", default=None, metavar="URL",
              help="Scoring service URL (default: in-process).")
@click.pass_context
def cli(ctx, server):
    """Camouflage effectiveness scores for images and video."""
    ctx.obj = ServiceClient(server)


@cli.command()
@click.argument("image", type=click.Path())
@click.argument("mask", type=click.Path())
@click.option("--example-id", default=None, help="Id recorded in the report.")
@click.option("--out", type=click.Path(), default=None, metavar="FILE",
              help="Also write the report JSON to a file.")
@_config_options
@click.pass_obj
def score(client, image, mask, example_id, out, config_file, **flags):
    """Score one image/mask pair; the report JSON goes to stdout."""
    payload = {
        "image": str(Path(image).resolve()),
        "mask": str(Path(mask).resolve()),
        "example_id": example_id,
        "config": _build_config(config_file, **flags),
    }
    report = client.request("POST", "/score", payload)
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@cli.command("score-dataset")
@click.argument("manifest", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default=".", metavar="DIR",
              help="Directory for report.json and report.csv.")
@click.option("--rank-by", type=click.Choice(list(SCORE_KEYS)), default=None,
              help="Also print a ranking by this score.")
@click.option("--top", type=int, default=None, help="Show only the best N.")
@click.option("--bottom", type=int, default=None, help="Show only the worst N.")
@click.option("--sheet", type=click.Path(), default=None, metavar="PNG",
              help="Write a contact sheet of the ranked examples.")
@_config_options
@click.pass_obj
def score_dataset(client, manifest, out_dir, rank_by, top, bottom, sheet,
                  config_file, **flags):
    """Score a manifest of examples and write report files."""
    payload = {
        "manifest": str(Path(manifest).resolve()),
        "config": _build_config(config_file, **flags),
    }
    response = client.request("POST", "/score-dataset", payload)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    (out_path / "report.json").write_text(
        json.dumps(response["report"], indent=2) + "\n", encoding="utf-8")
    (out_path / "report.csv").write_text(response["csv"], encoding="utf-8")
    click.echo(response["table"])
    n_failed = response["report"]["summary"]["n_failed"]
    if n_failed:
        click.echo(f"{n_failed} example(s) failed; see failures in report.json",
                   err=True)
    click.echo(f"wrote {out_path / 'report.json'} and {out_path / 'report.csv'}")
    if rank_by:
        ranking = client.request("POST", "/rank",
                                 {"report": response["report"], "key": rank_by})
        _echo_ranking(ranking, top, bottom)
        if sheet:
            _write_contact_sheet(Path(manifest), ranking, top or 5, bottom or 5,
                                 Path(sheet))
            click.echo(f"wrote {sheet}")


def _echo_ranking(ranking: dict, top: int | None, bottom: int | None) -> None:
    rows = ranking["rows"]
    chosen = []
    if top is None and bottom is None:
        chosen = rows
    else:
        if top:
            chosen.extend(rows[:top])
        if bottom:
            tail = rows[max(len(rows) - bottom, top or 0):]
            chosen.extend(tail)
    click.echo(f"rank by {ranking['key']}:")
    for row in chosen:
        group = f"  ({row['group']})" if row.get("group") else ""
        click.echo(f"{row['rank']:>5}  {row['value']:.6f}  {row['example_id']}{group}")


def _write_contact_sheet(manifest_path: Path, ranking: dict, top: int,
                         bottom: int, out: Path) -> None:
    """Thumbnails of the best and worst ranked examples, labelled by id."""
    from PIL import Image, ImageDraw

    from .scoring import load_manifest

    manifest = load_manifest(manifest_path)
    paths = {ex.example_id: ex.image for ex in manifest.examples}
    rows = ranking["rows"]
    picks = [("best", rows[:top]), ("worst", rows[-bottom:])]
    cell, pad, label_h = 96, 8, 22
    columns = max(len(r) for _, r in picks)
    width = pad + columns * (cell + pad)
    height = pad + len(picks) * (cell + label_h + pad)
    canvas = Image.new("RGB", (width, height), "white")
    draw = ImageDraw.Draw(canvas)
    for row_idx, (_, chosen) in enumerate(picks):
        y = pad + row_idx * (cell + label_h + pad)
        for col_idx, entry in enumerate(chosen):
            x = pad + col_idx * (cell + pad)
            thumb = Image.open(paths[entry["example_id"]]).convert("RGB")
            thumb.thumbnail((cell, cell))
            canvas.paste(thumb, (x, y))
            draw.text((x, y + cell + 2),
                      f"{entry['example_id']} {entry['value']:.3f}",
                      fill="black")
    canvas.save(out)


@cli.command()
@click.argument("report", type=click.Path())
@click.option("--key", type=click.Choice(list(SCORE_KEYS)), default="s_alpha",
              help="Score to rank by.")
@click.option("--top", type=int, default=None, help="Show only the best N.")
@click.option("--bottom", type=int, default=None, help="Show only the worst N.")
@click.pass_obj
def rank(client, report, key, top, bottom):
    """Rank the examples of a dataset report."""
    ranking = client.request("POST", "/rank",
                             {"report": _load_json(report), "key": key})
    _echo_ranking(ranking, top, bottom)


def _human_payload(human_file: str) -> dict:
    human = load_human_ranking(human_file)
    return {"values": dict(human.values), "kind": human.kind}


@cli.command("compare-human")
@click.argument("report", type=click.Path())
@click.argument("human_file", type=click.Path())
@click.option("--variant", type=click.Choice(["a", "b"]), default="b",
              help="Kendall tau variant.")
@click.option("--calibrate", is_flag=True, default=False,
              help="Also grid-search the alpha that best matches.")
@click.pass_obj
def compare_human(client, report, human_file, variant, calibrate):
    """Kendall tau of each score against a human ranking file."""
    payload = {
        "report": _load_json(report),
        "human": _human_payload(human_file),
        "variant": variant,
        "calibrate": calibrate,
    }
    response = client.request("POST", "/compare-human", payload)
    click.echo(f"kendall tau-{response['variant']} vs human (n={response['n']})")
    for key in SCORE_KEYS:
        tau = response["taus"].get(key)
        shown = "-" if tau is None else f"{tau:+.4f}"
        click.echo(f"  {key:<8} {shown}")
    if response.get("calibration"):
        cal = response["calibration"]
        click.echo(f"calibrated alpha {cal['alpha']:.2f} (tau {cal['tau']:+.4f})")


@cli.command("calibrate-alpha")
@click.argument("report", type=click.Path())
@click.argument("human_file", type=click.Path())
@click.option("--variant", type=click.Choice(["a", "b"]), default="b",
              help="Kendall tau variant.")
@click.pass_obj
def calibrate_alpha_cmd(client, report, human_file, variant):
    """Grid-search the alpha whose combined score best matches humans."""
    payload = {
        "report": _load_json(report),
        "human": _human_payload(human_file),
        "variant": variant,
    }
    response = client.request("POST", "/calibrate-alpha", payload)
    click.echo(json.dumps(response, indent=2))


@cli.command("synth-video")
@click.argument("image", type=click.Path())
@click.argument("mask", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), required=True, metavar="DIR",
              help="Output directory for the dataset.")
@click.option("--count", type=int, default=1000, show_default=True,
              help="Number of sequences.")
@click.option("--length", type=int, default=30, show_default=True,
              help="Frames per sequence.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-step", type=int, default=3, show_default=True,
              help="Largest per-frame displacement.")
@click.option("--plates", default="builtin", metavar="SPEC", show_default=True,
              help="Background plates: builtin or external:DIR.")
@click.option("--dataset-id", default="synthetic-video", show_default=True)
@click.option("--threads", type=int, default=None)
@click.pass_obj
def synth_video(client, image, mask, out_dir, count, length, seed, max_step,
                plates, dataset_id, threads):
    """Generate camouflage video sequences from one image/mask pair."""
    payload = {
        "image": str(Path(image).resolve()),
        "mask": str(Path(mask).resolve()),
        "out_dir": str(Path(out_dir).resolve()),
        "count": count,
        "length": length,
        "seed": seed,
        "max_step": max_step,
        "plates": plates,
        "dataset_id": dataset_id,
        "config": {"threads": threads} if threads is not None else {},
    }
    response = client.request("POST", "/synth-video", payload)
    click.echo(f"wrote {response['count']} sequences of {response['length']} frames")
    click.echo(response["manifest"])


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the scoring service over HTTP."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 3
    except click.ClickException as exc:
        exc.show()
        return 3
    except CamoscoreError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
