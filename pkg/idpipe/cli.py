"""The ``idpipe`` command group."""

from __future__ import annotations

import json
import logging
import os
import sys
import time
from dataclasses import replace
from typing import Any

import click
import yaml

from . import load_configuration
from .autocrop import DETAIL_MEASURES, crop_by_contours, crop_by_detail
from .cleanse import clean_background
from .deskew import DESKEW_METHODS, deskew_pipeline
from .errors import IdPipeError, SpecError
from .imageio import read_image, write_pgm
from .mrz import locate_mrz, parse_mrz
from .pipeline import PIPELINE_MODES, DocumentPipeline, PipelineConfig, timing_report
from .raster import crop
from .store import RecordStore
from .synthcard import CardSpec, glyph_reader_for, render_card
from .textseg import TEXT_SOURCES, contour_char_boxes, detect_text_external, mser_regions, vote_merge

app_logger = logging.getLogger("idpipe")


def _emit(report: str, payload: Any) -> None:
    if report == "json":
        click.echo(json.dumps(payload, sort_keys=True))
    elif isinstance(payload, dict):
        for key, value in payload.items():
            click.echo(f"{key}: {value}")


def _ms(start: float) -> float:
    return round((time.perf_counter() - start) * 1000.0, 3)


report_option = click.option(
    "--report", type=click.Choice(["json", "text"]), default="json", show_default=True
)


class IdPipeGroup(click.Group):
    """Turns pipeline errors into a one-line message and exit status 1."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except IdPipeError as e:
            raise click.ClickException(str(e)) from e


@click.group(cls=IdPipeGroup)
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages.")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), help="YAML configuration file.")
@click.pass_context
def cli(ctx: click.Context, verbose: bool, config_file: str | None) -> None:
    """Pre-OCR processing of identity document images."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    ctx.ensure_object(dict)
    ctx.obj["config_file"] = config_file


def _config(ctx: click.Context, config_file: str | None = None) -> PipelineConfig:
    return load_configuration(app_logger, config_file or ctx.obj.get("config_file"))


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(DESKEW_METHODS), default="auto", show_default=True)
@report_option
def deskew(source: str, out: str, method: str, report: str) -> None:
    """Estimate the skew of SOURCE and write the corrected image."""
    start = time.perf_counter()
    rotated, estimate = deskew_pipeline(read_image(source), method)
    write_pgm(rotated, out)
    _emit(report, {**estimate.to_dict(), "ms": _ms(start)})


@cli.command("crop")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(["contour", "detail"]), default="contour", show_default=True)
@click.option("--measure", type=click.Choice(DETAIL_MEASURES), default="sobel", show_default=True)
@report_option
@click.pass_context
def crop_cmd(ctx: click.Context, source: str, out: str, method: str, measure: str, report: str) -> None:
    """Crop the card out of SOURCE."""
    img = read_image(source)
    if method == "contour":
        result = crop_by_contours(img, _config(ctx).layout)
    else:
        result = crop_by_detail(img, measure=measure)
    write_pgm(crop(img, result.box), out)
    _emit(report, result.to_dict())


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--passes", type=int, default=None, help="Override the configured number of passes.")
@report_option
@click.pass_context
def clean(ctx: click.Context, source: str, out: str, passes: int | None, report: str) -> None:
    """Whiten the background of SOURCE."""
    params = _config(ctx).clean
    if passes is not None:
        params = replace(params, passes=passes)
    start = time.perf_counter()
    write_pgm(clean_background(read_image(source), params), out)
    _emit(report, {"passes": params.passes, "ms": _ms(start)})


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--sources", default="mser,contour", show_default=True, help="Comma-separated text sources.")
@click.option("--text-detector-cmd", "text_cmd", default=None, help="External text detector command.")
@click.option("--min-votes", type=int, default=None)
@report_option
@click.pass_context
def segment(ctx: click.Context, source: str, sources: str, text_cmd: str | None, min_votes: int | None, report: str) -> None:
    """Vote text lines out of SOURCE."""
    cfg = _config(ctx)
    names = [s.strip() for s in sources.split(",") if s.strip()]
    unknown = [s for s in names if s not in TEXT_SOURCES]
    if unknown:
        raise click.BadParameter(f"unknown source(s): {', '.join(unknown)}", param_hint="--sources")
    img = read_image(source)
    proposals = []
    for name in names:
        if name == "mser":
            proposals.append(mser_regions(img, cfg.mser))
        elif name == "contour":
            proposals.append(contour_char_boxes(img, cfg.layout))
        else:
            command = text_cmd or cfg.text_adapter
            if not command:
                raise click.UsageError("The external source needs --text-detector-cmd or text_adapter.")
            proposals.append(detect_text_external(source, command, app_logger, cfg.adapter_timeout))
    lines = vote_merge(proposals, img.width, img.height, min_votes or cfg.vote_min)
    _emit(report, {"lines": [r.box.to_dict() for r in lines]})


@cli.command("mrz-parse")
@click.argument("lines", nargs=-1, required=True)
def mrz_parse(lines: tuple[str, ...]) -> None:
    """Parse MRZ LINES into a record."""
    click.echo(json.dumps(parse_mrz(list(lines)).to_dict(), sort_keys=True))


@cli.command("mrz-locate")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@report_option
@click.pass_context
def mrz_locate(ctx: click.Context, source: str, report: str) -> None:
    """Locate the MRZ band of a cropped card."""
    band = locate_mrz(read_image(source), _config(ctx).mrz)
    if report == "json":
        click.echo(json.dumps(band.to_dict() if band else None, sort_keys=True))
    else:
        _emit(report, band.to_dict() if band else {"band": None})


@cli.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Record store directory.")
@click.option("--mode", type=click.Choice(PIPELINE_MODES), default=None)
@click.option("--face-cmd", default=None, help="External face detector command.")
@click.option("--text-cmd", default=None, help="External text detector command.")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None)
@click.option("--emit-debug", is_flag=True, help="Write every stage's intermediate image.")
@click.option("--synthetic-reader", is_flag=True, help="Read MRZ glyphs with the bundled synthetic font.")
@click.pass_context
def process(
    ctx: click.Context,
    inputs: tuple[str, ...],
    out: str | None,
    mode: str | None,
    face_cmd: str | None,
    text_cmd: str | None,
    config_file: str | None,
    emit_debug: bool,
    synthetic_reader: bool,
) -> None:
    """Run the full pipeline over INPUTS and store one record each."""
    cfg = _config(ctx, config_file)
    overrides = {
        k: v
        for k, v in {"mode": mode, "face_adapter": face_cmd, "text_adapter": text_cmd, "store_dir": out}.items()
        if v is not None
    }
    cfg = replace(cfg, **overrides)
    debug_dir = os.path.join(cfg.store_dir, "debug") if emit_debug else None
    pipeline = DocumentPipeline(
        cfg, app_logger, glyph_reader=glyph_reader_for() if synthetic_reader else None, debug_dir=debug_dir
    )
    failures = 0
    for path in inputs:
        try:
            record = pipeline.process_document(path)
            pipeline.write_record(record)
        except IdPipeError as e:
            failures += 1
            app_logger.error(f"{path}: {e}")
            continue
        click.echo(json.dumps({"id": record.id, "source_path": path, "flags": sorted(record.flags)}, sort_keys=True))
    if failures:
        raise IdPipeError(f"{failures} of {len(inputs)} documents failed.")


def _load_specs(spec_file: str) -> list[tuple[str, CardSpec]]:
    try:
        with open(spec_file, "r") as f:
            raw = yaml.safe_load(f)
    except (IOError, yaml.YAMLError) as e:
        raise SpecError(f"Cannot read card spec file {spec_file}: {e}") from e
    entries = raw.get("cards", [raw]) if isinstance(raw, dict) else raw
    if not isinstance(entries, list) or not all(isinstance(e, dict) for e in entries):
        raise SpecError(f"{spec_file} must hold a card mapping or a 'cards' list of mappings.")
    return [(str(e.get("name", f"card{i:03d}")), CardSpec.from_dict(e)) for i, e in enumerate(entries)]


@cli.command()
@click.option("--spec", "spec_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def synth(spec_file: str, out: str) -> None:
    """Render synthetic cards with their ground truth."""
    for name, spec in _load_specs(spec_file):
        image, truth = render_card(spec)
        card_dir = os.path.join(out, name)
        write_pgm(image, os.path.join(card_dir, "image.pgm"))
        with open(os.path.join(card_dir, "truth.json"), "w") as f:
            json.dump(truth.to_json(), f, indent=2)
        app_logger.info(f"Rendered {name} ({image.width}x{image.height}) into {card_dir}")


@cli.command()
@click.argument("store_dir", type=click.Path(exists=True, file_okay=False))
@click.pass_context
def report(ctx: click.Context, store_dir: str) -> None:
    """Summarise the stage timings of a record store."""
    cfg = _config(ctx)
    records = list(RecordStore(store_dir, app_logger).read_records())
    click.echo(json.dumps(timing_report(records, cfg.realtime_budget_ms), indent=2, sort_keys=True))


def main() -> None:
    cli()
