"""End-to-end processing of one identity document image.

Stages run in a fixed order; each one is timed and, with a debug directory,
leaves its intermediate image behind as ``<debug>/<id>/<nn>_<stage>.pgm``::

    load -> deskew -> [detect_face -> orientation] -> autocrop
         -> [autocrop_detail] -> orientation_aspect -> fix_180 -> photo_id
         -> clean -> segment -> vote_merge -> mrz

Bracketed stages are conditional: face stages need a face adapter and the
detail crop only runs in offline mode. Data conditions (a missing MRZ,
failing check digits, an uncertain orientation) end up as record flags;
structural failures abort with a ``StageError`` naming the stage.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .autocrop import CropResult, LayoutConfig, crop_by_contours, crop_by_detail, fix_180, fix_orientation
from .cleanse import CleanParams, clean_background, sharpen
from .deskew import DESKEW_METHODS, AngleEstimate, deskew_pipeline
from .errors import (
    AdapterError,
    EmptyReportError,
    IdPipeError,
    MrzParseError,
    NoTextError,
    ParameterError,
    SizeError,
    StageError,
)
from .imageio import read_image, write_pgm
from .mrz import GlyphReader, MrzKernels, MrzRecord, band_center_fraction, extract_and_parse, locate_mrz, record_lines_valid
from .photoid import FaceBox, PhotoIdBox, detect_face_external, expand_face_box, mask_photo_region
from .raster import Box, GrayImage, RotationFrame, crop
from .store import RecordStore
from .textseg import MserParams, TextRegion, contour_char_boxes, detect_text_external, mser_regions, vote_merge

PIPELINE_MODES = ("realtime", "offline")
CROP_STAGE = "autocrop"
DETAIL_STAGE = "autocrop_detail"
CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_record_id() -> str:
    """ULID-style id: 48-bit millisecond timestamp and 80 random bits, Crockford base32."""
    value = (int(time.time() * 1000) << 80) | secrets.randbits(80)
    chars = []
    for _ in range(26):
        chars.append(CROCKFORD[value & 31])
        value >>= 5
    return "".join(reversed(chars))


@dataclass(frozen=True)
class StageTiming:
    stage: str
    elapsed_ms: float

    def to_dict(self) -> dict:
        return {"stage": self.stage, "ms": round(self.elapsed_ms, 3)}


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "realtime"
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    clean: CleanParams = field(default_factory=CleanParams)
    mser: MserParams = field(default_factory=MserParams)
    mrz: MrzKernels = field(default_factory=MrzKernels)
    face_adapter: str | None = None
    text_adapter: str | None = None
    adapter_timeout: float = 5.0
    vote_min: int = 2
    deskew_method: str = "auto"
    realtime_budget_ms: float = 700.0
    store_dir: str = "./records"

    def __post_init__(self) -> None:
        if self.mode not in PIPELINE_MODES:
            raise ParameterError(f"Unknown pipeline mode '{self.mode}'; expected realtime or offline.")
        if self.vote_min < 1:
            raise ParameterError(f"vote_min must be >= 1, got {self.vote_min}.")
        if self.deskew_method not in DESKEW_METHODS:
            raise ParameterError(f"Unknown deskew method '{self.deskew_method}'.")
        if self.adapter_timeout <= 0:
            raise ParameterError(f"adapter_timeout must be positive, got {self.adapter_timeout}.")

    @classmethod
    def from_dict(cls, config: Mapping[str, Any]) -> "PipelineConfig":
        """
        Builds a config from the parsed YAML mapping.

        Top-level keys mirror the fields; ``layout``, ``clean``, ``mser``
        and ``mrz`` are nested sections and ``store.store_dir`` sets the store.

        Raises:
            ParameterError: For unknown keys or invalid values.
        """
        sections = {"layout": LayoutConfig, "clean": CleanParams, "mser": MserParams}
        known = {f.name for f in fields(cls)}
        params: dict[str, Any] = {}
        try:
            for key, value in config.items():
                if key == "config_ver":
                    continue
                if key in sections:
                    params[key] = sections[key](**(value or {}))
                elif key == "mrz":
                    mrz = dict(value or {})
                    params["mrz"] = MrzKernels(
                        rect=tuple(mrz.pop("rect_kernel", MrzKernels.rect)),
                        square=tuple(mrz.pop("square_kernel", MrzKernels.square)),
                        **mrz,
                    )
                elif key == "store":
                    if value and "store_dir" in value:
                        params["store_dir"] = str(value["store_dir"])
                elif key in known:
                    if value is not None:
                        params[key] = value
                else:
                    raise ParameterError(f"Unknown configuration key '{key}'.")
            return cls(**params)
        except TypeError as e:
            raise ParameterError(f"Invalid configuration: {e}") from e


@dataclass
class DocumentRecord:
    id: str
    source_path: str
    mode: str
    crop_box: Box
    deskew: AngleEstimate
    timings: list[StageTiming]
    flags: set[str]
    photo_id: GrayImage = field(repr=False)
    mrz: MrzRecord | None = None
    face: GrayImage | None = field(default=None, repr=False)
    photo_id_box: Box | None = None
    rotated90: bool = False
    text_lines: list[TextRegion] = field(default_factory=list, repr=False)
    detail_crop: CropResult | None = None

    @property
    def stages(self) -> list[str]:
        return [t.stage for t in self.timings]

    @property
    def rotation(self) -> float:
        """Total in-plane correction: deskew plus quarter and half turns, in (-180, 180]."""
        total = self.deskew.angle
        if self.rotated90:
            total -= 90.0
        if "flipped_180" in self.flags:
            total += 180.0
        total = (total + 180.0) % 360.0 - 180.0
        return 180.0 if total == -180.0 else total

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_path": self.source_path,
            "mode": self.mode,
            "mrz": self.mrz.to_dict() if self.mrz else None,
            "crop_box": self.crop_box.to_dict(),
            "photo_id_box": self.photo_id_box.to_dict() if self.photo_id_box else None,
            "deskew": self.deskew.to_dict(),
            "rotation": round(self.rotation, 4),
            "timings": [t.to_dict() for t in self.timings],
            "flags": sorted(self.flags),
            "text_lines": [r.box.to_dict() for r in self.text_lines],
            "detail_crop": self.detail_crop.to_dict() if self.detail_crop else None,
            "face_blob": None,
        }

    def blobs(self) -> dict[str, GrayImage]:
        out = {"photo_id": self.photo_id}
        if self.face is not None:
            out["face"] = self.face
        return out


@dataclass
class _Run:
    id: str
    timings: list[StageTiming] = field(default_factory=list)
    flags: set[str] = field(default_factory=set)


class DocumentPipeline:
    """Runs the processing stages over documents with one configuration."""

    def __init__(
        self,
        cfg: PipelineConfig,
        app_logger: logging.Logger,
        glyph_reader: GlyphReader | None = None,
        debug_dir: str | None = None,
    ) -> None:
        """
        Initializes the pipeline.

        Args:
            cfg: The pipeline configuration.
            app_logger: Logger for stage progress and performance metrics.
            glyph_reader: Reads one MRZ glyph image; without it the MRZ
                stage is skipped and records carry ``mrz_absent``.
            debug_dir: Where per-stage intermediate images are written.
        """
        self.cfg = cfg
        self.app_logger = app_logger
        self.glyph_reader = glyph_reader
        self.debug_dir = debug_dir
        self._stores: dict[str, RecordStore] = {}

    @contextmanager
    def _stage(self, run: _Run, name: str) -> Iterator[None]:
        self.app_logger.debug(f"[{run.id}] {name} started")
        start = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except IdPipeError as e:
            self.app_logger.error(f"[{run.id}] {name} failed: {e}")
            raise StageError(name, str(e)) from e
        finally:
            run.timings.append(StageTiming(name, (time.perf_counter() - start) * 1000.0))

    def _debug(self, run: _Run, img: GrayImage) -> None:
        if self.debug_dir is None or not run.timings:
            return
        nn = len(run.timings)
        stage = run.timings[-1].stage
        write_pgm(img, os.path.join(self.debug_dir, run.id, f"{nn:02d}_{stage}.pgm"))

    def _external(self, img: GrayImage, command: str, detect: Any) -> list:
        with tempfile.TemporaryDirectory(prefix="idpipe-") as tmp:
            path = os.path.join(tmp, "frame.pgm")
            write_pgm(img, path)
            return detect(path, command, self.app_logger, self.cfg.adapter_timeout)

    def process_document(self, source: str | GrayImage, source_path: str | None = None) -> DocumentRecord:
        """
        Processes one document image, from a path or an already decoded image.

        Raises:
            StageError: When a stage fails structurally; the cause is chained.
        """
        run = _Run(id=new_record_id())
        cfg = self.cfg
        path = source if isinstance(source, str) else (source_path or "<memory>")
        self.app_logger.info(f"[{run.id}] Processing {path} in {cfg.mode} mode")
        request_start = time.perf_counter()

        with self._stage(run, "load"):
            img = read_image(source) if isinstance(source, str) else source

        with self._stage(run, "deskew"):
            try:
                img, estimate = deskew_pipeline(img, cfg.deskew_method)
            except NoTextError as e:
                self.app_logger.warning(f"[{run.id}] No text to deskew by, keeping the frame as is: {e}")
                estimate = AngleEstimate(0.0, 0.0, "block")
        self._debug(run, img)
        self.app_logger.debug(f"[{run.id}] deskew {estimate.method} angle={estimate.angle:.3f} confidence={estimate.confidence:.3f}")

        face: FaceBox | None = None
        rotated90 = False
        if cfg.face_adapter:
            faces: list[FaceBox] | None
            with self._stage(run, "detect_face"):
                try:
                    faces = self._external(img, cfg.face_adapter, detect_face_external)
                except AdapterError as e:
                    self.app_logger.warning(f"[{run.id}] Face detector failed, continuing without it: {e}")
                    faces = None
            if faces:
                best = faces[0]
                face = FaceBox(best.box.clamp(img.width, img.height), best.score)
            with self._stage(run, "orientation"):
                if faces == []:
                    img, rotated90, _ = fix_orientation(img, cfg.layout, face_found=False)
            self._debug(run, img)

        with self._stage(run, CROP_STAGE):
            cropped = crop_by_contours(img, cfg.layout)
            card = crop(img, cropped.box)
        self._debug(run, card)
        face_box = face.box.translate(-cropped.box.x0, -cropped.box.y0).clamp(card.width, card.height) if face else None

        detail: CropResult | None = None
        if cfg.mode == "offline":
            with self._stage(run, DETAIL_STAGE):
                try:
                    detail = crop_by_detail(img)
                except SizeError as e:
                    self.app_logger.warning(f"[{run.id}] Detail crop skipped: {e}")
            if detail is not None:
                self._debug(run, crop(img, detail.box))
                self.app_logger.debug(
                    f"[{run.id}] detail/contour crop IoU {detail.box.iou(cropped.box):.3f}, "
                    f"ms {detail.elapsed_ms:.1f}/{cropped.elapsed_ms:.1f}"
                )

        with self._stage(run, "orientation_aspect"):
            frame = RotationFrame(card.width, card.height, -90)
            card, turned, uncertain = fix_orientation(card, cfg.layout)
            if turned:
                rotated90 = not rotated90
                face_box = frame.map_box(face_box) if face_box else None
            if uncertain:
                run.flags.add("orientation_uncertain")
        self._debug(run, card)

        with self._stage(run, "fix_180"):
            band = locate_mrz(card, cfg.mrz)
            frame = RotationFrame(card.width, card.height, 180)
            card, flipped = fix_180(card, band_center_fraction(band, card.height))
            if flipped:
                run.flags.add("flipped_180")
                face_box = frame.map_box(face_box) if face_box else None
        self._debug(run, card)

        photo: PhotoIdBox | None = None
        face_image: GrayImage | None = None
        with self._stage(run, "photo_id"):
            masked = card
            if face_box is not None and face_box.area > 0 and face is not None:
                normalized = FaceBox.normalized(face_box, face.score)
                inside = FaceBox(normalized.box.clamp(card.width, card.height), face.score)
                photo = expand_face_box(inside, card.width, card.height)
                if photo.box.area > 0:
                    face_image = crop(card, photo.box)
                masked = mask_photo_region(card, photo)
        self._debug(run, masked)

        with self._stage(run, "clean"):
            cleaned = clean_background(masked, cfg.clean)
            cleaned = sharpen(cleaned, cfg.clean.sharpen_amount)
        self._debug(run, cleaned)

        with self._stage(run, "segment"):
            sources = [mser_regions(cleaned, cfg.mser), contour_char_boxes(cleaned, cfg.layout)]
            if cfg.text_adapter:
                try:
                    sources.append(self._external(cleaned, cfg.text_adapter, detect_text_external))
                except AdapterError as e:
                    self.app_logger.warning(f"[{run.id}] Text detector failed, voting without it: {e}")

        with self._stage(run, "vote_merge"):
            lines = vote_merge(sources, cleaned.width, cleaned.height, cfg.vote_min)
        self._debug(run, _outline(cleaned, [r.box for r in lines]))

        record: MrzRecord | None = None
        if self.glyph_reader is not None:
            with self._stage(run, "mrz"):
                try:
                    record = extract_and_parse(cleaned, self.glyph_reader, cfg.mrz, cfg.layout)
                except MrzParseError as e:
                    self.app_logger.warning(f"[{run.id}] MRZ unreadable: {e}")
                if record is not None and not record_lines_valid(record):
                    record = None
        if record is None:
            run.flags.add("mrz_absent")
        elif not record.valid:
            run.flags.add("checks_failed")
            self.app_logger.warning(f"[{run.id}] MRZ check digits failed: {', '.join(record.failed_checks)}")

        doc = DocumentRecord(
            id=run.id,
            source_path=path,
            mode=cfg.mode,
            crop_box=cropped.box,
            deskew=estimate,
            timings=run.timings,
            flags=run.flags,
            photo_id=card,
            mrz=record,
            face=face_image,
            photo_id_box=photo.box if photo else None,
            rotated90=rotated90,
            text_lines=lines,
            detail_crop=detail,
        )
        performance_metrics = {
            "id": run.id,
            "mode": cfg.mode,
            "total_ms": round((time.perf_counter() - request_start) * 1000.0, 3),
            "stages": [t.to_dict() for t in run.timings],
        }
        self.app_logger.info("--- Performance Metrics ---")
        self.app_logger.info(json.dumps(performance_metrics, indent=4))
        return doc

    def write_record(self, rec: DocumentRecord, store_dir: str | None = None) -> int:
        store_dir = store_dir or self.cfg.store_dir
        if store_dir not in self._stores:
            self._stores[store_dir] = RecordStore(store_dir, self.app_logger)
        return self._stores[store_dir].write_record(rec.id, rec.to_dict(), rec.blobs())


def _outline(img: GrayImage, boxes: Iterable[Box]) -> GrayImage:
    out = img.data.copy()
    for b in boxes:
        b = b.clamp(img.width, img.height)
        if b.area == 0:
            continue
        out[b.y0, b.x0 : b.x1] = 0
        out[b.y1 - 1, b.x0 : b.x1] = 0
        out[b.y0 : b.y1, b.x0] = 0
        out[b.y0 : b.y1, b.x1 - 1] = 0
    return GrayImage(out)


def process_document(
    source: str | GrayImage,
    cfg: PipelineConfig,
    app_logger: logging.Logger,
    glyph_reader: GlyphReader | None = None,
) -> DocumentRecord:
    return DocumentPipeline(cfg, app_logger, glyph_reader).process_document(source)


def write_record(rec: DocumentRecord, store_dir: str, app_logger: logging.Logger) -> int:
    return RecordStore(store_dir, app_logger).write_record(rec.id, rec.to_dict(), rec.blobs())


def _timings_of(rec: DocumentRecord | Mapping) -> tuple[str, str, list[tuple[str, float]]]:
    if isinstance(rec, DocumentRecord):
        return rec.id, rec.mode, [(t.stage, t.elapsed_ms) for t in rec.timings]
    return (
        str(rec.get("id", "")),
        str(rec.get("mode", "realtime")),
        [(str(t["stage"]), float(t["ms"])) for t in rec.get("timings", [])],
    )


def _stage_summary(rows: list[list[tuple[str, float]]]) -> dict[str, dict[str, float]]:
    by_stage: dict[str, list[float]] = {}
    for timings in rows:
        for stage, ms in timings:
            by_stage.setdefault(stage, []).append(ms)
    return {
        stage: {
            "mean": float(np.mean(values)),
            "median": float(np.median(values)),
            "count": len(values),
        }
        for stage, values in by_stage.items()
    }


def timing_report(records: Iterable[DocumentRecord | Mapping], realtime_budget_ms: float = 700.0) -> dict:
    """
    Aggregates stage timings over records (DocumentRecords or stored JSON lines).

    The summary holds per-stage mean and median milliseconds overall and per
    mode, a ``within_budget`` verdict per record for the contour crop, and the
    median detail/contour crop ratio when offline records carry both.

    Raises:
        EmptyReportError: If there are no records.
    """
    rows = [_timings_of(r) for r in records]
    if not rows:
        raise EmptyReportError("No records to report on.")

    report: dict[str, Any] = {
        "records": len(rows),
        "stages": _stage_summary([t for _, _, t in rows]),
        "modes": {},
        "budget_ms": realtime_budget_ms,
        "within_budget": [],
    }
    for mode in PIPELINE_MODES:
        selected = [t for _, m, t in rows if m == mode]
        if selected:
            report["modes"][mode] = _stage_summary(selected)

    for rec_id, _, timings in rows:
        crop_ms = [ms for stage, ms in timings if stage == CROP_STAGE]
        report["within_budget"].append(
            {"id": rec_id, "within_budget": bool(crop_ms) and all(ms <= realtime_budget_ms for ms in crop_ms)}
        )

    offline = report["modes"].get("offline", {})
    if CROP_STAGE in offline and DETAIL_STAGE in offline:
        contour = offline[CROP_STAGE]["median"]
        report["detail_contour_ratio"] = offline[DETAIL_STAGE]["median"] / contour if contour > 0 else None
    return report
