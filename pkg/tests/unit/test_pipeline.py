import json
import os
from unittest.mock import MagicMock

import pytest

from idpipe.deskew import AngleEstimate
from idpipe.errors import EmptyReportError, ParameterError, StageError
from idpipe.pipeline import (
    CROCKFORD,
    DocumentPipeline,
    DocumentRecord,
    PipelineConfig,
    StageTiming,
    new_record_id,
    process_document,
    timing_report,
    write_record,
)
from idpipe.raster import Box, GrayImage

from .conftest import SPECIMEN_LINES

REALTIME_STAGES = [
    "load",
    "deskew",
    "autocrop",
    "orientation_aspect",
    "fix_180",
    "photo_id",
    "clean",
    "segment",
    "vote_merge",
    "mrz",
]


@pytest.fixture(scope="module")
def realtime_run(passport, glyph_reader):
    image, truth = passport
    logger = MagicMock()
    record = process_document(image, PipelineConfig(), logger, glyph_reader)
    return record, truth, logger


def test_process_document_realtime(realtime_run):
    """Tests stage order, the crop and the MRZ read off a clean passport."""
    record, truth, _ = realtime_run
    assert record.stages == REALTIME_STAGES
    assert record.mode == "realtime"
    assert record.source_path == "<memory>"
    assert record.crop_box.iou(truth.card_box) >= 0.9
    assert record.flags == set()
    assert record.mrz is not None
    assert record.mrz.raw_lines == SPECIMEN_LINES
    assert record.mrz.valid
    assert record.face is None and record.photo_id_box is None
    assert record.detail_crop is None
    assert record.rotation == pytest.approx(record.deskew.angle)
    assert all(t.elapsed_ms >= 0 for t in record.timings)


def test_process_document_logs_performance_metrics(realtime_run):
    record, _, logger = realtime_run
    messages = [c.args[0] for c in logger.info.call_args_list]
    at = messages.index("--- Performance Metrics ---")
    metrics = json.loads(messages[at + 1])
    assert metrics["id"] == record.id
    assert [s["stage"] for s in metrics["stages"]] == REALTIME_STAGES
    assert metrics["total_ms"] >= sum(s["ms"] for s in metrics["stages"]) - 1.0


def test_record_to_dict(realtime_run):
    record, _, _ = realtime_run
    doc = record.to_dict()
    assert doc["mrz"]["doc_number"] == "L898902C3"
    assert doc["flags"] == []
    assert [t["stage"] for t in doc["timings"]] == REALTIME_STAGES
    assert json.loads(json.dumps(doc)) == doc
    assert set(record.blobs()) == {"photo_id"}


def test_process_document_without_reader(passport, app_logger):
    """Without a glyph reader the MRZ stage is skipped and the record is flagged."""
    image, _ = passport
    record = process_document(image, PipelineConfig(), app_logger)
    assert "mrz" not in record.stages
    assert record.flags == {"mrz_absent"}
    assert record.mrz is None


def test_process_document_with_face_offline(passport, glyph_reader, app_logger):
    """Tests the face-guided photo ID and the extra detail crop of offline mode."""
    image, truth = passport
    face = Box(128, 169, 144, 192)
    cfg = PipelineConfig(mode="offline", face_adapter=f"sh -c 'echo {face.x0} {face.y0} {face.w} {face.h} 0.93'")
    record = DocumentPipeline(cfg, app_logger, glyph_reader).process_document(image)

    assert record.stages[:4] == ["load", "deskew", "detect_face", "orientation"]
    assert "autocrop_detail" in record.stages
    assert record.detail_crop is not None and record.detail_crop.method == "detail"
    assert not record.rotated90
    assert record.photo_id_box is not None and record.face is not None
    cx, cy = face.center
    centre = Box(int(cx) - record.crop_box.x0, int(cy) - record.crop_box.y0, 1, 1)
    assert record.photo_id_box.contains(centre)
    assert record.face.size == (record.photo_id_box.w, record.photo_id_box.h)
    assert set(record.blobs()) == {"photo_id", "face"}
    assert record.mrz is not None and record.mrz.valid


def test_failing_face_adapter_is_a_warning(passport, glyph_reader, app_logger):
    image, _ = passport
    record = DocumentPipeline(PipelineConfig(face_adapter="false"), app_logger, glyph_reader).process_document(image)
    assert record.photo_id_box is None
    assert "detect_face" in record.stages
    app_logger.warning.assert_called()


def test_process_document_without_card(app_logger):
    """A blank frame survives deskew but fails the crop stage."""
    with pytest.raises(StageError) as e:
        process_document(GrayImage.filled(300, 200, 128), PipelineConfig(), app_logger)
    assert e.value.stage == "autocrop"
    assert str(e.value).startswith("[autocrop]")
    assert e.value.__cause__ is not None


def test_process_document_unreadable_path(tmp_path, app_logger):
    with pytest.raises(StageError) as e:
        process_document(str(tmp_path / "missing.pgm"), PipelineConfig(), app_logger)
    assert e.value.stage == "load"


def test_debug_images(tmp_path, passport, app_logger):
    image, _ = passport
    pipeline = DocumentPipeline(PipelineConfig(), app_logger, debug_dir=str(tmp_path))
    record = pipeline.process_document(image)
    written = sorted(os.listdir(tmp_path / record.id))
    assert "02_deskew.pgm" in written
    assert "03_autocrop.pgm" in written
    assert any(name.endswith("_vote_merge.pgm") for name in written)


def test_write_record(tmp_path, realtime_run, app_logger):
    record, _, _ = realtime_run
    assert write_record(record, str(tmp_path), app_logger) == 0
    stored = json.loads((tmp_path / "records.jsonl").read_text())
    assert stored["id"] == record.id
    assert stored["photo_id_blob"] == os.path.join("blobs", record.id, "photo_id.pgm")
    assert stored["face_blob"] is None


def _record(deskew_angle, rotated90=False, flags=()):
    return DocumentRecord(
        id=new_record_id(),
        source_path="x.pgm",
        mode="realtime",
        crop_box=Box(0, 0, 10, 10),
        deskew=AngleEstimate(deskew_angle, 1.0, "fft"),
        timings=[],
        flags=set(flags),
        photo_id=GrayImage.filled(10, 10, 200),
        rotated90=rotated90,
    )


@pytest.mark.parametrize(
    "angle, rotated90, flags, total",
    [
        (3.0, False, (), 3.0),
        (3.0, True, (), -87.0),
        (-2.0, False, ("flipped_180",), 178.0),
        (0.0, True, ("flipped_180",), 90.0),
        (0.0, False, ("flipped_180",), 180.0),
    ],
)
def test_record_rotation(angle, rotated90, flags, total):
    assert _record(angle, rotated90, flags).rotation == pytest.approx(total)


def test_new_record_id():
    ids = {new_record_id() for _ in range(100)}
    assert len(ids) == 100
    assert all(len(i) == 26 and set(i) <= set(CROCKFORD) for i in ids)


def test_pipeline_config_validation():
    with pytest.raises(ParameterError):
        PipelineConfig(mode="batch")
    with pytest.raises(ParameterError):
        PipelineConfig(deskew_method="radon")
    with pytest.raises(ParameterError):
        PipelineConfig(adapter_timeout=0)
    with pytest.raises(ParameterError):
        PipelineConfig.from_dict({"unknown": 1})


def test_timing_report():
    """Tests per-stage statistics, the realtime budget verdict and the detail/contour ratio."""
    fast = _record(0.0)
    fast.timings = [StageTiming("autocrop", 100.0), StageTiming("clean", 10.0)]
    slow = {
        "id": "SLOW",
        "mode": "offline",
        "timings": [{"stage": "autocrop", "ms": 900.0}, {"stage": "autocrop_detail", "ms": 2700.0}],
    }
    report = timing_report([fast, slow], realtime_budget_ms=700.0)

    assert report["records"] == 2
    assert report["stages"]["autocrop"] == {"mean": 500.0, "median": 500.0, "count": 2}
    assert report["modes"]["realtime"]["clean"]["count"] == 1
    assert report["within_budget"] == [
        {"id": fast.id, "within_budget": True},
        {"id": "SLOW", "within_budget": False},
    ]
    assert report["detail_contour_ratio"] == pytest.approx(3.0)

    with pytest.raises(EmptyReportError):
        timing_report([])


def test_timing_report_medians_over_many_records():
    """Tests the per-stage and per-mode medians over ten stored records."""
    rows = [
        {
            "id": f"R{i}",
            "mode": "offline" if i % 2 else "realtime",
            "timings": [{"stage": "autocrop", "ms": 10.0 * (i + 1)}, {"stage": "clean", "ms": float(i * i)}],
        }
        for i in range(10)
    ]
    report = timing_report(rows)
    assert report["records"] == 10
    assert report["stages"]["autocrop"]["median"] == pytest.approx(55.0)
    assert report["stages"]["clean"]["median"] == pytest.approx(20.5)
    assert report["modes"]["realtime"]["autocrop"] == {"mean": 50.0, "median": 50.0, "count": 5}
    assert report["modes"]["offline"]["autocrop"]["median"] == pytest.approx(60.0)
    assert all(entry["within_budget"] for entry in report["within_budget"])
    assert "detail_contour_ratio" not in report
