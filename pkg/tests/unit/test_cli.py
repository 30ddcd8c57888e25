import json

import pytest
import yaml
from click.testing import CliRunner

from idpipe.cli import cli
from idpipe.imageio import read_image, write_pgm
from idpipe.raster import GrayImage, crop

from .conftest import SPECIMEN_LINES


@pytest.fixture
def runner(monkeypatch, tmp_path):
    monkeypatch.delenv("IDPIPE_CONFIG_FILE", raising=False)
    monkeypatch.chdir(tmp_path)
    return CliRunner()


@pytest.fixture
def passport_file(tmp_path, passport):
    image, _ = passport
    path = tmp_path / "passport.pgm"
    write_pgm(image, str(path))
    return str(path)


def test_mrz_parse(runner):
    result = runner.invoke(cli, ["mrz-parse", *SPECIMEN_LINES])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.output)
    assert doc["surname"] == "ERIKSSON"
    assert doc["valid"] is True


def test_mrz_parse_rejects_td1(runner):
    """Errors become a one-line message and exit status 1."""
    result = runner.invoke(cli, ["mrz-parse", "<" * 30, "<" * 30, "<" * 30])
    assert result.exit_code == 1
    assert "Error:" in result.output


def test_deskew_and_crop(runner, tmp_path, passport_file, passport):
    _, truth = passport
    result = runner.invoke(cli, ["deskew", passport_file, "--out", str(tmp_path / "level.pgm")])
    assert result.exit_code == 0, result.output
    estimate = json.loads(result.output)
    assert abs(estimate["angle"]) <= 0.5
    assert estimate["ms"] >= 0

    result = runner.invoke(cli, ["crop", str(tmp_path / "level.pgm"), "--out", str(tmp_path / "card.pgm")])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["method"] == "contour"
    card = read_image(str(tmp_path / "card.pgm"))
    assert abs(card.width - truth.card_box.w) <= 0.1 * truth.card_box.w


def test_clean_text_report(runner, tmp_path, passport_file):
    result = runner.invoke(
        cli, ["clean", passport_file, "--out", str(tmp_path / "clean.pgm"), "--passes", "1", "--report", "text"]
    )
    assert result.exit_code == 0, result.output
    assert "passes: 1" in result.output
    assert (tmp_path / "clean.pgm").exists()


def test_segment_and_locate(runner, tmp_path, passport):
    image, truth = passport
    card_path = str(tmp_path / "card.pgm")
    write_pgm(crop(image, truth.card_box), card_path)

    result = runner.invoke(cli, ["segment", card_path])
    assert result.exit_code == 0, result.output
    assert len(json.loads(result.output)["lines"]) >= len(truth.line_boxes)

    result = runner.invoke(cli, ["segment", card_path, "--sources", "mser,ocr"])
    assert result.exit_code == 2

    result = runner.invoke(cli, ["mrz-locate", card_path])
    assert result.exit_code == 0, result.output
    band = json.loads(result.output)
    assert band["box"]["y0"] > truth.card_box.h / 2


def test_process_and_report(runner, tmp_path, passport_file):
    """Tests processing into a store and the timing report over it."""
    out = tmp_path / "store"
    result = runner.invoke(cli, ["process", passport_file, "--out", str(out), "--synthetic-reader", "--emit-debug"])
    assert result.exit_code == 0, result.output
    summary = next(json.loads(line) for line in result.output.splitlines() if '"source_path"' in line)
    assert summary["source_path"] == passport_file
    assert summary["flags"] == []
    assert (out / "records.jsonl").exists()
    assert (out / "debug" / summary["id"]).is_dir()

    result = runner.invoke(cli, ["report", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["records"] == 1
    assert "autocrop" in report["stages"]


def test_process_counts_failures(runner, tmp_path, passport_file):
    blank = tmp_path / "blank.pgm"
    write_pgm(GrayImage.filled(300, 200, 128), str(blank))
    result = runner.invoke(cli, ["process", passport_file, str(blank), "--out", str(tmp_path / "store")])
    assert result.exit_code == 1
    assert "1 of 2 documents failed" in result.output


def test_synth(runner, tmp_path, passport_fields):
    spec = {
        "cards": [
            {"name": "plain", "text_lines": [{"row": 20, "column": 20, "text": "HELLO"}], "card_w": 200, "card_h": 126},
            {"name": "pass", "preset": "passport", "rotation": 4, "mrz": dict(passport_fields.__dict__)},
        ]
    }
    spec_file = tmp_path / "cards.yaml"
    spec_file.write_text(yaml.dump(spec))
    result = runner.invoke(cli, ["synth", "--spec", str(spec_file), "--out", str(tmp_path / "cards")])
    assert result.exit_code == 0, result.output
    truth = json.loads((tmp_path / "cards" / "pass" / "truth.json").read_text())
    assert truth["mrz_lines"] == list(SPECIMEN_LINES)
    assert truth["rotation"] == 4
    assert read_image(str(tmp_path / "cards" / "plain" / "image.pgm")).size == (280, 206)


def test_synth_bad_spec(runner, tmp_path):
    spec_file = tmp_path / "cards.yaml"
    spec_file.write_text(yaml.dump({"cards": [{"preset": "visa"}]}))
    result = runner.invoke(cli, ["synth", "--spec", str(spec_file), "--out", str(tmp_path / "cards")])
    assert result.exit_code == 1
    assert "Unknown card preset" in result.output


def test_config_option(runner, tmp_path, passport_file):
    config_file = tmp_path / "config.yaml"
    config_file.write_text(yaml.dump({"clean": {"passes": 3}}))
    result = runner.invoke(cli, ["--config", str(config_file), "clean", passport_file, "--out", str(tmp_path / "c.pgm")])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["passes"] == 3
