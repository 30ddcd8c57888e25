import pytest

from idpipe.adapter import ExternalDetector, parse_detections
from idpipe.errors import AdapterError, AdapterTimeoutError
from idpipe.raster import Box


def test_parse_detections():
    """Tests that blank lines are skipped and the emitted order is kept."""
    detections = parse_detections("10 20 80 80 0.99\n\n  1 2 3 4 .5 \n")
    assert [(d.box, d.score) for d in detections] == [(Box(10, 20, 80, 80), 0.99), (Box(1, 2, 3, 4), 0.5)]
    assert parse_detections("") == []


@pytest.mark.parametrize("line", ["10 20 80", "a b c d 0.1", "1 2 3 4 1.5", "-1 2 3 4 0.5"])
def test_parse_detections_rejects(line):
    with pytest.raises(AdapterError):
        parse_detections(line + "\n")


def test_external_detector_runs_command(tmp_path, app_logger):
    script = tmp_path / "detect.sh"
    script.write_text('#!/bin/sh\ntest -n "$1" || exit 3\necho "7 8 9 10 0.25"\n')
    script.chmod(0o755)
    detections = ExternalDetector(str(script), app_logger).detect(str(tmp_path / "img.pgm"))
    assert detections[0].box == Box(7, 8, 9, 10)
    app_logger.debug.assert_called()


def test_external_detector_failures(tmp_path, app_logger):
    """Tests that a non-zero exit keeps stderr, garbage output fails and a missing binary fails."""
    with pytest.raises(AdapterError) as e:
        ExternalDetector("sh -c 'echo broken >&2; exit 2'", app_logger).detect("img.pgm")
    assert "broken" in e.value.stderr
    app_logger.error.assert_called()

    with pytest.raises(AdapterError):
        ExternalDetector("echo not a detection", app_logger).detect("img.pgm")

    with pytest.raises(AdapterError):
        ExternalDetector(str(tmp_path / "no-such-detector"), app_logger).detect("img.pgm")

    with pytest.raises(AdapterError):
        ExternalDetector("   ", app_logger)


def test_external_detector_timeout(app_logger):
    with pytest.raises(AdapterTimeoutError):
        ExternalDetector("sh -c 'sleep 5'", app_logger, timeout=0.2).detect("img.pgm")
