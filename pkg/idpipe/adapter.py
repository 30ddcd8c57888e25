import logging
import re
import shlex
import subprocess
from dataclasses import dataclass

from .errors import AdapterError, AdapterTimeoutError
from .raster import Box

DETECTION_LINE_RE = re.compile(r"^\s*(\d+)\s+(\d+)\s+(\d+)\s+(\d+)\s+(\d+(?:\.\d+)?|\.\d+)\s*$")


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float


def parse_detections(stdout: str) -> list[Detection]:
    """
    Parses detector output, one ``x y w h score`` line per detection.

    Blank lines are skipped; the emitted order is kept.

    Raises:
        AdapterError: On any line that does not match the protocol.
    """
    detections = []
    for lineno, line in enumerate(stdout.splitlines(), start=1):
        if not line.strip():
            continue
        match = DETECTION_LINE_RE.match(line)
        if not match:
            raise AdapterError(f"Malformed detector output on line {lineno}: {line!r}")
        x, y, w, h = (int(g) for g in match.groups()[:4])
        score = float(match.group(5))
        if score > 1.0:
            raise AdapterError(f"Detector score {score} on line {lineno} is outside 0..1.")
        detections.append(Detection(box=Box(x, y, w, h), score=score))
    return detections


class ExternalDetector:
    """Runs an external detector as a child process: ``CMD <image-path>``."""

    def __init__(self, command: str, app_logger: logging.Logger, timeout: float = 5.0) -> None:
        """
        Initializes the detector wrapper.

        Args:
            command: The detector command line; the image path is appended.
            app_logger: Logger for diagnostics.
            timeout: Seconds to wait before the child is killed.
        """
        self.argv = shlex.split(command)
        if not self.argv:
            raise AdapterError("Empty detector command.")
        self.app_logger = app_logger
        self.timeout = timeout

    def detect(self, image_path: str) -> list[Detection]:
        """
        Runs the detector on one image.

        Raises:
            AdapterTimeoutError: If the child does not exit within the timeout.
            AdapterError: If it cannot be started, exits non-zero, or prints
                anything outside the line protocol.
        """
        argv = [*self.argv, image_path]
        self.app_logger.debug(f"Running detector: {shlex.join(argv)}")
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=self.timeout, check=False
            )
        except subprocess.TimeoutExpired as e:
            stderr = e.stderr.decode(errors="replace") if isinstance(e.stderr, bytes) else (e.stderr or "")
            self.app_logger.error(f"Detector {self.argv[0]} timed out after {self.timeout}s")
            raise AdapterTimeoutError(
                f"Detector {self.argv[0]} timed out after {self.timeout}s.", stderr
            ) from e
        except OSError as e:
            self.app_logger.error(f"Detector {self.argv[0]} could not be started: {e}")
            raise AdapterError(f"Detector {self.argv[0]} could not be started: {e}") from e

        if proc.returncode != 0:
            self.app_logger.error(
                f"Detector {self.argv[0]} exited with {proc.returncode}: {proc.stderr.strip()}"
            )
            raise AdapterError(
                f"Detector {self.argv[0]} exited with status {proc.returncode}.", proc.stderr
            )
        try:
            return parse_detections(proc.stdout)
        except AdapterError as e:
            raise AdapterError(str(e), proc.stderr) from e
