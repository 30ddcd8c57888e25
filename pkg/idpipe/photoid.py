"""Face-box to photo-ID geometry and photo masking.

A detector returns a near-square face box ``(X0, Y0, W, H)``. The printed
photo is taller than the face: its height is ``1.3 H``, so the box grows by
``dH = 0.3 H`` split evenly above and below, keeping its vertical centre::

    BB_photo = (X0, Y0 - dH / 2, W, H + dH)

All arithmetic is exact (``Fraction``) until the final half-up rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from .adapter import ExternalDetector
from .errors import GeometryError
from .raster import Box, GrayImage, fill_box

PHOTO_HEIGHT_FACTOR = Fraction(13, 10)
SQUARE_TOLERANCE = 0.10


def round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


@dataclass(frozen=True)
class FaceBox:
    box: Box
    score: float

    @classmethod
    def normalized(cls, box: Box, score: float) -> "FaceBox":
        """Square up a box whose sides differ by more than 10%, keeping its centre."""
        w, h = box.w, box.h
        if max(w, h) == 0 or abs(w - h) <= SQUARE_TOLERANCE * max(w, h):
            return cls(box, score)
        side = max(w, h)
        x0 = box.x0 - (side - w) // 2
        y0 = box.y0 - (side - h) // 2
        return cls(Box(x0, y0, side, side), score)

    def to_dict(self) -> dict:
        return {"box": self.box.to_dict(), "score": self.score}


@dataclass(frozen=True)
class PhotoIdBox:
    box: Box
    source: Box
    exact_y0: Fraction
    exact_h: Fraction

    @property
    def delta_h(self) -> Fraction:
        return self.exact_h - self.source.h

    def to_dict(self) -> dict:
        return {"box": self.box.to_dict(), "face": self.source.to_dict()}


def expand_face_box(face: FaceBox, width: int, height: int) -> PhotoIdBox:
    """
    Grows a face box to the printed photo's box and clamps it to the image.

    Raises:
        GeometryError: If the face box is not inside the image.
    """
    b = face.box
    if b.x0 < 0 or b.y0 < 0 or b.x1 > width or b.y1 > height:
        raise GeometryError(f"Face box {b} lies outside the {width}x{height} image.")
    exact_h = PHOTO_HEIGHT_FACTOR * b.h
    delta_h = exact_h - b.h
    exact_y0 = b.y0 - delta_h / 2
    y0 = b.y0 - round_half_up(delta_h / 2)
    h = round_half_up(exact_h)
    grown = Box.from_corners(b.x0, y0, b.x1, y0 + h).clamp(width, height)
    return PhotoIdBox(box=grown, source=b, exact_y0=exact_y0, exact_h=exact_h)


def mask_photo_region(img: GrayImage, p: PhotoIdBox | Box) -> GrayImage:
    box = p.box if isinstance(p, PhotoIdBox) else p
    if box.w == 0 or box.h == 0:
        return img
    return fill_box(img, box, 0)


def detect_face_external(
    image_path: str, command: str, app_logger: logging.Logger, timeout: float = 5.0
) -> list[FaceBox]:
    """Face boxes from an external detector, best score first."""
    detector = ExternalDetector(command, app_logger, timeout)
    faces = [FaceBox.normalized(d.box, d.score) for d in detector.detect(image_path)]
    return sorted(faces, key=lambda f: -f.score)
