import os
import re

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageReadError
from .raster import GrayImage, to_gray

PGM_HEADER_RE = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def decode_pgm(raw: bytes) -> GrayImage:
    """Decode a binary PGM (P5, maxval 255)."""
    match = PGM_HEADER_RE.match(raw)
    if not match:
        raise ImageReadError("Not a binary PGM (P5) stream.")
    width, height, maxval = (int(g) for g in match.groups())
    if maxval != 255:
        raise ImageReadError(f"Unsupported PGM maxval {maxval}, only 255 is accepted.")
    payload = raw[match.end() : match.end() + width * height]
    if len(payload) != width * height:
        raise ImageReadError(
            f"Truncated PGM: expected {width * height} bytes, got {len(payload)}."
        )
    return GrayImage.from_bytes(width, height, payload)


def encode_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.to_bytes()


def read_image(path: str) -> GrayImage:
    """
    Reads a PGM or an 8-bit grayscale/RGB PNG from disk.

    RGB(A) PNGs are reduced to luminance with the same conversion the
    raster module uses everywhere else.

    Raises:
        ImageReadError: If the file is missing or cannot be decoded.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise ImageReadError(f"Cannot read image {path}: {e}") from e

    if raw.startswith(b"P5"):
        return decode_pgm(raw)

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                return GrayImage(np.asarray(im, dtype=np.uint8))
            if im.mode in ("RGB", "RGBA", "P"):
                rgb = im.convert("RGB")
                return to_gray(np.asarray(rgb, dtype=np.uint8), rgb.width, rgb.height)
            raise ImageReadError(f"Unsupported image mode {im.mode} in {path}.")
    except (UnidentifiedImageError, OSError) as e:
        raise ImageReadError(f"Cannot decode image {path}: {e}") from e


def write_pgm(img: GrayImage, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_pgm(img))
