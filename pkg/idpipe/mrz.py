"""Machine-readable zone location, parsing and check-digit validation.

Only the two-line passport class (TD3, 2 x 44 characters) is parsed. The
field offsets and the character value table follow the public ICAO 9303
convention. Check-digit failures are recorded on the record, never raised:
deciding what a failing check means is left to the caller.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .autocrop import LayoutConfig
from .errors import AlphabetError, MrzParseError, ReaderError, UnsupportedMrzFormatError
from .raster import (
    BinaryImage,
    Box,
    GrayImage,
    Kernel,
    crop,
    erode,
    find_contours,
    gaussian_blur,
    morphology,
    normalize,
    otsu_binarize,
    sobel_x_magnitude,
)
from .textseg import contour_char_boxes

TD3_LINE_LENGTH = 44
TD2_LINE_LENGTH = 36
TD1_LINE_LENGTH = 30
MRZ_ALPHABET_RE = re.compile(r"^[A-Z0-9<]*$")
CHECK_WEIGHTS = (7, 3, 1)
CHECK_NAMES = ("doc_number", "birth", "expiry", "personal", "composite")

GlyphReader = Callable[[GrayImage], str]


def mrz_char_value(c: str) -> int:
    if c == "<":
        return 0
    if len(c) == 1 and "0" <= c <= "9":
        return ord(c) - ord("0")
    if len(c) == 1 and "A" <= c <= "Z":
        return ord(c) - ord("A") + 10
    raise AlphabetError(f"Character {c!r} is not in the MRZ alphabet [A-Z0-9<].")


def check_digit(s: str) -> int:
    """Weighted (7, 3, 1) mod-10 checksum over MRZ character values."""
    total = 0
    for i, c in enumerate(s):
        total += mrz_char_value(c) * CHECK_WEIGHTS[i % 3]
    return total % 10


@dataclass(frozen=True)
class CheckVerdict:
    name: str
    expected: str
    found: str

    @property
    def passed(self) -> bool:
        return self.expected == self.found

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "found": self.found,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class MrzFields:
    """The human-level values an MRZ encodes, without filler characters."""

    doc_type: str
    issuing_state: str
    surname: str
    given_names: str
    doc_number: str
    nationality: str
    birth_date: str
    sex: str
    expiry_date: str
    personal_number: str = ""


@dataclass(frozen=True)
class MrzRecord:
    doc_type: str
    issuing_state: str
    surname: str
    given_names: str
    doc_number: str
    nationality: str
    birth_date: str
    sex: str
    expiry_date: str
    personal_number: str
    checks: dict[str, CheckVerdict]
    raw_lines: tuple[str, str]
    padded: bool = False

    @property
    def valid(self) -> bool:
        return all(v.passed for v in self.checks.values())

    @property
    def valid_score(self) -> int:
        if not self.checks:
            return 0
        passed = sum(1 for v in self.checks.values() if v.passed)
        return round(100 * passed / len(self.checks))

    @property
    def failed_checks(self) -> list[str]:
        return [name for name, v in self.checks.items() if not v.passed]

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("checks", "raw_lines")}
        out["checks"] = {name: v.to_dict() for name, v in self.checks.items()}
        out["raw_lines"] = list(self.raw_lines)
        out["valid"] = self.valid
        out["valid_score"] = self.valid_score
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "MrzRecord":
        return parse_td3(raw["raw_lines"])


def fields_of(record: MrzRecord) -> MrzFields:
    """Strip filler characters from a parsed record's fixed-width fields."""
    return MrzFields(
        doc_type=record.doc_type.rstrip("<"),
        issuing_state=record.issuing_state.rstrip("<"),
        surname=record.surname,
        given_names=record.given_names,
        doc_number=record.doc_number.rstrip("<"),
        nationality=record.nationality.rstrip("<"),
        birth_date=record.birth_date,
        sex=record.sex,
        expiry_date=record.expiry_date,
        personal_number=record.personal_number.rstrip("<"),
    )


def _validate_lines(lines: Sequence[str], count: int, length: int) -> None:
    if len(lines) != count:
        raise MrzParseError(f"Expected {count} MRZ lines, got {len(lines)}.")
    for i, line in enumerate(lines):
        if len(line) != length:
            raise MrzParseError(
                f"MRZ line {i + 1} has {len(line)} characters, expected {length}."
            )
        if not MRZ_ALPHABET_RE.match(line):
            raise MrzParseError(f"MRZ line {i + 1} contains characters outside [A-Z0-9<].")


def _names(segment: str) -> tuple[str, str]:
    surname, sep, given = segment.partition("<<")
    surname = surname.replace("<", " ").strip()
    given = given.replace("<", " ").strip() if sep else ""
    return surname, " ".join(given.split())


def parse_td3(lines: Sequence[str]) -> MrzRecord:
    """
    Parses the two 44-character lines of a TD3 (passport) MRZ.

    Raises:
        MrzParseError: For a wrong line count, line length or alphabet.
            Failing check digits are reported in ``checks`` instead.
    """
    _validate_lines(lines, 2, TD3_LINE_LENGTH)
    l1, l2 = lines[0], lines[1]
    surname, given = _names(l1[5:44])

    def verdict(name: str, data: str, found: str) -> CheckVerdict:
        return CheckVerdict(name=name, expected=str(check_digit(data)), found=found)

    checks = {
        "doc_number": verdict("doc_number", l2[0:9], l2[9]),
        "birth": verdict("birth", l2[13:19], l2[19]),
        "expiry": verdict("expiry", l2[21:27], l2[27]),
        "personal": verdict("personal", l2[28:42], l2[42]),
        "composite": verdict("composite", l2[0:10] + l2[13:20] + l2[21:43], l2[43]),
    }
    sex = l2[20] if l2[20] in ("M", "F") else "unspecified"
    return MrzRecord(
        doc_type=l1[0:2].rstrip("<"),
        issuing_state=l1[2:5],
        surname=surname,
        given_names=given,
        doc_number=l2[0:9],
        nationality=l2[10:13],
        birth_date=l2[13:19],
        sex=sex,
        expiry_date=l2[21:27],
        personal_number=l2[28:42],
        checks=checks,
        raw_lines=(l1, l2),
    )


def parse_mrz(lines: Sequence[str]) -> MrzRecord:
    """Dispatch on MRZ shape; only TD3 is parsed."""
    shape = (len(lines), {len(line) for line in lines})
    if shape == (2, {TD3_LINE_LENGTH}):
        return parse_td3(lines)
    if shape == (2, {TD2_LINE_LENGTH}):
        raise UnsupportedMrzFormatError("TD2 (2 x 36) MRZ is recognised but not supported.")
    if shape == (3, {TD1_LINE_LENGTH}):
        raise UnsupportedMrzFormatError("TD1 (3 x 30) MRZ is recognised but not supported.")
    raise MrzParseError(
        f"Unrecognised MRZ shape: {len(lines)} lines of lengths {sorted(shape[1])}."
    )


@dataclass(frozen=True)
class MrzKernels:
    rect: tuple[int, int] = (13, 5)
    square: tuple[int, int] = (21, 21)
    min_width_fraction: float = 0.75
    min_band_aspect: float = 4.0


@dataclass(frozen=True)
class MrzBand:
    box: Box
    score: float

    def to_dict(self) -> dict:
        return {"box": self.box.to_dict(), "score": self.score}


def mrz_band_mask(card: GrayImage, kernels: MrzKernels = MrzKernels()) -> BinaryImage:
    """The binary band mask the locator extracts its candidates from."""
    rect = Kernel.rect(*kernels.rect)
    square = Kernel.rect(*kernels.square)
    smooth = gaussian_blur(card, 1.0)
    hat = morphology(smooth, "blackhat", rect)
    grad = normalize(sobel_x_magnitude(hat))
    grad = morphology(grad, "close", rect)
    binary, _ = otsu_binarize(grad)
    binary = morphology(binary, "close", square)
    return BinaryImage(erode(binary, Kernel.square(3), iterations=2).data)


def locate_mrz(card: GrayImage, kernels: MrzKernels = MrzKernels()) -> MrzBand | None:
    """Lowest wide band of dense dark-on-light text, or None."""
    mask = mrz_band_mask(card, kernels)
    best: MrzBand | None = None
    for node in find_contours(mask):
        if node.is_hole or node.parent is not None:
            continue
        b = node.box
        if b.h == 0 or b.w < kernels.min_width_fraction * card.width:
            continue
        if b.w / b.h <= kernels.min_band_aspect:
            continue
        score = (node.area / b.area) * (b.w / card.width)
        if best is None or b.y1 > best.box.y1:
            best = MrzBand(box=b, score=min(1.0, score))
    return best


def band_center_fraction(band: MrzBand | None, card_height: int) -> float | None:
    if band is None:
        return None
    return (band.box.y0 + band.box.h / 2) / card_height


def _rows(boxes: list[Box]) -> list[list[Box]]:
    if not boxes:
        return []
    heights = sorted(b.h for b in boxes)
    gap = heights[len(heights) // 2] / 2
    ordered = sorted(boxes, key=lambda b: (b.center[1], b.x0))
    rows: list[list[Box]] = [[ordered[0]]]
    for b in ordered[1:]:
        prev = np.mean([r.center[1] for r in rows[-1]])
        if b.center[1] - prev > gap:
            rows.append([b])
        else:
            rows[-1].append(b)
    return [sorted(r, key=lambda b: b.x0) for r in rows]


def extract_and_parse(
    card: GrayImage,
    glyph_reader: GlyphReader,
    kernels: MrzKernels = MrzKernels(),
    layout: LayoutConfig | None = None,
) -> MrzRecord | None:
    """
    Locates the MRZ band, reads every glyph in it and parses the result.

    A row shorter than 44 characters is padded with '<' and the record is
    marked ``padded``.

    Raises:
        MrzParseError: If the band does not hold exactly two rows, a row is
            too long, or the assembled lines fail structural validation.
    """
    band = locate_mrz(card, kernels)
    if band is None:
        return None
    margin = max(4, band.box.h // 8)
    region = band.box.expand(margin, margin).clamp(card.width, card.height)
    glyphs = [
        r.box
        for r in contour_char_boxes(card, layout or LayoutConfig())
        if region.contains(r.box)
    ]
    rows = _rows(glyphs)
    if len(rows) != 2:
        raise MrzParseError(f"MRZ band holds {len(rows)} text rows, expected 2.")

    lines: list[str] = []
    padded = False
    for row in rows:
        if len(row) > TD3_LINE_LENGTH:
            raise MrzParseError(f"MRZ row has {len(row)} glyphs, more than {TD3_LINE_LENGTH}.")
        chars = []
        for b in row:
            try:
                chars.append(glyph_reader(crop(card, b)))
            except ReaderError as e:
                raise MrzParseError(f"Unreadable glyph at {b}: {e}") from e
        line = "".join(chars)
        if len(line) < TD3_LINE_LENGTH:
            padded = True
            line = line.ljust(TD3_LINE_LENGTH, "<")
        lines.append(line)

    record = parse_td3(lines)
    if padded:
        record = replace(record, padded=True)
    return record


def record_lines_valid(record: MrzRecord) -> bool:
    return all(
        len(line) == TD3_LINE_LENGTH and MRZ_ALPHABET_RE.match(line) for line in record.raw_lines
    )

