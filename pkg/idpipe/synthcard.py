"""Deterministic synthetic identity cards with exact ground truth.

Cards are drawn with a bundled 5x7 bitmap font, composited on a dark
canvas, optionally rotated and finally given integer Gaussian noise from a
64-bit linear congruential generator, so that a ``(spec, seed)`` pair always
produces the same bytes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from functools import lru_cache
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ReaderError, SpecError
from .mrz import TD3_LINE_LENGTH, MrzFields, check_digit
from .raster import Box, GrayImage, RotationFrame, otsu_threshold, rotate, to_uint8

GLYPH_ROWS = 7
GLYPH_COLS = 5

# fmt: off
GLYPHS: dict[str, tuple[str, ...]] = {
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", "#...#", ".#.#.", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
    "<": ("...#.", "..#..", ".#...", "#....", ".#...", "..#..", "...#."),
}
# fmt: on

TEXT_RE = re.compile(r"^[A-Z0-9< ]*$")
DATE_RE = re.compile(r"^\d{6}$")
TEXTURE_PERIODS = (9, 13)

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407

Q30 = 1 << 30
LN_STEPS = 1024
TRIG_STEPS = 4096
PI_DECIMAL = Decimal("3.14159265358979323846264338327950288419716939937510")


@dataclass(frozen=True)
class GlyphFont:
    scale: int = 3

    @staticmethod
    def bitmap(c: str) -> np.ndarray:
        try:
            rows = GLYPHS[c]
        except KeyError as e:
            raise SpecError(f"Character {c!r} has no glyph in the bundled font.") from e
        return np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)

    def glyph(self, c: str) -> np.ndarray:
        return np.kron(self.bitmap(c), np.ones((self.scale, self.scale), dtype=bool))

    @property
    def cell_width(self) -> int:
        return GLYPH_COLS * self.scale

    @property
    def cell_height(self) -> int:
        return GLYPH_ROWS * self.scale

    def pitch(self, spacing_cols: int) -> int:
        return (GLYPH_COLS + spacing_cols) * self.scale

    def text_width(self, text: str, spacing_cols: int) -> int:
        if not text:
            return 0
        return len(text) * self.pitch(spacing_cols) - spacing_cols * self.scale

    def draw(
        self, canvas: np.ndarray, x: int, y: int, text: str, ink: int, spacing_cols: int = 1
    ) -> list[tuple[str, Box]]:
        """Draw ``text`` in place; returns the ink box of every drawn glyph."""
        boxes = []
        pitch = self.pitch(spacing_cols)
        for i, c in enumerate(text):
            if c == " ":
                continue
            mask = self.glyph(c)
            gx = x + i * pitch
            region = canvas[y : y + self.cell_height, gx : gx + self.cell_width]
            region[mask] = ink
            ys, xs = np.nonzero(mask)
            boxes.append(
                (c, Box.from_corners(gx + int(xs.min()), y + int(ys.min()), gx + int(xs.max()) + 1, y + int(ys.max()) + 1))
            )
        return boxes


def _mrz_field(value: str, length: int, name: str) -> str:
    v = value.upper().replace(" ", "<")
    if not re.match(r"^[A-Z0-9<]*$", v):
        raise SpecError(f"MRZ field {name} holds characters outside [A-Z0-9<]: {value!r}.")
    if len(v) > length:
        raise SpecError(f"MRZ field {name} is {len(v)} characters long, the limit is {length}.")
    return v.ljust(length, "<")


def _mrz_date(value: str, name: str) -> str:
    if not DATE_RE.match(value):
        raise SpecError(f"MRZ date {name} must be YYMMDD, got {value!r}.")
    return value


def gen_mrz_lines(fields: MrzFields) -> tuple[str, str]:
    """
    Renders MRZ fields into the two 44-character TD3 lines.

    Raises:
        SpecError: For an overlong field or a character outside the MRZ alphabet.
    """
    names = _mrz_field(fields.surname, TD3_LINE_LENGTH, "surname").rstrip("<")
    given = fields.given_names.strip()
    if given:
        names += "<<" + _mrz_field(given, TD3_LINE_LENGTH, "given_names").rstrip("<")
    if len(names) > 39:
        raise SpecError(f"Names take {len(names)} characters, the limit is 39.")
    line1 = (
        _mrz_field(fields.doc_type, 2, "doc_type")
        + _mrz_field(fields.issuing_state, 3, "issuing_state")
        + names.ljust(39, "<")
    )

    doc = _mrz_field(fields.doc_number, 9, "doc_number")
    birth = _mrz_date(fields.birth_date, "birth_date")
    expiry = _mrz_date(fields.expiry_date, "expiry_date")
    personal = _mrz_field(fields.personal_number, 14, "personal_number")
    sex = fields.sex if fields.sex in ("M", "F") else "<"
    line2 = (
        doc
        + str(check_digit(doc))
        + _mrz_field(fields.nationality, 3, "nationality")
        + birth
        + str(check_digit(birth))
        + sex
        + expiry
        + str(check_digit(expiry))
        + personal
        + str(check_digit(personal))
    )
    line2 += str(check_digit(line2[0:10] + line2[13:20] + line2[21:43]))
    return line1, line2


@dataclass(frozen=True)
class TextLine:
    row: int
    column: int
    text: str


@dataclass(frozen=True)
class CardSpec:
    card_w: int = 1004
    card_h: int = 636
    canvas: int = 40
    rotation: float = 0.0
    noise_sigma: float = 0.0
    texture_amplitude: float = 0.0
    text_lines: tuple[TextLine, ...] = ()
    mrz: MrzFields | None = None
    mrz_origin: tuple[int, int] = (43, 520)
    photo: Box | None = None
    seed: int = 0
    card_value: int = 235
    canvas_value: int = 40
    ink_value: int = 20
    photo_value: int = 60
    scale: int = 3

    def __post_init__(self) -> None:
        if self.card_w < 1 or self.card_h < 1 or self.canvas < 0:
            raise SpecError("Card and canvas dimensions must be positive.")
        if not 0 <= self.texture_amplitude <= 60:
            raise SpecError(f"Texture amplitude must lie in 0..60, got {self.texture_amplitude}.")
        if self.noise_sigma < 0:
            raise SpecError(f"Noise sigma must be >= 0, got {self.noise_sigma}.")
        font = GlyphFont(self.scale)
        for line in self.text_lines:
            if not TEXT_RE.match(line.text):
                raise SpecError(f"Text line {line.text!r} holds characters outside [A-Z0-9< ].")
            if (
                line.column < 0
                or line.row < 0
                or line.column + font.text_width(line.text, 1) > self.card_w
                or line.row + font.cell_height > self.card_h
            ):
                raise SpecError(f"Text line {line.text!r} does not fit on the card.")
        if self.photo is not None and not Box(0, 0, self.card_w, self.card_h).contains(self.photo):
            raise SpecError(f"Photo box {self.photo} does not fit on the card.")

    @property
    def font(self) -> GlyphFont:
        return GlyphFont(self.scale)

    @classmethod
    def passport(cls, fields: MrzFields, **overrides: Any) -> "CardSpec":
        """A passport data page: title, six field lines, photo and a two-line MRZ."""
        sex = {"M": "M", "F": "F"}.get(fields.sex, "X")
        values = (
            fields.surname,
            fields.given_names,
            fields.nationality,
            fields.birth_date,
            sex,
            fields.doc_number,
        )
        lines = [TextLine(40, 330, "PASSPORT " + fields.issuing_state)]
        lines += [TextLine(100 + 50 * i, 330, v[:36]) for i, v in enumerate(values)]
        params: dict[str, Any] = {
            "text_lines": tuple(lines),
            "mrz": fields,
            "photo": Box(40, 90, 240, 300),
        }
        params.update(overrides)
        return cls(**params)

    @classmethod
    def from_dict(cls, raw: dict) -> "CardSpec":
        """Builds a spec from a YAML/JSON mapping; ``preset: passport`` selects the passport layout."""
        data = dict(raw)
        preset = data.pop("preset", None)
        data.pop("name", None)
        if "text_lines" in data:
            data["text_lines"] = tuple(
                TextLine(int(t["row"]), int(t["column"]), str(t["text"])) for t in data["text_lines"]
            )
        if data.get("photo") is not None:
            data["photo"] = Box.from_dict(data["photo"])
        if "mrz_origin" in data:
            data["mrz_origin"] = tuple(data["mrz_origin"])
        mrz = data.pop("mrz", None)
        fields = MrzFields(**{k: str(v) for k, v in mrz.items()}) if mrz else None
        try:
            if preset == "passport":
                if fields is None:
                    raise SpecError("The passport preset needs 'mrz' fields.")
                return cls.passport(fields, **data)
            if preset is not None:
                raise SpecError(f"Unknown card preset '{preset}'.")
            return cls(mrz=fields, **data)
        except TypeError as e:
            raise SpecError(f"Invalid card spec: {e}") from e


@dataclass
class GroundTruth:
    card_box: Box
    card_corners: list[tuple[float, float]]
    glyph_boxes: list[tuple[str, Box]] = field(default_factory=list)
    line_boxes: list[Box] = field(default_factory=list)
    mrz_band: Box | None = None
    mrz_lines: tuple[str, str] | None = None
    photo_box: Box | None = None
    rotation: float = 0.0

    def to_json(self) -> dict:
        return {
            "card_box": self.card_box.to_dict(),
            "card_corners": [[round(x, 3), round(y, 3)] for x, y in self.card_corners],
            "glyph_boxes": [{"char": c, "box": b.to_dict()} for c, b in self.glyph_boxes],
            "line_boxes": [b.to_dict() for b in self.line_boxes],
            "mrz_band": self.mrz_band.to_dict() if self.mrz_band else None,
            "mrz_lines": list(self.mrz_lines) if self.mrz_lines else None,
            "photo_box": self.photo_box.to_dict() if self.photo_box else None,
            "rotation": self.rotation,
        }


def lcg_sequence(seed: int, count: int) -> np.ndarray:
    """The first ``count`` outputs of the 64-bit LCG started at ``seed``.

    Vectorised by jump-ahead: having the affine maps ``x -> A_j x + C_j`` for
    ``j < m``, the maps for ``m <= j < 2m`` follow from composing with the
    ``m``-step map. All arithmetic wraps modulo 2**64.
    """
    if count <= 0:
        return np.zeros(0, dtype=np.uint64)
    a = np.array([LCG_MULTIPLIER], dtype=np.uint64)
    c = np.array([LCG_INCREMENT], dtype=np.uint64)
    mult = a.copy()
    inc = c.copy()
    while len(mult) < count:
        step_a, step_c = mult[-1:], inc[-1:]
        mult = np.concatenate([mult, mult * step_a])
        inc = np.concatenate([inc, mult[: len(inc)] * step_c + inc])
    x0 = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return (mult[:count] * x0 + inc[:count]).astype(np.uint64)


def _decimal_cos(x: Decimal) -> Decimal:
    term = Decimal(1)
    total = Decimal(1)
    k = 0
    while abs(term) > Decimal("1e-38"):
        k += 2
        term = -term * x * x / (k * (k - 1))
        total += term
    return total


@lru_cache(maxsize=1)
def _noise_tables() -> tuple[np.ndarray, np.ndarray, int]:
    """Q30 tables of ln(1 + i/1024), cos over a whole turn in 4096 steps, and ln 2.

    Built with decimal arithmetic, so they are identical on every platform.
    """
    one = Decimal(Q30)
    with localcontext() as ctx:
        ctx.prec = 40
        ln = [int((Decimal(1) + Decimal(i) / LN_STEPS).ln() * one + Decimal("0.5")) for i in range(LN_STEPS + 1)]
        ln2 = int(Decimal(2).ln() * one + Decimal("0.5"))
        quarter_steps = TRIG_STEPS // 4
        quarter = [
            int((_decimal_cos(PI_DECIMAL / 2 * j / quarter_steps) * one).to_integral_value(rounding=ROUND_HALF_EVEN))
            for j in range(quarter_steps + 1)
        ]
    half = TRIG_STEPS // 2
    cos = [
        quarter[k] if k <= quarter_steps
        else -quarter[half - k] if k <= half
        else -quarter[k - half] if k <= half + quarter_steps
        else quarter[TRIG_STEPS - k]
        for k in range(TRIG_STEPS + 1)
    ]
    return np.array(ln, dtype=np.int64), np.array(cos, dtype=np.int64), ln2


def _bit_length(values: np.ndarray) -> np.ndarray:
    """Index of the highest set bit of positive int64 values below 2**64."""
    e = np.zeros(values.shape, dtype=np.int64)
    v = values.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        high = v >= (1 << shift)
        e[high] += shift
        v[high] >>= shift
    return e


def _interpolate(table: np.ndarray, frac: np.ndarray, bits: int) -> np.ndarray:
    """Linear table lookup of a fraction with ``bits`` sub-index bits, in integers."""
    idx = frac >> bits
    rem = frac & ((1 << bits) - 1)
    return table[idx] + (((table[idx + 1] - table[idx]) * rem) >> bits)


def gaussian_noise(seed: int, count: int, sigma: float) -> np.ndarray:
    """Integer N(0, sigma^2) deviates via Box-Muller over LCG uniforms.

    The logarithm and the cosine/sine are evaluated in Q30 fixed point from
    tables; the only floating-point steps left are a square root and
    products, which IEEE rounding makes identical on every platform.
    """
    pairs = (count + 1) // 2
    raw = lcg_sequence(seed, 2 * pairs)
    ln_table, cos_table, ln2 = _noise_tables()

    # u1 = (2a + 1) / 2**33 lies strictly inside (0, 1).
    m = 2 * (raw[0::2] >> np.uint64(32)).astype(np.int64) + 1
    e = _bit_length(m)
    frac = (m << (32 - e)) - (1 << 32)
    ln_m = e * ln2 + _interpolate(ln_table, frac, 22)
    minus_two_ln_u1 = np.maximum(2 * (33 * ln2 - ln_m), 0)
    radius = np.sqrt(minus_two_ln_u1.astype(np.float64)) / float(1 << 15)

    phase = (raw[1::2] >> np.uint64(32)).astype(np.int64)
    cos_q = _interpolate(cos_table, phase, 20)
    sin_q = _interpolate(cos_table, (phase - (1 << 30)) & 0xFFFFFFFF, 20)
    z = np.empty(2 * pairs)
    z[0::2] = radius * (cos_q.astype(np.float64) / Q30)
    z[1::2] = radius * (sin_q.astype(np.float64) / Q30)
    return np.floor(sigma * z[:count] + 0.5).astype(np.int64)


def add_noise(img: GrayImage, sigma: float, seed: int) -> GrayImage:
    if sigma <= 0:
        return img
    noise = gaussian_noise(seed, img.width * img.height, sigma).reshape(img.height, img.width)
    return GrayImage(np.clip(img.data.astype(np.int64) + noise, 0, 255).astype(np.uint8))


def texture(width: int, height: int, amplitude: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    px, py = TEXTURE_PERIODS
    return amplitude * (np.sin(2 * math.pi * xs / px) + np.sin(2 * math.pi * ys / py)) / 2


def _draw_photo(card: np.ndarray, photo: Box, value: int) -> None:
    card[photo.y0 : photo.y1, photo.x0 : photo.x1] = value
    cy, cx = photo.y0 + photo.h * 0.45, photo.x0 + photo.w / 2
    ry, rx = photo.h * 0.32, photo.w * 0.3
    ys, xs = np.mgrid[photo.y0 : photo.y1, photo.x0 : photo.x1]
    head = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    card[photo.y0 : photo.y1, photo.x0 : photo.x1][head] = min(255, value + 60)


def render_card(spec: CardSpec) -> tuple[GrayImage, GroundTruth]:
    """Draw the card described by ``spec`` and return it with its ground truth."""
    font = spec.font
    card = np.full((spec.card_h, spec.card_w), float(spec.card_value))
    if spec.texture_amplitude:
        card += texture(spec.card_w, spec.card_h, spec.texture_amplitude)
    card = to_uint8(card)

    if spec.photo is not None:
        _draw_photo(card, spec.photo, spec.photo_value)

    glyphs: list[tuple[str, Box]] = []
    line_boxes: list[Box] = []
    for line in spec.text_lines:
        drawn = font.draw(card, line.column, line.row, line.text, spec.ink_value, spacing_cols=1)
        glyphs += drawn
        if drawn:
            line_boxes.append(_union([b for _, b in drawn]))

    mrz_lines = None
    mrz_band = None
    if spec.mrz is not None:
        mrz_lines = gen_mrz_lines(spec.mrz)
        mx, my = spec.mrz_origin
        row_pitch = font.cell_height + 4 * spec.scale
        if mx + font.text_width(mrz_lines[0], 2) > spec.card_w or my + row_pitch + font.cell_height > spec.card_h:
            raise SpecError("The MRZ does not fit on the card.")
        mrz_glyphs = []
        for i, text in enumerate(mrz_lines):
            drawn = font.draw(card, mx, my + i * row_pitch, text, spec.ink_value, spacing_cols=2)
            mrz_glyphs += drawn
            line_boxes.append(_union([b for _, b in drawn]))
        glyphs += mrz_glyphs
        mrz_band = _union([b for _, b in mrz_glyphs])

    frame = np.full((spec.card_h + 2 * spec.canvas, spec.card_w + 2 * spec.canvas), spec.canvas_value, dtype=np.uint8)
    frame[spec.canvas : spec.canvas + spec.card_h, spec.canvas : spec.canvas + spec.card_w] = card
    image = GrayImage(frame)
    offset = spec.canvas

    def shift(b: Box) -> Box:
        return b.translate(offset, offset)

    card_box = Box(offset, offset, spec.card_w, spec.card_h)
    corners = [
        (float(card_box.x0), float(card_box.y0)),
        (float(card_box.x1), float(card_box.y0)),
        (float(card_box.x1), float(card_box.y1)),
        (float(card_box.x0), float(card_box.y1)),
    ]
    truth = GroundTruth(
        card_box=card_box,
        card_corners=corners,
        glyph_boxes=[(c, shift(b)) for c, b in glyphs],
        line_boxes=[shift(b) for b in line_boxes],
        mrz_band=shift(mrz_band) if mrz_band else None,
        mrz_lines=mrz_lines,
        photo_box=shift(spec.photo) if spec.photo else None,
        rotation=spec.rotation,
    )

    if spec.rotation:
        rotation_frame = RotationFrame(image.width, image.height, spec.rotation)
        image = rotate(image, spec.rotation, fill=spec.canvas_value)
        truth = _rotate_truth(truth, rotation_frame)

    return add_noise(image, spec.noise_sigma, spec.seed), truth


def _union(boxes: Sequence[Box]) -> Box:
    out = boxes[0]
    for b in boxes[1:]:
        out = out.union(b)
    return out


def _rotate_truth(truth: GroundTruth, frame: RotationFrame) -> GroundTruth:
    corners = frame.map_edge_points(truth.card_corners)
    return replace(
        truth,
        card_box=Box.bounding(corners),
        card_corners=corners,
        glyph_boxes=[(c, frame.map_box(b)) for c, b in truth.glyph_boxes],
        line_boxes=[frame.map_box(b) for b in truth.line_boxes],
        mrz_band=frame.map_box(truth.mrz_band) if truth.mrz_band else None,
        photo_box=frame.map_box(truth.photo_box) if truth.photo_box else None,
    )


def _tight(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _resize_nearest(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    rows = np.floor((np.arange(height) + 0.5) * mask.shape[0] / height).astype(int)
    cols = np.floor((np.arange(width) + 0.5) * mask.shape[1] / width).astype(int)
    return mask[rows][:, cols]


def glyph_reader_for(font: GlyphFont = GlyphFont(), min_contrast: int = 32) -> Callable[[GrayImage], str]:
    """
    Nearest-bitmap reader for glyphs drawn with ``font``.

    The glyph image is binarized with Otsu, cropped to its ink and compared
    against every font bitmap (cropped the same way and resized by nearest
    neighbour to the ink size); the bitmap with the smallest Hamming distance
    wins, ties going to the earlier character.
    """
    templates = [(c, _tight(GlyphFont.bitmap(c))) for c in GLYPHS]

    def read(glyph: GrayImage) -> str:
        data = glyph.data
        if int(data.max()) - int(data.min()) < min_contrast:
            raise ReaderError("Glyph box holds no ink.")
        ink = data <= otsu_threshold(data)
        ink = _tight(ink)
        h, w = ink.shape
        best_char, best_dist = "<", np.inf
        for c, bitmap in templates:
            dist = np.count_nonzero(_resize_nearest(bitmap, h, w) != ink)
            if dist < best_dist:
                best_char, best_dist = c, dist
        return best_char

    return read
