import math
from dataclasses import replace

import numpy as np
import pytest

from idpipe.errors import ReaderError, SpecError
from idpipe.mrz import parse_td3
from idpipe.raster import Box, GrayImage, RotationFrame, crop
from idpipe.synthcard import (
    GLYPHS,
    CardSpec,
    GlyphFont,
    TextLine,
    Q30,
    _noise_tables,
    gaussian_noise,
    gen_mrz_lines,
    lcg_sequence,
    render_card,
)

from .conftest import SPECIMEN_LINES


def _tight(mask):
    ys, xs = np.nonzero(mask)
    return mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def test_glyph_bitmaps_are_distinct():
    """Tests that no two characters share a bitmap, even after cropping to ink."""
    shapes = {c: _tight(GlyphFont.bitmap(c)) for c in GLYPHS}
    for a in GLYPHS:
        for b in GLYPHS:
            if a < b:
                assert shapes[a].shape != shapes[b].shape or (shapes[a] != shapes[b]).any(), (a, b)
    with pytest.raises(SpecError):
        GlyphFont.bitmap("a")


def test_gen_mrz_lines_specimen(passport_fields):
    assert gen_mrz_lines(passport_fields) == SPECIMEN_LINES


def test_gen_mrz_lines_empty_personal_number(passport_fields):
    fields = replace(passport_fields, personal_number="")
    _, l2 = gen_mrz_lines(fields)
    assert l2[28:43] == "<" * 14 + "0"
    assert parse_td3(gen_mrz_lines(fields)).valid


def test_gen_mrz_lines_rejects(passport_fields):
    with pytest.raises(SpecError):
        gen_mrz_lines(replace(passport_fields, doc_number="1234567890"))
    with pytest.raises(SpecError):
        gen_mrz_lines(replace(passport_fields, surname="X" * 30, given_names="Y" * 10))
    with pytest.raises(SpecError):
        gen_mrz_lines(replace(passport_fields, birth_date="7408"))


def test_card_spec_validation():
    """Tests the texture range, the text alphabet and placement checks."""
    with pytest.raises(SpecError):
        CardSpec(texture_amplitude=70)
    with pytest.raises(SpecError):
        CardSpec(text_lines=(TextLine(10, 10, "lower"),))
    with pytest.raises(SpecError):
        CardSpec(text_lines=(TextLine(630, 10, "LOW"),))
    with pytest.raises(SpecError):
        CardSpec(photo=Box(900, 10, 200, 100))
    with pytest.raises(SpecError):
        CardSpec(noise_sigma=-1)


def test_card_spec_from_dict(passport_fields):
    raw = {
        "name": "sample",
        "preset": "passport",
        "rotation": 5,
        "seed": 7,
        "mrz": {k: v for k, v in passport_fields.__dict__.items()},
    }
    spec = CardSpec.from_dict(raw)
    assert spec == CardSpec.passport(passport_fields, rotation=5, seed=7)

    plain = CardSpec.from_dict(
        {"text_lines": [{"row": 10, "column": 20, "text": "HI"}], "photo": {"x0": 1, "y0": 2, "w": 30, "h": 40}}
    )
    assert plain.text_lines == (TextLine(10, 20, "HI"),)
    assert plain.photo == Box(1, 2, 30, 40)

    with pytest.raises(SpecError):
        CardSpec.from_dict({"preset": "driving_licence"})
    with pytest.raises(SpecError):
        CardSpec.from_dict({"preset": "passport"})
    with pytest.raises(SpecError):
        CardSpec.from_dict({"colour": "blue"})


def test_render_card_placement_and_determinism(passport):
    """An unrotated card sits exactly at the canvas offset; rendering twice gives the same bytes."""
    image, truth = passport
    assert truth.card_box == Box(40, 40, 1004, 636)
    assert image.size == (1084, 716)
    assert truth.mrz_lines == SPECIMEN_LINES
    assert len(truth.line_boxes) == 9
    assert image.data[40:676, 40:1044].max() == 235
    assert image.data[:40].max() == 40

    spec = CardSpec(text_lines=(TextLine(30, 30, "SAME"),), noise_sigma=6, seed=3, card_w=200, card_h=126)
    first, _ = render_card(spec)
    second, _ = render_card(spec)
    third, _ = render_card(replace(spec, seed=4))
    assert first == second
    assert first != third


def test_render_card_rotated_truth():
    """Ground-truth corners follow the rotation of the canvas about its centre."""
    spec = CardSpec(card_w=300, card_h=190, canvas=30, rotation=30.0)
    image, truth = render_card(spec)
    w, h = 300 + 60, 190 + 60
    ow, oh = RotationFrame(w, h, 30.0).out_size
    assert image.size == (ow, oh)
    c, s = math.cos(math.radians(30)), math.sin(math.radians(30))
    corners = [(30, 30), (330, 30), (330, 220), (30, 220)]
    for (x, y), (rx, ry) in zip(corners, truth.card_corners):
        ex = ow / 2 + c * (x - w / 2) + s * (y - h / 2)
        ey = oh / 2 - s * (x - w / 2) + c * (y - h / 2)
        assert abs(rx - ex) <= 0.5 and abs(ry - ey) <= 0.5
    assert truth.rotation == 30.0


def test_render_card_texture():
    flat, _ = render_card(CardSpec(card_w=100, card_h=64, canvas=0))
    textured, _ = render_card(CardSpec(card_w=100, card_h=64, canvas=0, texture_amplitude=30))
    assert flat.data.std() == 0
    assert textured.data.std() > 5


def test_truth_json(passport):
    _, truth = passport
    doc = truth.to_json()
    assert doc["card_box"] == {"x0": 40, "y0": 40, "w": 1004, "h": 636}
    assert doc["mrz_lines"] == list(SPECIMEN_LINES)
    assert {"char", "box"} == set(doc["glyph_boxes"][0])
    assert doc["rotation"] == 0.0


def test_lcg_sequence_matches_integer_recurrence():
    seed = 123456789
    expected = []
    x = seed
    for _ in range(100):
        x = (6364136223846793005 * x + 1442695040888963407) % 2**64
        expected.append(x)
    assert lcg_sequence(seed, 100).tolist() == expected
    assert lcg_sequence(seed, 0).size == 0


def test_gaussian_noise_statistics():
    noise = gaussian_noise(11, 100_001, 8.0)
    assert noise.shape == (100_001,)
    assert abs(noise.mean()) < 0.2
    assert noise.std() == pytest.approx(8.0, rel=0.05)
    assert np.array_equal(noise, gaussian_noise(11, 100_001, 8.0))


def test_noise_tables_match_float_math():
    ln_table, cos_table, ln2 = _noise_tables()
    assert ln2 / Q30 == pytest.approx(math.log(2), abs=1e-8)
    for i in (0, 1, 377, 1023, 1024):
        assert ln_table[i] / Q30 == pytest.approx(math.log1p(i / 1024), abs=1e-8)
    for k in (0, 1, 1024, 1500, 2048, 3000, 4095, 4096):
        assert cos_table[k] / Q30 == pytest.approx(math.cos(2 * math.pi * k / 4096), abs=1e-8)


def test_gaussian_noise_needs_no_float_transcendentals(monkeypatch):
    """Tests that noise is produced without the platform log, cos and sin."""
    expected = gaussian_noise(5, 2001, 10.0)

    def refuse(*args, **kwargs):
        raise AssertionError("float transcendental used")

    for name in ("log", "cos", "sin"):
        monkeypatch.setattr(np, name, refuse)
    assert np.array_equal(gaussian_noise(5, 2001, 10.0), expected)


def test_gaussian_noise_follows_float_box_muller():
    """Tests that the fixed-point deviates stay within one unit of the float formula on the same uniforms."""
    seed, count, sigma = 42, 20_000, 12.0
    raw = lcg_sequence(seed, count)
    a = (raw[0::2] >> np.uint64(32)).astype(np.float64)
    phase = (raw[1::2] >> np.uint64(32)).astype(np.float64)
    radius = np.sqrt(-2.0 * np.log((2 * a + 1) / 2.0**33))
    angle = 2 * math.pi * phase / 2.0**32
    z = np.empty(count)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    reference = np.floor(sigma * z + 0.5)
    assert np.abs(gaussian_noise(seed, count, sigma) - reference).max() <= 1


def _glyph_image(c, margin=3):
    font = GlyphFont()
    canvas = np.full((font.cell_height + 2 * margin, font.cell_width + 2 * margin), 230, dtype=np.uint8)
    font.draw(canvas, margin, margin, c, 20)
    return canvas


def test_glyph_reader_reads_every_clean_glyph(glyph_reader):
    for c in GLYPHS:
        assert glyph_reader(GrayImage(_glyph_image(c))) == c


@pytest.mark.parametrize("c", list("KX0O8B5S1I<"))
def test_glyph_reader_tolerates_flipped_pixels(c, glyph_reader):
    """Five percent of the pixels inside the glyph's ink box are inverted."""
    data = _glyph_image(c)
    ys, xs = np.nonzero(data == 20)
    inner = data[ys.min() + 1 : ys.max(), xs.min() + 1 : xs.max()]
    rng = np.random.default_rng(ord(c))
    picks = rng.choice(inner.size, size=int(0.05 * inner.size), replace=False)
    py, px = np.unravel_index(picks, inner.shape)
    inner[py, px] = np.where(inner[py, px] == 20, 230, 20)
    assert glyph_reader(GrayImage(data)) == c


def test_glyph_reader_rejects_blank_box(glyph_reader):
    with pytest.raises(ReaderError):
        glyph_reader(GrayImage.filled(15, 21, 230))


def test_glyph_reader_on_rendered_card(passport, glyph_reader):
    image, truth = passport
    for c, box in truth.glyph_boxes[:20]:
        assert glyph_reader(crop(image, box)) == c
