import itertools
import random
import string

import pytest

from idpipe.errors import AlphabetError, MrzParseError, UnsupportedMrzFormatError
from idpipe.mrz import (
    MrzFields,
    band_center_fraction,
    check_digit,
    extract_and_parse,
    fields_of,
    locate_mrz,
    mrz_char_value,
    parse_mrz,
    parse_td3,
    record_lines_valid,
)
from idpipe.raster import crop
from idpipe.synthcard import CardSpec, TextLine, gen_mrz_lines, render_card

ALPHABET = "<" + string.digits + string.ascii_uppercase


def _oracle_digit(s):
    values = {c: i for i, c in enumerate(string.digits + string.ascii_uppercase)}
    values["<"] = 0
    return sum(values[c] * (7, 3, 1)[i % 3] for i, c in enumerate(s)) % 10


@pytest.fixture(scope="module")
def passport_card(passport):
    image, truth = passport
    return crop(image, truth.card_box), truth


@pytest.mark.parametrize("c, value", [("<", 0), ("0", 0), ("7", 7), ("A", 10), ("Z", 35)])
def test_mrz_char_value(c, value):
    assert mrz_char_value(c) == value


@pytest.mark.parametrize("c", ["a", "-", " ", "AB", ""])
def test_mrz_char_value_rejects(c):
    with pytest.raises(AlphabetError):
        mrz_char_value(c)


@pytest.mark.parametrize(
    "s, digit",
    [("<<<<<<", 0), ("111", 1), ("L898902C3", 6), ("740812", 2), ("120415", 9), ("", 0)],
)
def test_check_digit(s, digit):
    assert check_digit(s) == digit


def test_check_digit_matches_oracle_on_all_three_char_strings():
    for chars in itertools.product(ALPHABET, repeat=3):
        s = "".join(chars)
        assert check_digit(s) == _oracle_digit(s), s


def test_check_digit_catches_most_single_char_changes():
    """A single substituted character changes the digit in at least 85% of samples."""
    rng = random.Random(9303)
    changed = 0
    trials = 2000
    for _ in range(trials):
        s = [rng.choice(ALPHABET) for _ in range(9)]
        i = rng.randrange(9)
        mutated = list(s)
        mutated[i] = rng.choice(ALPHABET.replace(s[i], ""))
        changed += check_digit("".join(s)) != check_digit("".join(mutated))
    assert changed >= 0.85 * trials


def test_parse_td3_specimen(specimen_lines):
    """Tests the specimen passport: names, fields and five passing checks."""
    record = parse_td3(specimen_lines)
    assert (record.surname, record.given_names) == ("ERIKSSON", "ANNA MARIA")
    assert record.doc_type == "P" and record.issuing_state == "UTO"
    assert record.doc_number == "L898902C3"
    assert (record.birth_date, record.sex, record.expiry_date) == ("740812", "F", "120415")
    assert record.valid and record.valid_score == 100
    assert set(record.checks) == {"doc_number", "birth", "expiry", "personal", "composite"}
    assert record.to_dict()["valid"] is True
    assert parse_mrz(specimen_lines) == record


def test_parse_td3_failed_check_is_data(specimen_lines):
    l2 = specimen_lines[1]
    record = parse_td3([specimen_lines[0], l2[:9] + "7" + l2[10:]])
    verdict = record.checks["doc_number"]
    assert not verdict.passed
    assert (verdict.expected, verdict.found) == ("6", "7")
    assert "doc_number" in record.failed_checks
    assert not record.valid and record.valid_score < 100


@pytest.mark.parametrize(
    "lines",
    [
        ["P<UTO" + "<" * 38, "L898902C36UTO7408122F1204159ZE184226B<<<<<10"],
        ["P<UTOERIKSSON<<ANNA<MARIA<<<<<<<<<<<<<<<<<<<"],
        ["p<utoERIKSSON<<ANNA<MARIA<<<<<<<<<<<<<<<<<<<", "L898902C36UTO7408122F1204159ZE184226B<<<<<10"],
    ],
)
def test_parse_td3_structural_errors(lines):
    with pytest.raises(MrzParseError):
        parse_td3(lines)


def test_parse_mrz_dispatch():
    with pytest.raises(UnsupportedMrzFormatError):
        parse_mrz(["<" * 30] * 3)
    with pytest.raises(UnsupportedMrzFormatError):
        parse_mrz(["<" * 36] * 2)
    with pytest.raises(MrzParseError):
        parse_mrz(["<" * 10])


def _random_fields(rng):
    def word(n):
        return "".join(rng.choice(string.ascii_uppercase) for _ in range(n))

    def alnum(n):
        return "".join(rng.choice(string.ascii_uppercase + string.digits) for _ in range(n))

    def date():
        return "".join(rng.choice(string.digits) for _ in range(6))

    return MrzFields(
        doc_type=rng.choice(["P", "PD"]),
        issuing_state=word(3),
        surname=" ".join(word(rng.randint(2, 8)) for _ in range(rng.randint(1, 2))),
        given_names=" ".join(word(rng.randint(2, 6)) for _ in range(rng.randint(1, 2))),
        doc_number=alnum(rng.randint(1, 9)),
        nationality=word(3),
        birth_date=date(),
        sex=rng.choice(["M", "F"]),
        expiry_date=date(),
        personal_number=alnum(rng.randint(0, 14)),
    )


def test_generated_lines_parse_back_to_fields():
    """Tests that rendering then parsing 200 random records gives the same fields back."""
    rng = random.Random(44)
    for _ in range(200):
        fields = _random_fields(rng)
        record = parse_td3(gen_mrz_lines(fields))
        assert record.valid
        assert fields_of(record) == fields


def test_locate_mrz_on_passport(passport_card):
    card, truth = passport_card
    band = locate_mrz(card)
    assert band is not None
    expected = truth.mrz_band.translate(-truth.card_box.x0, -truth.card_box.y0)
    got = band.box
    offsets = (got.x0 - expected.x0, got.y0 - expected.y0, got.x1 - expected.x1, got.y1 - expected.y1)
    assert max(abs(d) for d in offsets) <= 8
    assert band.score >= 0.5
    assert band_center_fraction(band, card.height) > 0.5


def test_locate_mrz_absent_and_lowest():
    """Tests a card without an MRZ and a card with a wide address line above the MRZ."""
    plain, _ = render_card(CardSpec(text_lines=(TextLine(100, 40, "HELLO WORLD"),), canvas=0))
    assert locate_mrz(plain) is None
    assert band_center_fraction(None, 100) is None

    fields = MrzFields("P", "UTO", "DOE", "JANE", "X1", "UTO", "800101", "F", "300101")
    address = TextLine(300, 20, "1 LONG STREET NAME THAT SPANS MOST OF THE CARD")
    card, _ = render_card(CardSpec(text_lines=(address,), mrz=fields, canvas=0))
    band = locate_mrz(card)
    assert band is not None
    assert band.box.y0 > 450


def test_extract_and_parse_round_trip(passport_card, passport_fields, glyph_reader):
    """The glyphs read out of the rendered MRZ parse back to the generating fields."""
    card, truth = passport_card
    record = extract_and_parse(card, glyph_reader)
    assert record is not None
    assert record.raw_lines == truth.mrz_lines
    assert record.valid and not record.padded
    assert fields_of(record) == passport_fields
    assert record_lines_valid(record)


def test_extract_and_parse_without_mrz(glyph_reader):
    plain, _ = render_card(CardSpec(text_lines=(TextLine(100, 40, "NO ZONE HERE"),), canvas=0))
    assert extract_and_parse(plain, glyph_reader) is None
