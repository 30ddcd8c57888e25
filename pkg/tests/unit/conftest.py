import pytest
from unittest.mock import MagicMock

from idpipe.mrz import MrzFields
from idpipe.synthcard import CardSpec, GlyphFont, glyph_reader_for, render_card

SPECIMEN_LINES = (
    "P<UTOERIKSSON<<ANNA<MARIA<<<<<<<<<<<<<<<<<<<",
    "L898902C36UTO7408122F1204159ZE184226B<<<<<10",
)


@pytest.fixture
def app_logger():
    """Fixture for a mock logger."""
    return MagicMock()


@pytest.fixture
def specimen_lines():
    return list(SPECIMEN_LINES)


@pytest.fixture(scope="session")
def passport_fields():
    return MrzFields(
        doc_type="P",
        issuing_state="UTO",
        surname="ERIKSSON",
        given_names="ANNA MARIA",
        doc_number="L898902C3",
        nationality="UTO",
        birth_date="740812",
        sex="F",
        expiry_date="120415",
        personal_number="ZE184226B",
    )


@pytest.fixture(scope="session")
def passport(passport_fields):
    """A clean, unrotated passport page on its canvas with ground truth."""
    return render_card(CardSpec.passport(passport_fields))


@pytest.fixture(scope="session")
def glyph_reader():
    return glyph_reader_for(GlyphFont())
