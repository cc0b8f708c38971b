from pathlib import Path

import pytest

from s2sg.model import NormalizedRect, Role, ScriptSentence, SentenceElement, SlideUnit, StyleInfo, TextObjectGroup

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def make_unit(slide_number: int = 1, with_positions: bool = True) -> SlideUnit:
    """Title object plus a two-level bulleted body; sentences cover both."""

    def rect(k):
        return NormalizedRect(0.1, 0.2 + 0.1 * k, 0.9, 0.3 + 0.1 * k) if with_positions else None

    title = TextObjectGroup(
        "g1",
        (SentenceElement("s1", "Cache design", 0, (), rect(-1)),),
        StyleInfo(40.0, rect(-1), Role.TITLE),
    )
    body = TextObjectGroup(
        "g2",
        (
            SentenceElement(
                "s2",
                "Goals",
                0,
                (
                    SentenceElement("s3", "Lower latency", 1, (), rect(1)),
                    SentenceElement("s4", "Higher hit rate", 1, (), rect(2)),
                ),
                rect(0),
            ),
            SentenceElement("s5", "Costs", 0, (), rect(3)),
        ),
        StyleInfo(24.0, NormalizedRect(0.1, 0.2, 0.9, 0.6) if with_positions else None, Role.BODY),
    )
    sentences = (
        ScriptSentence(0, "Our goals are about latency."),
        ScriptSentence(1, "The hit rate should go up."),
        ScriptSentence(2, "This has costs."),
    )
    return SlideUnit(slide_number, (title, body), sentences)


@pytest.fixture
def unit() -> SlideUnit:
    return make_unit()
