"""Split speaker notes into script sentences.

A sentence ends at a newline, or at a period followed by whitespace or the
end of the text. A period between two digits never ends a sentence, and a
short list of abbreviations (``e.g.``, ``Fig.``, ``Dr.`` ...) is skipped.
"""

from __future__ import annotations

import re

from .model import ScriptSentence

ABBREVIATIONS = frozenset(
    {"e.g.", "i.e.", "vs.", "cf.", "fig.", "figs.", "eq.", "eqs.", "dr.", "mr.", "mrs.", "ms.", "prof.", "approx."}
)

_PERIOD = re.compile(r"\.(?=\s|$)")


def _is_boundary(line: str, pos: int) -> bool:
    if 0 < pos < len(line) - 1 and line[pos - 1].isdigit() and line[pos + 1].isdigit():
        return False
    start = pos
    while start > 0 and not line[start - 1].isspace():
        start -= 1
    word = line[start : pos + 1].lower()
    return word not in ABBREVIATIONS


def split_sentences(line: str) -> list[str]:
    pieces = []
    start = 0
    for match in _PERIOD.finditer(line):
        end = match.end()
        if _is_boundary(line, match.start()):
            pieces.append(line[start:end])
            start = end
    pieces.append(line[start:])
    return [p.strip() for p in pieces if p.strip()]


def segment_script(notes: str) -> list[ScriptSentence]:
    texts: list[str] = []
    for line in notes.splitlines():
        texts.extend(split_sentences(line))
    return [ScriptSentence(i, t) for i, t in enumerate(texts)]
