"""Regenerate the checked-in test fixtures.

Decks are authored with python-pptx, independently of the package's own
zip/XML reader. Scripted replies are keyed by prompt hash, so rerun this
after any change to the prompt templates or slide serialization:

    python tests/fixtures/make_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from PIL import Image
from pptx import Presentation
from pptx.util import Emu, Pt

from s2sg.errors import ParseError
from s2sg.grounding import GroundingConfig, build_prompt, parse_grounding_reply, repair_suffix
from s2sg.ingest import open_deck
from s2sg.interchange import ALL_VARIANTS, GroundTruth, serialize_slide, write_ground_truth, write_slides
from s2sg.model import NormalizedRect, ScriptSentence, SentenceElement, SlideUnit, StyleInfo, TextObjectGroup, Role

HERE = Path(__file__).parent
TITLE_ONLY = 5
BLANK = 6


def add_textbox(slide, left, top, width, height, paragraphs, size=None):
    """``paragraphs`` is a list of (text, level)."""
    box = slide.shapes.add_textbox(Emu(left), Emu(top), Emu(width), Emu(height))
    frame = box.text_frame
    for k, (text, level) in enumerate(paragraphs):
        p = frame.paragraphs[0] if k == 0 else frame.add_paragraph()
        p.text = text
        p.level = level
        if size:
            for run in p.runs:
                run.font.size = Pt(size)
    return box


def set_title(slide, text, left, top, width, height, size):
    title = slide.shapes.title
    title.text = text
    title.left, title.top, title.width, title.height = Emu(left), Emu(top), Emu(width), Emu(height)
    for run in title.text_frame.paragraphs[0].runs:
        run.font.size = Pt(size)


def make_ingest_deck(path: Path) -> None:
    prs = Presentation()
    prs.slide_width, prs.slide_height = Emu(9144000), Emu(6858000)

    s1 = prs.slides.add_slide(prs.slide_layouts[TITLE_ONLY])
    set_title(s1, "Cache Design", 914400, 914400, 1828800, 914400, 40)
    s1.notes_slide.notes_text_frame.text = "First point. Second point.\nThird"

    s2 = prs.slides.add_slide(prs.slide_layouts[BLANK])
    add_textbox(
        s2, 914400, 1828800, 7315200, 3657600,
        [("Goals", 0), ("Lower latency", 1), ("Higher hit rate", 1), ("Costs", 0), ("Memory", 1)],
        size=24,
    )
    add_textbox(s2, 0, 6172200, 9144000, 685800, [("Accuracy was 92.4 percent", 0)], size=18)
    s2.notes_slide.notes_text_frame.text = "Accuracy was 92.4 percent. We lowered latency."

    s3 = prs.slides.add_slide(prs.slide_layouts[BLANK])
    picture = HERE / "_picture.png"
    Image.new("RGB", (64, 48), (10, 120, 200)).save(picture)
    s3.shapes.add_picture(str(picture), Emu(0), Emu(0), Emu(4572000), Emu(3429000))
    picture.unlink()
    add_textbox(s3, 4572000, 3429000, 4572000, 3429000, [("Summary", 0)])
    prs.save(path)


DEMO = [
    (
        "Script-to-slide grounding",
        [("Narrated slide videos", 0), ("Viewers lose track of the speaker", 1),
         ("Visual effects guide attention", 1), ("Manual editing is slow", 0)],
        [
            ("Today I talk about script-to-slide grounding.", ["s1"]),
            ("Narrated slide videos are now common in lectures.", ["s2"]),
            ("Viewers often lose track of the speaker.", ["s3"]),
            ("Visual effects can guide their attention.", ["s4"]),
            ("But adding them by hand takes a long time.", ["s5"]),
        ],
    ),
    (
        "Problem definition",
        [("Script sentences", 0), ("Split at periods and newlines", 1), ("Slide objects", 0),
         ("Lines of text boxes", 1), ("Grounding maps each sentence to a set of objects", 0)],
        [
            ("We start from the script sentences.", ["s2"]),
            ("They are split at periods and newlines.", ["s3"]),
            ("Slide objects are the lines of each text box.", ["s4", "s5"]),
            ("Grounding maps each sentence to a set of objects.", ["s6"]),
            ("Let me give an example.", []),
        ],
    ),
    (
        "Method",
        [("Preprocessing", 0), ("Split objects into lines", 1), ("Build the indent hierarchy", 1),
         ("Grounding with an LLM", 0), ("One prompt per slide", 1)],
        [
            ("Our method has two stages.", ["s2", "s5"]),
            ("First, objects are split into lines.", ["s3"]),
            ("Then we build the indent hierarchy.", ["s4"]),
            ("The grounding itself is done by an LLM.", ["s5"]),
            ("We send one prompt per slide.", ["s6"]),
        ],
    ),
    (
        "Evaluation",
        [("12 slides, 60 sentences", 0), ("Four data formats", 0), ("Hierarchical info", 1),
         ("Stylistic info", 1), ("Micro-averaged F1", 0)],
        [
            ("We evaluated on 12 slides with 60 sentences.", ["s2"]),
            ("We compared four data formats.", ["s3"]),
            ("They differ in hierarchical information.", ["s4"]),
            ("And in stylistic information.", ["s5"]),
            ("Scores are micro-averaged F1.", ["s6"]),
        ],
    ),
    (
        "Conclusion",
        [("Text grounding works well", 0), ("Average F1 of 0.87", 1), ("Next: non-text objects", 0)],
        [
            ("To conclude, text grounding works well.", ["s2"]),
            ("The average F1 was 0.87.", ["s3"]),
            ("Next we will handle figures and other non-text objects.", ["s4"]),
            ("Thank you for listening.", []),
            ("I am happy to take questions.", []),
        ],
    ),
]

# Per variant: (slide, sentence) -> predicted ids replacing the truth, or a
# list of raw replies for slides answered in several attempts.
DEVIATIONS = {
    "hier+style": {(1, 0): ["s1", "s2"], (3, 0): ["s2"]},
    "style": {(2, 2): ["s4"], (4, 2): ["s3", "s4"], (5, 3): ["s1"]},
    "hier": {},
    "plain": {(1, 2): ["s2"], (3, 4): ["s6", "s9"], (5, 1): []},
}
MALFORMED = {"plain": {4: "Sorry, I can only describe the slide in words."}}


def make_demo_deck(path: Path) -> None:
    prs = Presentation()
    prs.slide_width, prs.slide_height = Emu(9144000), Emu(6858000)
    for title, body, script in DEMO:
        slide = prs.slides.add_slide(prs.slide_layouts[TITLE_ONLY])
        set_title(slide, title, 457200, 228600, 8229600, 1143000, 36)
        add_textbox(slide, 457200, 1600200, 8229600, 4572000, body, size=24)
        slide.notes_slide.notes_text_frame.text = " ".join(text for text, _ in script)
    prs.save(path)


def demo_truth() -> GroundTruth:
    return GroundTruth(
        {
            n: {i: tuple(ids) for i, (_, ids) in enumerate(script)}
            for n, (_, _, script) in enumerate(DEMO, start=1)
        },
        annotator="fixture",
    )


def make_demo_replies(deck: Path) -> dict:
    _, units = open_deck(deck)
    truth = demo_truth()
    entries = {}
    for variant in ALL_VARIANTS:
        config = GroundingConfig(variant=variant)
        for unit in units:
            doc = serialize_slide(unit, variant)
            bundle = build_prompt(doc, unit.sentences, "eval", config)
            rows = {}
            for s in unit.sentences:
                ids = DEVIATIONS[variant.name].get((unit.slide_number, s.index), truth.ids(unit.slide_number, s.index))
                rows[str(s.index)] = list(ids)
            good = json.dumps({"groundings": rows})
            label = f"slide {unit.slide_number} / {variant.name}"
            bad = MALFORMED.get(variant.name, {}).get(unit.slide_number)
            if bad is None:
                entries[bundle.prompt_hash] = {"label": label, "reply": good}
                continue
            entries[bundle.prompt_hash] = {"label": label + " (malformed)", "reply": bad}
            try:
                parse_grounding_reply(bad, doc.shape_ids(), len(unit.sentences))
            except ParseError as exc:
                repaired = bundle.request(config, repair_suffix(exc))
            entries[repaired.prompt_hash] = {"label": label + " (repaired)", "reply": good}
    return {"format_version": 1, "entries": dict(sorted(entries.items()))}


SYNTH_WORDS = [
    "amber", "basil", "cobalt", "dune", "ember", "fjord", "garnet", "heron",
    "indigo", "juniper", "kestrel", "lichen", "magma", "nectar", "onyx", "prairie",
    "quartz", "raven", "saffron", "tundra", "umber", "violet", "willow", "xenon",
    "yarrow", "zephyr", "acorn", "birch", "cedar", "delta", "egret", "falcon",
    "glacier", "harbor", "iris", "jasper", "krill", "lotus", "maple", "nimbus",
    "orchid", "pebble", "quill", "reef", "sorrel", "thistle", "urchin", "vale",
]
DISJOINT_WORDS = [w.upper() + "X" for w in SYNTH_WORDS]
FILLER = "we now turn to {} and what it means here."


def synthetic_units(words: list[str]) -> list[SlideUnit]:
    """4 slides x 4 objects; object k's words appear only in sentence k."""
    units = []
    w = iter(SYNTH_WORDS)
    o = iter(words)
    for n in range(1, 5):
        groups, sentences = [], []
        for k in range(4):
            own = [next(w) for _ in range(3)]
            obj_words = [next(o) for _ in range(3)] if words is not SYNTH_WORDS else own
            rect = NormalizedRect(0.1, 0.2 * k, 0.9, 0.2 * k + 0.15)
            element = SentenceElement(f"s{k + 1}", " ".join(obj_words), 0, (), rect)
            groups.append(TextObjectGroup(f"g{k + 1}", (element,), StyleInfo(20.0, rect, Role.BODY)))
            sentences.append(ScriptSentence(k, FILLER.format(" ".join(own)).capitalize()))
        units.append(SlideUnit(n, tuple(groups), tuple(sentences)))
    return units


def main():
    make_ingest_deck(HERE / "ingest3.pptx")
    demo = HERE / "demo.pptx"
    make_demo_deck(demo)
    write_ground_truth(HERE / "demo.truth.json", demo_truth())
    (HERE / "demo.fixture.json").write_text(json.dumps(make_demo_replies(demo), indent=1, sort_keys=True) + "\n")

    synthetic = synthetic_units(SYNTH_WORDS)
    write_slides(HERE / "synthetic.slides.json", synthetic)
    write_slides(HERE / "synthetic_disjoint.slides.json", synthetic_units(DISJOINT_WORDS))
    truth = GroundTruth({u.slide_number: {k: (f"s{k + 1}",) for k in range(4)} for u in synthetic}, "planted")
    write_ground_truth(HERE / "synthetic.truth.json", truth)


if __name__ == "__main__":
    main()
