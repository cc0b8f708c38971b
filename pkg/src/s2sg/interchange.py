"""On-disk formats: slide documents, ground truth, predictions, searchable data.

Every file is UTF-8 JSON with sorted keys, compact separators, and reals
rounded to six decimals, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

from .errors import ParseError, ValidationError
from .model import (
    GroundingResult,
    NormalizedRect,
    Role,
    ScriptSentence,
    SentenceElement,
    SlideUnit,
    StyleInfo,
    TextObjectGroup,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class FormatVariant:
    hierarchical: bool
    stylistic: bool

    @property
    def name(self) -> str:
        if self.hierarchical and self.stylistic:
            return "hier+style"
        if self.hierarchical:
            return "hier"
        if self.stylistic:
            return "style"
        return "plain"

    @classmethod
    def parse(cls, name: str) -> FormatVariant:
        for v in ALL_VARIANTS:
            if v.name == name:
                return v
        raise ValueError(f"unknown variant {name!r}; expected one of {[v.name for v in ALL_VARIANTS]}")

    def __str__(self):
        return self.name


ALL_VARIANTS = (
    FormatVariant(True, True),
    FormatVariant(False, True),
    FormatVariant(True, False),
    FormatVariant(False, False),
)
FULL = ALL_VARIANTS[0]


def _round(value: Any, digits: int) -> Any:
    if isinstance(value, float):
        return round(value, digits) + 0.0
    if isinstance(value, dict):
        return {k: _round(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v, digits) for v in value]
    return value


def dumps(data: Any, digits: int | None = 6) -> str:
    """Canonical JSON text; ``digits=None`` keeps reals at full precision."""
    if digits is not None:
        data = _round(data, digits)
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def loads(text: str, source: str = "<string>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc.msg}", exc.lineno, exc.colno) from None


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary sibling so a failed run leaves no partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str | Path) -> Any:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------------------------
# slide documents


def _rect_json(rect: NormalizedRect) -> dict:
    return {"x0": rect.x0, "y0": rect.y0, "x1": rect.x1, "y1": rect.y1}


def _rect_from(data: Mapping | None) -> NormalizedRect | None:
    if data is None:
        return None
    return NormalizedRect(data["x0"], data["y0"], data["x1"], data["y1"])


def _element_json(e: SentenceElement, v: FormatVariant, nested: bool) -> dict:
    out: dict[str, Any] = {"shape_id": e.shape_id, "content": e.content}
    if v.hierarchical:
        out["indent"] = e.indent
        if nested:
            out["children"] = [_element_json(c, v, True) for c in e.children]
    if v.stylistic and e.position is not None:
        out["position"] = _rect_json(e.position)
    return out


def _object_json(group: TextObjectGroup, v: FormatVariant) -> dict:
    out: dict[str, Any] = {"group_shape_id": group.group_shape_id}
    if v.hierarchical:
        out["content_list"] = [_element_json(e, v, True) for e in group.content_list]
    else:
        out["content_list"] = [_element_json(e, v, False) for e in group.elements()]
    style = group.style
    if v.stylistic and style is not None:
        if style.font_size_pt is not None:
            out["font_size_pt"] = style.font_size_pt
        if style.position is not None:
            out["position"] = _rect_json(style.position)
        if style.role is not None:
            out["role"] = style.role.value
    return out


@dataclass(frozen=True)
class SlideDocument:
    """Canonical serialization of one slide under one format variant."""

    slide_number: int
    variant: FormatVariant
    text: str

    @cached_property
    def data(self) -> dict:
        return json.loads(self.text)

    def elements(self) -> list[dict]:
        """Element records in canonical order, whatever the variant."""
        out: list[dict] = []

        def walk(node: dict):
            out.append(node)
            for child in node.get("children", ()):
                walk(child)

        for obj in self.data["objects"]:
            for node in obj["content_list"]:
                walk(node)
        return out

    def shape_ids(self) -> tuple[str, ...]:
        return tuple(e["shape_id"] for e in self.elements())

    def sentences(self) -> list[ScriptSentence]:
        return [ScriptSentence(s["index"], s["text"]) for s in self.data["sentences"]]


def slide_payload(unit: SlideUnit, v: FormatVariant) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "slide_number": unit.slide_number,
        "objects": [_object_json(g, v) for g in unit.objects],
        "sentences": [{"index": s.index, "text": s.text} for s in unit.sentences],
    }


def serialize_slide(unit: SlideUnit, v: FormatVariant = FULL) -> SlideDocument:
    return SlideDocument(unit.slide_number, v, dumps(slide_payload(unit, v)))


def unit_from_document(
    data: Mapping, width_emu: int = 9144000, height_emu: int = 6858000
) -> SlideUnit:
    """Rebuild a SlideUnit from a ``hier+style`` document payload."""

    def element(node: Mapping) -> SentenceElement:
        if "children" not in node:
            raise ValidationError("document is not hierarchical; cannot rebuild slide tree")
        return SentenceElement(
            shape_id=node["shape_id"],
            content=node["content"],
            indent=node.get("indent", 0),
            children=tuple(element(c) for c in node["children"]),
            position=_rect_from(node.get("position")),
        )

    groups = []
    for obj in data["objects"]:
        role = obj.get("role")
        style = StyleInfo(
            font_size_pt=obj.get("font_size_pt"),
            position=_rect_from(obj.get("position")),
            role=Role(role) if role else None,
        )
        groups.append(
            TextObjectGroup(obj["group_shape_id"], tuple(element(n) for n in obj["content_list"]), style)
        )
    return SlideUnit(
        slide_number=data["slide_number"],
        objects=tuple(groups),
        sentences=tuple(ScriptSentence(s["index"], s["text"]) for s in data["sentences"]),
        width_emu=width_emu,
        height_emu=height_emu,
    )


def write_slides(path: str | Path, units: Sequence[SlideUnit], v: FormatVariant = FULL) -> None:
    width = units[0].width_emu if units else 9144000
    height = units[0].height_emu if units else 6858000
    body = {
        "format_version": FORMAT_VERSION,
        "variant": v.name,
        "slide_width_emu": width,
        "slide_height_emu": height,
        "slides": [slide_payload(u, v) for u in units],
    }
    write_text_atomic(path, dumps(body))


def read_slides(path: str | Path) -> list[SlideUnit]:
    data = read_json(path)
    if data.get("variant") != FULL.name:
        raise ValidationError(f"{path}: only {FULL.name} slide files can be reloaded, got {data.get('variant')!r}")
    return [
        unit_from_document(d, data["slide_width_emu"], data["slide_height_emu"])
        for d in data["slides"]
    ]


# ---------------------------------------------------------------------------
# ground truth and predictions


@dataclass(frozen=True)
class GroundTruth:
    """Reference shape ids per slide number and sentence index."""

    slides: Mapping[int, Mapping[int, tuple[str, ...]]] = field(default_factory=dict)
    annotator: str | None = None

    def ids(self, slide_number: int, index: int) -> tuple[str, ...]:
        return tuple(self.slides.get(slide_number, {}).get(index, ()))

    def validate(self, units: Iterable[SlideUnit]) -> None:
        by_number = {u.slide_number: u for u in units}
        offenders = []
        for number, sentences in sorted(self.slides.items()):
            unit = by_number.get(number)
            if unit is None:
                offenders.append(f"slide {number}")
                continue
            known = set(unit.object_order())
            for index, ids in sorted(sentences.items()):
                if not 0 <= index < len(unit.sentences):
                    offenders.append(f"slide {number} sentence {index}")
                offenders.extend(
                    f"slide {number} sentence {index}: {sid}" for sid in ids if sid not in known
                )
        if offenders:
            raise ValidationError("ground truth references unknown items: " + ", ".join(offenders), offenders)


def _int_key(key: str, where: str) -> int:
    try:
        return int(key)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: key {key!r} is not an integer") from None


def parse_ground_truth(data: Mapping, source: str = "<truth>") -> GroundTruth:
    if not isinstance(data, Mapping):
        raise ParseError(f"{source}: expected a JSON object")
    slides_data = data.get("slides", {})
    if not isinstance(slides_data, Mapping):
        raise ParseError(f"{source}: 'slides' must be an object")
    slides: dict[int, dict[int, tuple[str, ...]]] = {}
    for skey, sentences in slides_data.items():
        number = _int_key(skey, source)
        if not isinstance(sentences, Mapping):
            raise ParseError(f"{source}: slide {skey} must map sentence index to id list")
        row: dict[int, tuple[str, ...]] = {}
        for ikey, ids in sentences.items():
            if not isinstance(ids, list) or not all(isinstance(x, str) for x in ids):
                raise ParseError(f"{source}: slide {skey} sentence {ikey} must be a list of ids")
            row[_int_key(ikey, source)] = tuple(ids)
        slides[number] = row
    return GroundTruth(slides, data.get("annotator"))


def read_ground_truth(path: str | Path, units: Iterable[SlideUnit] | None = None) -> GroundTruth:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    truth = GroundTruth() if not text.strip() else parse_ground_truth(loads(text, str(path)), str(path))
    if units is not None:
        truth.validate(units)
    return truth


def ground_truth_json(truth: GroundTruth) -> str:
    return dumps(
        {
            "format_version": FORMAT_VERSION,
            "annotator": truth.annotator,
            "slides": {
                str(n): {str(i): list(ids) for i, ids in sorted(rows.items())}
                for n, rows in sorted(truth.slides.items())
            },
        }
    )


def write_ground_truth(path: str | Path, truth: GroundTruth) -> None:
    write_text_atomic(path, ground_truth_json(truth))


@dataclass(frozen=True)
class SlideFailure:
    slide_number: int
    reason: str


def predictions_json(
    results: Mapping[int, GroundingResult], failures: Sequence[SlideFailure] = ()
) -> str:
    return dumps(
        {
            "format_version": FORMAT_VERSION,
            "slides": {
                str(n): {
                    "object_order": list(g.object_order),
                    "groundings": {str(i): list(ids) for i, ids in enumerate(g.groundings)},
                    "warnings": list(g.warnings),
                }
                for n, g in sorted(results.items())
            },
            "failures": [
                {"slide_number": f.slide_number, "reason": f.reason}
                for f in sorted(failures, key=lambda f: f.slide_number)
            ],
        }
    )


def write_predictions(
    path: str | Path, results: Mapping[int, GroundingResult], failures: Sequence[SlideFailure] = ()
) -> None:
    write_text_atomic(path, predictions_json(results, failures))


def read_predictions(path: str | Path) -> tuple[dict[int, GroundingResult], list[SlideFailure]]:
    data = read_json(path)
    results = {}
    try:
        for key, slide in data["slides"].items():
            order = slide["object_order"]
            rows = {int(i): ids for i, ids in slide["groundings"].items()}
            g = GroundingResult(
                tuple(order),
                tuple(tuple(rows.get(i, ())) for i in range(len(rows))),
                tuple(slide.get("warnings", ())),
            )
            results[int(key)] = g
        failures = [SlideFailure(f["slide_number"], f["reason"]) for f in data.get("failures", [])]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"{path}: malformed predictions file ({exc})") from None
    return dict(sorted(results.items())), failures


# ---------------------------------------------------------------------------
# searchable slide data


@dataclass(frozen=True)
class SearchableObject:
    shape_id: str
    content: str
    position: NormalizedRect


@dataclass(frozen=True)
class SearchableData:
    objects: tuple[SearchableObject, ...]
    warnings: tuple[str, ...] = ()

    @cached_property
    def _index(self) -> dict[str, SearchableObject]:
        return {o.shape_id: o for o in self.objects}

    def __len__(self):
        return len(self.objects)

    def __contains__(self, shape_id: str) -> bool:
        return shape_id in self._index

    def lookup(self, shape_id: str) -> SearchableObject:
        return self._index[shape_id]


def build_searchable_data(unit: SlideUnit) -> SearchableData:
    """Flat list of every line with its position, in canonical order."""
    objects = []
    warnings = []
    for e in unit.elements():
        if e.position is None:
            msg = f"slide {unit.slide_number}: {e.shape_id} has no position; left out of searchable data"
            log.warning(msg)
            warnings.append(msg)
            continue
        objects.append(SearchableObject(e.shape_id, e.content, e.position))
    return SearchableData(tuple(objects), tuple(warnings))


def searchable_json(data: Mapping[int, SearchableData]) -> str:
    return dumps(
        {
            "format_version": FORMAT_VERSION,
            "slides": {
                str(n): [
                    {"shape_id": o.shape_id, "content": o.content, "position": _rect_json(o.position)}
                    for o in d.objects
                ]
                for n, d in sorted(data.items())
            },
        }
    )


def write_searchable(path: str | Path, data: Mapping[int, SearchableData]) -> None:
    write_text_atomic(path, searchable_json(data))


def read_searchable(path: str | Path) -> dict[int, SearchableData]:
    data = read_json(path)
    return {
        int(n): SearchableData(
            tuple(SearchableObject(o["shape_id"], o["content"], _rect_from(o["position"])) for o in objs)
        )
        for n, objs in data["slides"].items()
    }
