"""Read a .pptx deck into :class:`~s2sg.model.SlideUnit` objects.

The archive is read directly with :mod:`zipfile` and :mod:`xml.etree`; no
rendering is involved. Every text-bearing shape becomes a
:class:`~s2sg.model.TextObjectGroup` whose lines are nested by paragraph
level. Pictures, tables, connectors and empty shapes are skipped.

Shape ids are assigned per slide: ``g<k>`` for the k-th text object and
``s<k>`` for the k-th line in canonical (preorder) order, both 1-based.
"""

from __future__ import annotations

import logging
import posixpath
import zipfile
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from xml.etree import ElementTree as ET

from .errors import FormatError, IngestError
from .model import (
    NormalizedRect,
    Role,
    SentenceElement,
    SlideUnit,
    StyleInfo,
    TextObjectGroup,
)
from .segment import segment_script

log = logging.getLogger(__name__)

NS = {
    "p": "http://schemas.openxmlformats.org/presentationml/2006/main",
    "a": "http://schemas.openxmlformats.org/drawingml/2006/main",
    "r": "http://schemas.openxmlformats.org/officeDocument/2006/relationships",
    "rel": "http://schemas.openxmlformats.org/package/2006/relationships",
}
_P = "{%s}" % NS["p"]
_A = "{%s}" % NS["a"]
_R = "{%s}" % NS["r"]

REL_SLIDE = "/slide"
REL_NOTES = "/notesSlide"
REL_LAYOUT = "/slideLayout"
REL_MASTER = "/slideMaster"

TITLE_TYPES = {"title", "ctrTitle"}
BODY_TYPES = {"body", "subTitle", "obj"}


@dataclass(frozen=True)
class RawLine:
    text: str
    indent: int = 0
    source_object: str = ""


@dataclass(frozen=True)
class DeckMeta:
    slide_count: int
    slide_width_emu: int
    slide_height_emu: int

    def __post_init__(self):
        if self.slide_width_emu <= 0 or self.slide_height_emu <= 0:
            raise IngestError(
                f"slide size must be positive, got {self.slide_width_emu}x{self.slide_height_emu}"
            )


def split_lines(
    content: str, levels: Sequence[int] | None = None, source_object: str = ""
) -> list[RawLine]:
    """One RawLine per non-blank line; ``levels[k]`` is the level of raw line k."""
    levels = list(levels or [])
    out = []
    for k, line in enumerate(content.split("\n")):
        text = line.strip()
        if not text:
            continue
        indent = levels[k] if k < len(levels) else 0
        out.append(RawLine(text, max(0, int(indent)), source_object))
    return out


def build_hierarchy(
    lines: Sequence[RawLine],
    first_index: int = 1,
    positions: Sequence[NormalizedRect | None] | None = None,
) -> list[SentenceElement]:
    """Nest each line under the nearest preceding line with a smaller indent.

    Lines become ``SentenceElement`` ids ``s<first_index>``, ``s<first_index+1>``
    ... in input order, which is also the preorder of the returned forest.
    """
    # nodes are [line index, children] until frozen
    roots: list[list] = []
    stack: list[tuple[int, list]] = []
    for k, line in enumerate(lines):
        node = [k, []]
        while stack and stack[-1][0] >= line.indent:
            stack.pop()
        (stack[-1][1][1] if stack else roots).append(node)
        stack.append((line.indent, node))

    def freeze(node) -> SentenceElement:
        k, children = node
        return SentenceElement(
            shape_id=f"s{first_index + k}",
            content=lines[k].text,
            indent=lines[k].indent,
            children=tuple(freeze(c) for c in children),
            position=positions[k] if positions else None,
        )

    return [freeze(r) for r in roots]


# ---------------------------------------------------------------------------
# archive access


class _Archive:
    def __init__(self, path: Path):
        try:
            self._zip = zipfile.ZipFile(path)
        except FileNotFoundError:
            raise IngestError(f"{path}: no such file") from None
        except (zipfile.BadZipFile, OSError) as exc:
            raise IngestError(f"{path}: not a readable deck archive ({exc})") from None
        self.path = path
        self._names = set(self._zip.namelist())

    def close(self):
        self._zip.close()

    def has(self, part: str) -> bool:
        return part in self._names

    def xml(self, part: str) -> ET.Element:
        if part not in self._names:
            raise IngestError(f"{self.path}: missing part {part}")
        try:
            return ET.fromstring(self._zip.read(part))
        except (ET.ParseError, zipfile.BadZipFile, OSError) as exc:
            raise IngestError(f"{self.path}: corrupt part {part} ({exc})") from None

    def rels(self, part: str) -> list[tuple[str, str, str]]:
        """(id, type, resolved target) for each relationship of ``part``."""
        folder, name = posixpath.split(part)
        rels_part = posixpath.join(folder, "_rels", name + ".rels")
        if rels_part not in self._names:
            return []
        out = []
        for rel in self.xml(rels_part).findall("rel:Relationship", NS):
            if rel.get("TargetMode") == "External":
                continue
            target = rel.get("Target", "")
            if target.startswith("/"):
                resolved = target.lstrip("/")
            else:
                resolved = posixpath.normpath(posixpath.join(folder, target))
            out.append((rel.get("Id", ""), rel.get("Type", ""), resolved))
        return out

    def rel_target(self, part: str, type_suffix: str) -> str | None:
        for _, rtype, target in self.rels(part):
            if rtype.endswith(type_suffix):
                return target
        return None


# ---------------------------------------------------------------------------
# shape reading


@dataclass
class _TextShape:
    group_id: str
    lines: list[RawLine]
    rect_emu: tuple[int, int, int, int] | None
    font_size_pt: float | None
    role: Role


class _Placeholders:
    """Placeholder shapes from a layout or master, keyed for inheritance lookups."""

    def __init__(self, root: ET.Element | None):
        self.by_idx: dict[str, ET.Element] = {}
        self.by_type: dict[str, ET.Element] = {}
        self.root = root
        if root is None:
            return
        for sp in root.iter(_P + "sp"):
            ph = sp.find("p:nvSpPr/p:nvPr/p:ph", NS)
            if ph is None:
                continue
            if ph.get("idx") is not None:
                self.by_idx.setdefault(ph.get("idx"), sp)
            self.by_type.setdefault(ph.get("type", "obj"), sp)

    def match(self, ph_type: str, idx: str | None) -> ET.Element | None:
        if idx is not None and idx in self.by_idx:
            return self.by_idx[idx]
        if ph_type in self.by_type:
            return self.by_type[ph_type]
        if ph_type in TITLE_TYPES:
            return self.by_type.get("title") or self.by_type.get("ctrTitle")
        if ph_type in BODY_TYPES:
            return self.by_type.get("body") or self.by_type.get("obj")
        return None


def _paragraph_lines(p: ET.Element) -> list[str]:
    parts: list[str] = []
    for child in p:
        if child.tag in (_A + "r", _A + "fld"):
            t = child.find("a:t", NS)
            if t is not None and t.text:
                parts.append(t.text)
        elif child.tag == _A + "br":
            parts.append("\n")
    return "".join(parts).replace("\v", "\n").split("\n")


def _text_body_lines(tx_body: ET.Element) -> tuple[str, list[int]]:
    texts: list[str] = []
    levels: list[int] = []
    for p in tx_body.findall("a:p", NS):
        ppr = p.find("a:pPr", NS)
        level = int(ppr.get("lvl", "0")) if ppr is not None else 0
        for line in _paragraph_lines(p):
            texts.append(line)
            levels.append(level)
    return "\n".join(texts), levels


def _xfrm(sp_pr: ET.Element | None) -> tuple[int, int, int, int] | None:
    if sp_pr is None:
        return None
    off = sp_pr.find("a:xfrm/a:off", NS)
    ext = sp_pr.find("a:xfrm/a:ext", NS)
    if off is None or ext is None:
        return None
    try:
        return (int(off.get("x")), int(off.get("y")), int(ext.get("cx")), int(ext.get("cy")))
    except (TypeError, ValueError):
        return None


def _first_size(elem: ET.Element | None) -> float | None:
    if elem is None:
        return None
    for tag in ("rPr", "endParaRPr", "defRPr"):
        for node in elem.iter(_A + tag):
            if node.get("sz"):
                return int(node.get("sz")) / 100.0
    return None


def _master_text_style(master: ET.Element | None, role: Role) -> float | None:
    if master is None:
        return None
    name = {Role.TITLE: "titleStyle", Role.BODY: "bodyStyle"}.get(role, "otherStyle")
    node = master.find(f"p:txStyles/p:{name}/a:lvl1pPr/a:defRPr", NS)
    if node is not None and node.get("sz"):
        return int(node.get("sz")) / 100.0
    return None


# affine map per axis: (scale_x, offset_x, scale_y, offset_y)
_IDENTITY = (1.0, 0.0, 1.0, 0.0)


def _group_transform(grp: ET.Element, outer):
    xfrm = grp.find("p:grpSpPr/a:xfrm", NS)
    if xfrm is None:
        return outer
    try:
        off, ext = xfrm.find("a:off", NS), xfrm.find("a:ext", NS)
        ch_off, ch_ext = xfrm.find("a:chOff", NS), xfrm.find("a:chExt", NS)
        ox, oy = int(off.get("x")), int(off.get("y"))
        cx, cy = int(ext.get("cx")), int(ext.get("cy"))
        chx, chy = int(ch_off.get("x")), int(ch_off.get("y"))
        chcx, chcy = int(ch_ext.get("cx")), int(ch_ext.get("cy"))
    except (AttributeError, TypeError, ValueError):
        return outer
    sx = cx / chcx if chcx else 1.0
    sy = cy / chcy if chcy else 1.0
    # child -> group parent: x' = ox + (x - chx) * sx, then apply outer
    osx, oox, osy, ooy = outer
    return (osx * sx, oox + osx * (ox - chx * sx), osy * sy, ooy + osy * (oy - chy * sy))


def _apply(transform, rect):
    sx, ox, sy, oy = transform
    x, y, cx, cy = rect
    return (ox + sx * x, oy + sy * y, sx * cx, sy * cy)


def _read_text_shapes(
    slide: ET.Element, layout: ET.Element | None = None, master: ET.Element | None = None
) -> list[_TextShape]:
    layout_ph = _Placeholders(layout)
    master_ph = _Placeholders(master)
    shapes: list[_TextShape] = []

    def visit(container: ET.Element, transform):
        for child in container:
            if child.tag == _P + "grpSp":
                visit(child, _group_transform(child, transform))
            elif child.tag == _P + "sp":
                shape = read_sp(child, transform)
                if shape is not None:
                    shapes.append(shape)

    def read_sp(sp: ET.Element, transform) -> _TextShape | None:
        tx_body = sp.find("p:txBody", NS)
        if tx_body is None:
            return None
        content, levels = _text_body_lines(tx_body)
        group_id = f"g{len(shapes) + 1}"
        lines = split_lines(content, levels, group_id)
        if not lines:
            return None

        ph = sp.find("p:nvSpPr/p:nvPr/p:ph", NS)
        inherited: list[ET.Element] = []
        if ph is None:
            role = Role.BODY
        else:
            ph_type = ph.get("type", "obj")
            role = (
                Role.TITLE if ph_type in TITLE_TYPES
                else Role.BODY if ph_type in BODY_TYPES
                else Role.OTHER
            )
            for source in (layout_ph, master_ph):
                found = source.match(ph_type, ph.get("idx"))
                if found is not None:
                    inherited.append(found)

        rect = _xfrm(sp.find("p:spPr", NS))
        if rect is not None:
            rect = _apply(transform, rect)
        else:
            for parent in inherited:
                rect = _xfrm(parent.find("p:spPr", NS))
                if rect is not None:
                    break

        size = _first_size(tx_body)
        for parent in inherited:
            if size is not None:
                break
            size = _first_size(parent.find("p:txBody", NS))
        if size is None and ph is not None:
            size = _master_text_style(master, role)
        return _TextShape(group_id, lines, rect, size, role)

    tree = slide.find("p:cSld/p:spTree", NS)
    if tree is not None:
        visit(tree, _IDENTITY)
    return shapes


def _normalize(rect_emu, width: int, height: int) -> NormalizedRect:
    x, y, cx, cy = rect_emu

    def clamp(v: float) -> float:
        return min(1.0, max(0.0, v))

    x0, x1 = clamp(x / width), clamp((x + cx) / width)
    y0, y1 = clamp(y / height), clamp((y + cy) / height)
    return NormalizedRect(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


def _assemble(
    slide_number: int, shapes: list[_TextShape], meta: DeckMeta, notes: str = ""
) -> SlideUnit:
    groups = []
    next_index = 1
    for shape in shapes:
        rect = None
        line_rects: list[NormalizedRect | None] = [None] * len(shape.lines)
        if shape.rect_emu is not None:
            rect = _normalize(shape.rect_emu, meta.slide_width_emu, meta.slide_height_emu)
            line_rects = rect.slice_rows(len(shape.lines))
        roots = build_hierarchy(shape.lines, next_index, line_rects)
        next_index += len(shape.lines)
        style = StyleInfo(font_size_pt=shape.font_size_pt, position=rect, role=shape.role)
        groups.append(TextObjectGroup(shape.group_id, tuple(roots), style))
    return SlideUnit(
        slide_number=slide_number,
        objects=tuple(groups),
        sentences=tuple(segment_script(notes)),
        width_emu=meta.slide_width_emu,
        height_emu=meta.slide_height_emu,
    )


def extract_positions(
    slide_xml: bytes | str | ET.Element,
    meta: DeckMeta,
    layout_xml: bytes | str | ET.Element | None = None,
    master_xml: bytes | str | ET.Element | None = None,
) -> dict[str, NormalizedRect]:
    """Normalized rectangles for every text object and line on a slide.

    Objects without offset/extent (and nothing to inherit) are left out.
    """

    def root(x):
        if x is None or isinstance(x, ET.Element):
            return x
        return ET.fromstring(x)

    shapes = _read_text_shapes(root(slide_xml), root(layout_xml), root(master_xml))
    unit = _assemble(1, shapes, meta)
    out: dict[str, NormalizedRect] = {}
    for group in unit.objects:
        if group.style and group.style.position:
            out[group.group_shape_id] = group.style.position
        for element in group.elements():
            if element.position is not None:
                out[element.shape_id] = element.position
    return out


def _notes_text(notes: ET.Element) -> str:
    paragraphs: list[str] = []
    for sp in notes.iter(_P + "sp"):
        ph = sp.find("p:nvSpPr/p:nvPr/p:ph", NS)
        if ph is None or ph.get("type") != "body":
            continue
        tx_body = sp.find("p:txBody", NS)
        if tx_body is not None:
            content, _ = _text_body_lines(tx_body)
            paragraphs.append(content)
    return "\n".join(paragraphs)


def open_deck(path: str | Path) -> tuple[DeckMeta, list[SlideUnit]]:
    path = Path(path)
    archive = _Archive(path)
    try:
        pres_part = "ppt/presentation.xml"
        if not archive.has(pres_part):
            raise FormatError(f"{path}: zip archive has no {pres_part}; not a presentation deck")
        pres = archive.xml(pres_part)
        size = pres.find("p:sldSz", NS)
        if size is None:
            raise IngestError(f"{path}: {pres_part} has no slide size")
        rel_map = {rid: target for rid, _, target in archive.rels(pres_part)}
        slide_parts = []
        for sld in pres.findall("p:sldIdLst/p:sldId", NS):
            rid = sld.get(_R + "id")
            if rid not in rel_map:
                raise IngestError(f"{path}: slide relationship {rid} has no target")
            slide_parts.append(rel_map[rid])
        meta = DeckMeta(len(slide_parts), int(size.get("cx")), int(size.get("cy")))

        units = []
        for number, part in enumerate(slide_parts, start=1):
            slide = archive.xml(part)
            layout = master = None
            layout_part = archive.rel_target(part, REL_LAYOUT)
            if layout_part and archive.has(layout_part):
                layout = archive.xml(layout_part)
                master_part = archive.rel_target(layout_part, REL_MASTER)
                if master_part and archive.has(master_part):
                    master = archive.xml(master_part)
            notes_part = archive.rel_target(part, REL_NOTES)
            notes = ""
            if notes_part and archive.has(notes_part):
                notes = _notes_text(archive.xml(notes_part))
            shapes = _read_text_shapes(slide, layout, master)
            units.append(_assemble(number, shapes, meta, notes))
            log.debug("slide %d: %d text objects, %d sentences", number, len(shapes), len(units[-1].sentences))
        return meta, units
    finally:
        archive.close()
