"""Slide objects, script sentences, and the sentence-to-object grounding.

A slide's grounding can be held either as one set of shape ids per script
sentence (:class:`GroundingResult`) or as a binary sentence-by-object matrix
(:class:`CorrespondenceMatrix`). Columns of the matrix follow the slide's
canonical object order: a preorder walk of every text object, objects in
document order.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class NormalizedRect:
    """Rectangle as fractions of slide width and height."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (0.0 <= self.x0 <= self.x1 <= 1.0 and 0.0 <= self.y0 <= self.y1 <= 1.0):
            raise ValidationError(f"rectangle out of bounds: {self}")

    def slice_rows(self, count: int) -> list[NormalizedRect]:
        """Partition into ``count`` equal-height horizontal bands, top to bottom."""
        if count <= 0:
            return []
        height = self.y1 - self.y0
        bands = []
        for k in range(count):
            top = self.y0 + height * k / count
            bottom = self.y1 if k == count - 1 else self.y0 + height * (k + 1) / count
            bands.append(NormalizedRect(self.x0, top, self.x1, bottom))
        return bands

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)


class Role(str, Enum):
    TITLE = "title"
    BODY = "body"
    OTHER = "other"


@dataclass(frozen=True)
class StyleInfo:
    font_size_pt: float | None = None
    position: NormalizedRect | None = None
    role: Role | None = None

    def __post_init__(self):
        if self.font_size_pt is not None and not self.font_size_pt > 0:
            raise ValidationError(f"font size must be positive, got {self.font_size_pt}")


@dataclass(frozen=True)
class SentenceElement:
    """One line of a text object and the lines nested beneath it."""

    shape_id: str
    content: str
    indent: int = 0
    children: tuple[SentenceElement, ...] = ()
    position: NormalizedRect | None = None

    def __post_init__(self):
        if not self.shape_id:
            raise ValidationError("empty shape id")
        if not self.content.strip() or "\n" in self.content:
            raise ValidationError(f"{self.shape_id}: content must be one non-blank line")
        if self.indent < 0:
            raise ValidationError(f"{self.shape_id}: negative indent")
        for child in self.children:
            if child.indent <= self.indent:
                raise ValidationError(
                    f"{child.shape_id}: indent {child.indent} not deeper than parent "
                    f"{self.shape_id} ({self.indent})"
                )

    def walk(self) -> Iterator[SentenceElement]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class TextObjectGroup:
    group_shape_id: str
    content_list: tuple[SentenceElement, ...]
    style: StyleInfo | None = None

    def elements(self) -> Iterator[SentenceElement]:
        for root in self.content_list:
            yield from root.walk()

    @property
    def role(self) -> Role | None:
        return self.style.role if self.style else None


@dataclass(frozen=True)
class ScriptSentence:
    index: int
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"negative sentence index {self.index}")
        if not self.text.strip():
            raise ValidationError(f"sentence {self.index} is blank")


@dataclass(frozen=True)
class SlideUnit:
    """Everything grounding needs to know about one slide."""

    slide_number: int
    objects: tuple[TextObjectGroup, ...] = ()
    sentences: tuple[ScriptSentence, ...] = ()
    width_emu: int = 9144000
    height_emu: int = 6858000

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if self.slide_number < 1:
            raise ValidationError(f"slide number must be 1-based, got {self.slide_number}")
        ids = [g.group_shape_id for g in self.objects]
        ids += [e.shape_id for g in self.objects for e in g.elements()]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(
                f"slide {self.slide_number}: duplicate shape ids {dupes}", dupes
            )
        if [s.index for s in self.sentences] != list(range(len(self.sentences))):
            raise ValidationError(
                f"slide {self.slide_number}: sentence indices must be 0..n-1 in order"
            )

    def elements(self) -> Iterator[SentenceElement]:
        for group in self.objects:
            yield from group.elements()

    def object_order(self) -> tuple[str, ...]:
        return tuple(e.shape_id for e in self.elements())

    def element(self, shape_id: str) -> SentenceElement:
        for e in self.elements():
            if e.shape_id == shape_id:
                return e
        raise KeyError(shape_id)

    def group_of(self, shape_id: str) -> TextObjectGroup:
        for group in self.objects:
            if any(e.shape_id == shape_id for e in group.elements()):
                return group
        raise KeyError(shape_id)

    def relatives(self, shape_id: str) -> set[str]:
        """Ids of all ancestors and descendants of an element."""
        out: set[str] = set()

        def visit(node: SentenceElement, path: list[str]) -> bool:
            if node.shape_id == shape_id:
                out.update(path)
                out.update(d.shape_id for d in node.walk() if d is not node)
                return True
            return any(visit(c, path + [node.shape_id]) for c in node.children)

        for group in self.objects:
            for root in group.content_list:
                if visit(root, []):
                    return out
        return out

    def title_ids(self) -> set[str]:
        return {
            e.shape_id
            for g in self.objects
            if g.role is Role.TITLE
            for e in g.elements()
        }

    def without_titles(self) -> SlideUnit:
        kept = tuple(g for g in self.objects if g.role is not Role.TITLE)
        return replace(self, objects=kept)


@dataclass(frozen=True)
class GroundingResult:
    """Shape ids grounded to each script sentence of one slide.

    ``groundings[i]`` is the id set for sentence ``i``, stored as a tuple in
    first-seen order. ``warnings`` carries notes from reply parsing and does
    not take part in equality.
    """

    object_order: tuple[str, ...]
    groundings: tuple[tuple[str, ...], ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "object_order", tuple(self.object_order))
        object.__setattr__(self, "groundings", tuple(tuple(g) for g in self.groundings))
        dupes = sorted({i for i in self.object_order if self.object_order.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate ids in object order: {dupes}", dupes)
        known = set(self.object_order)
        for i, ids in enumerate(self.groundings):
            if len(set(ids)) != len(ids):
                raise ValidationError(f"sentence {i}: duplicate ids {list(ids)}")
            unknown = [x for x in ids if x not in known]
            if unknown:
                raise ValidationError(f"sentence {i}: ids not on slide: {unknown}", unknown)

    @classmethod
    def from_mapping(
        cls, object_order: Sequence[str], mapping: Mapping[int, Iterable[str]], n_sentences: int
    ) -> GroundingResult:
        rows = []
        for i in range(n_sentences):
            seen: dict[str, None] = {}
            for sid in mapping.get(i, ()):
                seen.setdefault(sid, None)
            rows.append(tuple(seen))
        return cls(tuple(object_order), tuple(rows))

    @classmethod
    def empty(cls, object_order: Sequence[str], n_sentences: int) -> GroundingResult:
        return cls(tuple(object_order), ((),) * n_sentences)

    def __len__(self) -> int:
        return len(self.groundings)

    def __getitem__(self, index: int) -> frozenset[str]:
        return frozenset(self.groundings[index])

    def as_sets(self) -> list[frozenset[str]]:
        return [frozenset(g) for g in self.groundings]

    def with_object_order(self, object_order: Sequence[str]) -> GroundingResult:
        return GroundingResult(tuple(object_order), self.groundings, self.warnings)


@dataclass(frozen=True, eq=False)
class CorrespondenceMatrix:
    """Binary n-by-m matrix; entry (i, j) marks sentence i grounded to object j."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries)
        if arr.ndim != 2:
            if arr.size == 0:
                arr = arr.reshape(0, 0)
            else:
                raise ValidationError(f"matrix must be 2-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValidationError("matrix entries must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    def tolist(self) -> list[list[int]]:
        return self.entries.tolist()

    def __eq__(self, other):
        if not isinstance(other, CorrespondenceMatrix):
            return NotImplemented
        return self.entries.shape == other.entries.shape and bool(
            (self.entries == other.entries).all()
        )

    __hash__ = None


def grounding_to_matrix(g: GroundingResult) -> CorrespondenceMatrix:
    column = {sid: j for j, sid in enumerate(g.object_order)}
    if len(column) != len(g.object_order):
        raise ValidationError("duplicate ids in object order")
    entries = np.zeros((len(g.groundings), len(g.object_order)), dtype=np.uint8)
    for i, ids in enumerate(g.groundings):
        for sid in ids:
            entries[i, column[sid]] = 1
    return CorrespondenceMatrix(entries)


def matrix_to_grounding(
    matrix: CorrespondenceMatrix | Sequence[Sequence[int]] | np.ndarray,
    object_order: Sequence[str],
) -> GroundingResult:
    if not isinstance(matrix, CorrespondenceMatrix):
        matrix = CorrespondenceMatrix(np.asarray(matrix))
    if matrix.n and matrix.m != len(object_order):
        raise ValidationError(
            f"matrix has {matrix.m} columns but object order has {len(object_order)} ids"
        )
    rows = tuple(
        tuple(object_order[j] for j in np.flatnonzero(row)) for row in matrix.entries
    )
    return GroundingResult(tuple(object_order), rows)
