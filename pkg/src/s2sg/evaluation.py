"""Micro-averaged scoring of groundings against reference annotations."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from copy import copy
from dataclasses import dataclass, field, replace

from .errors import AllSlidesFailed
from .grounding import Grounder, GroundingConfig, ground_deck
from .interchange import (
    ALL_VARIANTS,
    FORMAT_VERSION,
    FormatVariant,
    GroundTruth,
    SlideFailure,
    dumps,
)
from .model import GroundingResult, SlideUnit

log = logging.getLogger(__name__)

TITLE_CONFUSION = "title-confusion"
PARENT_CHILD_CONFUSION = "parent/child-confusion"
OTHER = "other"


def correct_items(truth: Iterable, pred: Iterable) -> int:
    return len(set(truth) & set(pred))


@dataclass(frozen=True)
class Scores:
    correct: int
    predicted: int
    truth: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "correct": self.correct,
            "predicted": self.predicted,
            "truth": self.truth,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def scores_from_counts(correct: int, predicted: int, truth: int) -> Scores:
    # vacuous totals count as perfect on that side
    precision = correct / predicted if predicted else 1.0
    recall = correct / truth if truth else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(correct, predicted, truth, precision, recall, f1)


def micro_f1(pairs: Iterable[tuple[Iterable, Iterable]]) -> Scores:
    correct = predicted = truth = 0
    for t, p in pairs:
        t, p = set(t), set(p)
        correct += len(t & p)
        predicted += len(p)
        truth += len(t)
    return scores_from_counts(correct, predicted, truth)


@dataclass(frozen=True)
class SentenceRecord:
    slide_number: int
    index: int
    truth: tuple[str, ...]
    predicted: tuple[str, ...]

    @property
    def correct(self) -> int:
        return correct_items(self.truth, self.predicted)


@dataclass(frozen=True)
class Mismatch:
    slide_number: int
    index: int
    missing: tuple[str, ...]
    spurious: tuple[tuple[str, str], ...]  # (shape id, error kind)

    def as_dict(self) -> dict:
        return {
            "slide_number": self.slide_number,
            "index": self.index,
            "missing": list(self.missing),
            "spurious": [{"shape_id": sid, "kind": kind} for sid, kind in self.spurious],
        }


def classify_spurious(unit: SlideUnit, shape_id: str, truth: Iterable[str]) -> str:
    if shape_id in unit.title_ids():
        return TITLE_CONFUSION
    for t in truth:
        if shape_id in unit.relatives(t):
            return PARENT_CHILD_CONFUSION
    return OTHER


@dataclass
class VariantReport:
    variant: FormatVariant
    scores: Scores
    sentences: list[SentenceRecord] = field(default_factory=list)
    mismatches: list[Mismatch] = field(default_factory=list)
    excluded: list[SlideFailure] = field(default_factory=list)

    def error_kinds(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for m in self.mismatches:
            for _, kind in m.spurious:
                counts[kind] = counts.get(kind, 0) + 1
        return counts

    def as_dict(self) -> dict:
        return {
            "variant": self.variant.name,
            **self.scores.as_dict(),
            "error_kinds": self.error_kinds(),
            "per_sentence": [
                {
                    "slide_number": r.slide_number,
                    "index": r.index,
                    "truth": list(r.truth),
                    "predicted": list(r.predicted),
                    "correct": r.correct,
                }
                for r in self.sentences
            ],
            "mismatches": [m.as_dict() for m in self.mismatches],
            "excluded_slides": [
                {"slide_number": f.slide_number, "reason": f.reason} for f in self.excluded
            ],
        }


def score_predictions(
    units: Sequence[SlideUnit],
    truth: GroundTruth,
    results: Mapping[int, GroundingResult],
    failures: Sequence[SlideFailure] = (),
    variant: FormatVariant = ALL_VARIANTS[0],
) -> VariantReport:
    """Score the annotated slides; failed slides are listed, not scored."""
    failed = {f.slide_number for f in failures}
    excluded = list(failures)
    records: list[SentenceRecord] = []
    mismatches: list[Mismatch] = []
    for unit in units:
        number = unit.slide_number
        if number not in truth.slides:
            continue
        if number in failed:
            continue
        result = results.get(number)
        if result is None:
            excluded.append(SlideFailure(number, "no prediction for slide"))
            continue
        for s in unit.sentences:
            t = tuple(dict.fromkeys(truth.ids(number, s.index)))
            p = result.groundings[s.index] if s.index < len(result.groundings) else ()
            records.append(SentenceRecord(number, s.index, t, tuple(p)))
            missing = tuple(x for x in t if x not in p)
            spurious = tuple((x, classify_spurious(unit, x, t)) for x in p if x not in t)
            if missing or spurious:
                mismatches.append(Mismatch(number, s.index, missing, spurious))
    scores = micro_f1((r.truth, r.predicted) for r in records)
    excluded.sort(key=lambda f: f.slide_number)
    return VariantReport(variant, scores, records, mismatches, excluded)


@dataclass
class EvalReport:
    variants: dict[str, VariantReport] = field(default_factory=dict)
    annotator: str | None = None

    def cell(self, hierarchical: bool, stylistic: bool) -> float | None:
        report = self.variants.get(FormatVariant(hierarchical, stylistic).name)
        return report.scores.f1 if report else None

    def table(self) -> dict:
        """F1 grid keyed like the printed table, with row, column and overall means."""

        def mean(values):
            values = [v for v in values if v is not None]
            return sum(values) / len(values) if values else None

        grid = {
            style: {hier: self.cell(hier, style) for hier in (True, False)}
            for style in (True, False)
        }
        return {
            "cells": {
                ("style" if s else "no-style"): {("hier" if h else "no-hier"): v for h, v in row.items()}
                for s, row in grid.items()
            },
            "row_average": {("style" if s else "no-style"): mean(row.values()) for s, row in grid.items()},
            "column_average": {
                ("hier" if h else "no-hier"): mean(grid[s][h] for s in (True, False)) for h in (True, False)
            },
            "average": mean(v for row in grid.values() for v in row.values()),
        }

    def format_table(self, digits: int = 4) -> str:
        t = self.table()

        def fmt(v):
            return f"{v:.{digits}f}" if v is not None else "-"

        width = max(14, digits + 4)
        head = f"{'Stylistic info':<16}" + "".join(
            f"{h:>{width}}" for h in ("Hier:Present", "Hier:Absent", "Average")
        )
        rows = [head, "-" * len(head)]
        for key, label in (("style", "Present"), ("no-style", "Absent")):
            cells = t["cells"][key]
            rows.append(
                f"{label:<16}{fmt(cells['hier']):>{width}}{fmt(cells['no-hier']):>{width}}"
                f"{fmt(t['row_average'][key]):>{width}}"
            )
        rows.append("-" * len(head))
        col = t["column_average"]
        rows.append(
            f"{'Average':<16}{fmt(col['hier']):>{width}}{fmt(col['no-hier']):>{width}}"
            f"{fmt(t['average']):>{width}}"
        )
        return "\n".join(rows)

    def to_json(self) -> str:
        return dumps(
            {
                "format_version": FORMAT_VERSION,
                "annotator": self.annotator,
                "variants": {name: r.as_dict() for name, r in self.variants.items()},
                "table": self.table(),
            },
            digits=None,
        )


def run_experiment(
    units: Sequence[SlideUnit],
    truth: GroundTruth,
    grounder: Grounder,
    variants: Sequence[FormatVariant] = ALL_VARIANTS,
    config: GroundingConfig | None = None,
    max_workers: int = 4,
) -> EvalReport:
    """Ground and score the deck once per format variant."""
    truth.validate(units)
    config = config or GroundingConfig()
    report = EvalReport(annotator=truth.annotator)
    for variant in variants:
        cfg = replace(config, variant=variant)
        if hasattr(grounder, "config"):
            grounder = copy(grounder)
            grounder.config = cfg
        try:
            deck = ground_deck(units, grounder, cfg, max_workers)
            results, failures = deck.results, deck.failures
        except AllSlidesFailed as exc:
            results, failures = {}, list(exc.failures)
        vr = score_predictions(units, truth, results, failures, variant)
        log.info("%s: F1 %.4f (%d excluded slides)", variant.name, vr.scores.f1, len(vr.excluded))
        report.variants[variant.name] = vr
    return report

