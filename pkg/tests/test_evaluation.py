import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_unit
from s2sg.errors import ValidationError
from s2sg.evaluation import (
    OTHER,
    PARENT_CHILD_CONFUSION,
    TITLE_CONFUSION,
    EvalReport,
    classify_spurious,
    correct_items,
    micro_f1,
    run_experiment,
    score_predictions,
)
from s2sg.grounding import GroundingConfig
from s2sg.interchange import ALL_VARIANTS, GroundTruth, SlideFailure
from s2sg.model import GroundingResult


def pairwise_oracle(pairs):
    """Enumerate every (sentence, id) pair and count TP/FP/FN with exact fractions."""
    tp = fp = fn = 0
    for k, (truth, pred) in enumerate(pairs):
        universe = set(truth) | set(pred)
        for x in universe:
            in_t, in_p = x in truth, x in pred
            tp += in_t and in_p
            fp += in_p and not in_t
            fn += in_t and not in_p
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(1)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(1)
    f1 = 2 * p * r / (p + r) if p + r else Fraction(0)
    return float(p), float(r), float(f1)


def test_correct_items_examples():
    assert correct_items([1, 2, 3], [1, 2, 4]) == 2
    assert correct_items([], []) == 0
    assert correct_items(["a", "a", "b"], ["a"]) == 1


def test_worked_example():
    s = micro_f1([([1, 2, 3], [1, 2, 4]), ([5], [5])])
    assert (s.correct, s.predicted, s.truth) == (3, 4, 4)
    assert s.precision == 0.75 and s.recall == 0.75
    assert abs(s.f1 - 0.75) <= 1e-12


def test_conventions():
    assert micro_f1([]).f1 == 1.0
    s = micro_f1([([], [])])
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)
    s = micro_f1([(["a"], [])])
    assert (s.precision, s.recall, s.f1) == (1.0, 0.0, 0.0)
    s = micro_f1([([], ["a"])])
    assert (s.precision, s.recall, s.f1) == (0.0, 1.0, 0.0)
    s = micro_f1([(["a"], ["b"])])
    assert s.f1 == 0.0


pair = st.tuples(st.lists(st.integers(0, 9), max_size=10), st.lists(st.integers(0, 9), max_size=10))
pairs = st.lists(pair, max_size=20)


@settings(max_examples=300, deadline=None)
@given(pairs)
def test_matches_pairwise_oracle(ps):
    s = micro_f1(ps)
    p, r, f1 = pairwise_oracle(ps)
    assert s.precision == pytest.approx(p, abs=1e-12)
    assert s.recall == pytest.approx(r, abs=1e-12)
    assert s.f1 == pytest.approx(f1, abs=1e-12)
    assert 0 <= s.f1 <= 1 and s.correct <= min(s.predicted, s.truth)


@settings(max_examples=100, deadline=None)
@given(pairs, st.data())
def test_permutation_and_empty_pair(ps, data):
    perm = data.draw(st.permutations(ps))
    assert micro_f1(perm) == micro_f1(ps)
    assert micro_f1(ps + [([], [])]) == micro_f1(ps)


@settings(max_examples=200, deadline=None)
@given(pairs, st.data())
def test_removing_spurious_never_lowers_f1(ps, data):
    spurious = [(k, x) for k, (t, p) in enumerate(ps) for x in set(p) - set(t)]
    if not spurious:
        return
    k, x = data.draw(st.sampled_from(spurious))
    t, p = ps[k]
    fewer = ps[:k] + [(t, [y for y in p if y != x])] + ps[k + 1 :]
    assert micro_f1(fewer).f1 >= micro_f1(ps).f1 - 1e-15


@settings(max_examples=100, deadline=None)
@given(pair)
def test_correct_items_symmetric(pr):
    a, b = pr
    assert correct_items(a, b) == correct_items(b, a)


# --- classification and reports -------------------------------------------


def test_classify_spurious(unit):
    assert classify_spurious(unit, "s1", ["s3"]) == TITLE_CONFUSION
    assert classify_spurious(unit, "s2", ["s3"]) == PARENT_CHILD_CONFUSION
    assert classify_spurious(unit, "s3", ["s2"]) == PARENT_CHILD_CONFUSION
    assert classify_spurious(unit, "s5", ["s3"]) == OTHER


class TruthGrounder:
    single_flight = False

    def __init__(self, truth, transform=lambda unit, ids: ids):
        self.truth = truth
        self.transform = transform

    def ground(self, doc, sentences):
        from s2sg.interchange import unit_from_document

        unit = unit_from_document(doc.data) if doc.variant.hierarchical else None
        rows = [self.transform(unit, self.truth.ids(doc.slide_number, s.index)) for s in sentences]
        return GroundingResult(doc.shape_ids(), tuple(tuple(r) for r in rows))


TRUTH = GroundTruth({1: {0: ("s3",), 1: ("s4",), 2: ("s5",)}}, "test")


def test_always_truth_gives_one(unit):
    report = run_experiment([unit], TRUTH, TruthGrounder(TRUTH))
    for h in (True, False):
        for s in (True, False):
            assert report.cell(h, s) == 1.0
    assert report.table()["average"] == 1.0


def test_parent_grounder_is_parent_child_confusion(unit):
    def parents(_, ids):
        return [unit.relatives(i).pop() if i in ("s3", "s4") else i for i in ids]

    report = run_experiment([unit], TRUTH, TruthGrounder(TRUTH, parents), (ALL_VARIANTS[0],))
    vr = report.variants["hier+style"]
    assert vr.error_kinds() == {PARENT_CHILD_CONFUSION: 2}
    assert vr.scores.correct == 1
    assert [m.missing for m in vr.mismatches] == [("s3",), ("s4",)]


def test_failed_slides_are_excluded_not_dropped(unit):
    other = make_unit(2)
    truth = GroundTruth({1: TRUTH.slides[1], 2: TRUTH.slides[1]})
    results = {1: GroundingResult(unit.object_order(), (("s3",), ("s4",), ("s5",)))}
    vr = score_predictions([unit, other], truth, results, [SlideFailure(2, "timeout")])
    assert vr.scores.f1 == 1.0
    assert [f.slide_number for f in vr.excluded] == [2]
    assert vr.as_dict()["excluded_slides"] == [{"slide_number": 2, "reason": "timeout"}]


def test_run_experiment_validates_truth(unit):
    with pytest.raises(ValidationError):
        run_experiment([unit], GroundTruth({1: {0: ("s99",)}}), TruthGrounder(TRUTH))


def test_table_layout(unit):
    report = run_experiment([unit], TRUTH, TruthGrounder(TRUTH))
    text = report.format_table(digits=4)
    lines = text.splitlines()
    assert "Hier:Present" in lines[0] and "Hier:Absent" in lines[0] and "Average" in lines[0]
    assert lines[2].startswith("Present") and lines[3].startswith("Absent")
    assert lines[-1].startswith("Average")
    assert text.count("1.0000") == 9
    data = json.loads(report.to_json())
    assert data["annotator"] == "test"
    assert set(data["table"]["cells"]) == {"style", "no-style"}


def test_report_json_keeps_full_precision():
    report = EvalReport()
    report.variants["plain"] = score_predictions(
        [make_unit()], TRUTH, {1: GroundingResult(make_unit().object_order(), (("s3",), ("s2",), ("s5",)))},
        variant=ALL_VARIANTS[3],
    )
    data = json.loads(report.to_json())
    assert data["variants"]["plain"]["f1"] == 2 / 3
    assert data["table"]["cells"]["no-style"]["no-hier"] == 2 / 3


def test_config_not_mutated(unit):
    config = GroundingConfig()
    run_experiment([unit], TRUTH, TruthGrounder(TRUTH), config=config)
    assert config.variant == ALL_VARIANTS[0]
