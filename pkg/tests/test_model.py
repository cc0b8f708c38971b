import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2sg.errors import ValidationError
from s2sg.model import (
    CorrespondenceMatrix,
    GroundingResult,
    NormalizedRect,
    SentenceElement,
    StyleInfo,
    grounding_to_matrix,
    matrix_to_grounding,
)

V = ("v1", "v2", "v3", "v4")


def test_worked_example_matrix():
    g = GroundingResult(V, (("v2", "v4"), ("v3",)))
    assert grounding_to_matrix(g).tolist() == [[0, 1, 0, 1], [0, 0, 1, 0]]


def test_empty_grounding_is_zero_row():
    g = GroundingResult(("v1", "v2"), ((),))
    assert grounding_to_matrix(g).tolist() == [[0, 0]]


def test_matrix_to_grounding_inverts_example():
    g = matrix_to_grounding([[0, 1, 0, 1], [0, 0, 1, 0]], V)
    assert g[0] == {"v2", "v4"}
    assert g[1] == {"v3"}


def test_all_zero_matrix_gives_empty_sets():
    g = matrix_to_grounding(np.zeros((2, 3), dtype=int), ("a", "b", "c"))
    assert g.as_sets() == [frozenset(), frozenset()]


def test_duplicate_object_order_rejected():
    with pytest.raises(ValidationError):
        grounding_to_matrix(GroundingResult(("v1", "v1"), ((),)))


def test_non_binary_matrix_rejected():
    with pytest.raises(ValidationError):
        matrix_to_grounding([[0, 2]], ("a", "b"))
    with pytest.raises(ValidationError):
        CorrespondenceMatrix(np.array([[0.5, 1.0]]))


def test_unknown_id_in_grounding_rejected():
    with pytest.raises(ValidationError) as err:
        GroundingResult(("a",), (("b",),))
    assert err.value.offenders == ["b"]


def test_duplicate_id_within_row_rejected():
    with pytest.raises(ValidationError):
        GroundingResult(("a", "b"), (("a", "a"),))


def test_from_mapping_dedupes_and_covers_all_rows():
    g = GroundingResult.from_mapping(("a", "b"), {0: ["b", "b", "a"]}, 3)
    assert g.groundings == (("b", "a"), (), ())


def test_row_sums_match_set_sizes_random():
    rng = np.random.default_rng(7)
    order = tuple(f"v{j}" for j in range(7))
    rows = []
    for _ in range(5):
        mask = rng.random(7) < 0.4
        rows.append(tuple(order[j] for j in range(7) if mask[j]))
    g = GroundingResult(order, tuple(rows))
    m = grounding_to_matrix(g)
    # brute-force per-cell membership
    for i in range(5):
        for j in range(7):
            assert m.entries[i, j] == (order[j] in rows[i])
        assert m.entries[i].sum() == len(rows[i])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.integers(1, 15), st.data())
def test_round_trip_on_binary_matrices(n, m, data):
    bits = data.draw(st.lists(st.lists(st.integers(0, 1), min_size=m, max_size=m), min_size=n, max_size=n))
    order = tuple(f"o{j}" for j in range(m))
    matrix = CorrespondenceMatrix(np.array(bits))
    assert grounding_to_matrix(matrix_to_grounding(matrix, order)) == matrix


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.data())
def test_column_permutation_keeps_sets(m, data):
    order = [f"o{j}" for j in range(m)]
    rows = data.draw(st.lists(st.sets(st.sampled_from(order)), min_size=1, max_size=5))
    g = GroundingResult(tuple(order), tuple(tuple(sorted(r)) for r in rows))
    perm = data.draw(st.permutations(range(m)))
    permuted = g.with_object_order([order[p] for p in perm])
    assert permuted.as_sets() == g.as_sets()
    assert (grounding_to_matrix(permuted).entries == grounding_to_matrix(g).entries[:, list(perm)]).all()


def test_rect_bounds_and_slices():
    with pytest.raises(ValidationError):
        NormalizedRect(0.5, 0, 0.4, 1)
    with pytest.raises(ValidationError):
        NormalizedRect(0, 0, 1.2, 1)
    assert NormalizedRect(0, 0, 1, 0.4).slice_rows(2) == [
        NormalizedRect(0, 0, 1, 0.2),
        NormalizedRect(0, 0.2, 1, 0.4),
    ]


def test_element_invariants():
    with pytest.raises(ValidationError):
        SentenceElement("s1", "A", 1, (SentenceElement("s2", "B", 1),))
    with pytest.raises(ValidationError):
        SentenceElement("s1", "   ")
    with pytest.raises(ValidationError):
        StyleInfo(font_size_pt=0)


def test_unit_helpers(unit):
    assert unit.object_order() == ("s1", "s2", "s3", "s4", "s5")
    assert unit.title_ids() == {"s1"}
    assert unit.relatives("s3") == {"s2"}
    assert unit.relatives("s2") == {"s3", "s4"}
    assert unit.without_titles().object_order() == ("s2", "s3", "s4", "s5")


def test_unit_rejects_duplicate_ids(unit):
    from dataclasses import replace

    with pytest.raises(ValidationError):
        replace(unit, objects=unit.objects + unit.objects[:1])
