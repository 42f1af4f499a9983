import random

import pytest

from tabsem import (
    EmptyTable,
    RawTable,
    SemanticJson,
    extrinsic_score,
    generate_questions,
    intrinsic_score,
    json_elements,
    leaf_paths,
    mock_script,
    sanitize,
)


def sj(obj):
    return SemanticJson(root=obj)


def table_of(cells, table_id="t"):
    html = "<table><tr>" + "".join(f"<td>{c}</td>" for c in cells) + "</tr></table>"
    return sanitize(RawTable(id=table_id, html=html))


# -- element set ----------------------------------------------------------------


def test_elements_of_flat_object():
    assert json_elements(sj({"a": 1})) == {"a", "1"}


def test_arrays_contribute_values_not_indices():
    assert json_elements(sj({"x": {"y": ["p", "q"]}})) == {"x", "y", "p", "q"}


def test_nulls_excluded_booleans_canonical():
    assert json_elements(sj({"a": None, "b": True, "c": 2.5})) == {"a", "b", "c", "true", "2.5"}


def test_integer_never_rendered_with_decimal_point():
    assert json_elements(sj({"n": 90})) == {"n", "90"}


def test_fixture_elements_match_reference_hits(gum_pred):
    elements = json_elements(gum_pred)
    assert "Gum use" in elements
    assert "5.32 ± 0.43" in elements
    assert "<0.01" not in elements
    assert "0.42" not in elements


# -- intrinsic -------------------------------------------------------------------


def test_intrinsic_reference_fixture(gum_clean, gum_pred):
    isc, hits = intrinsic_score(gum_clean, gum_pred)
    assert abs(isc - 94.11) <= 0.01
    misses = [cell for cell, hit in hits if not hit]
    assert misses == ["<0.01", "0.42"]
    assert len(hits) == 34


def test_intrinsic_full_coverage_is_100(gum_clean, gum_gt):
    unique = list(dict.fromkeys(c.text for c in gum_clean.cells))
    full = sj({"all": unique})
    isc, _ = intrinsic_score(gum_clean, full)
    assert isc == 100.0


def test_intrinsic_empty_json_is_0(gum_clean):
    isc, hits = intrinsic_score(gum_clean, sj({}))
    assert isc == 0.0
    assert all(not hit for _, hit in hits)


def test_intrinsic_requires_cells():
    clean = sanitize(RawTable(id="e", html="<table></table>"))
    with pytest.raises(EmptyTable):
        intrinsic_score(clean, sj({}))


def test_intrinsic_monotone_under_element_removal(gum_clean, gum_pred):
    isc_full, _ = intrinsic_score(gum_clean, gum_pred)
    pruned = dict(gum_pred.root)
    del pruned["No-gum use"]
    isc_pruned, _ = intrinsic_score(gum_clean, sj(pruned))
    assert isc_pruned <= isc_full


# -- leaf paths ------------------------------------------------------------------


def test_paths_of_nested_object():
    paths = leaf_paths(sj({"a": {"b": 1, "c": 2}}))
    assert [p.rendered for p in paths] == ["a > b", "a > c"]


def test_array_indices_are_segments():
    paths = leaf_paths(sj({"a": [10, 20]}))
    assert [p.rendered for p in paths] == ["a > 0", "a > 1"]
    assert paths[0].segments == ("a", 0)


def test_scalar_root_renders_as_root():
    paths = leaf_paths(sj("x"))
    assert len(paths) == 1
    assert paths[0].rendered == "<root>"
    assert paths[0].segments == ()


def test_empty_containers_have_no_leaves():
    assert leaf_paths(sj({"a": {}, "b": []})) == []


def test_reference_fixture_has_21_paths(gum_gt):
    paths = leaf_paths(gum_gt)
    assert len(paths) == 21
    rendered = [p.rendered for p in paths]
    assert "Gum use > Time > Baseline > Polyol > Subjects (n)" in rendered


def count_scalar_leaves(value):
    if isinstance(value, dict):
        return sum(count_scalar_leaves(v) for v in value.values())
    if isinstance(value, list):
        return sum(count_scalar_leaves(v) for v in value)
    return 1


def random_json(rng, depth=0):
    roll = rng.random()
    if depth >= 3 or roll < 0.35:
        return rng.choice([1, 2.5, "text", True, None, "5.32 ± 0.43"])
    if roll < 0.7:
        return {f"k{i}": random_json(rng, depth + 1) for i in range(rng.randint(0, 4))}
    return [random_json(rng, depth + 1) for _ in range(rng.randint(0, 4))]


def test_path_count_equals_scalar_leaf_count_oracle():
    rng = random.Random(13)
    for _ in range(200):
        tree = random_json(rng)
        assert len(leaf_paths(sj(tree))) == count_scalar_leaves(tree)


# -- question generation ---------------------------------------------------------


def test_structural_question_template():
    gt = sj({"a": {"b": 1}})
    items = generate_questions(gt, leaf_paths(gt))
    assert len(items) == 1
    assert items[0].question == "What is the value at path: a > b?"
    assert items[0].expected == "1"


def test_reference_fixture_expected_answers(gum_gt):
    items = generate_questions(gum_gt, leaf_paths(gum_gt))
    assert len(items) == 21
    by_path = {item.path.rendered: item.expected for item in items}
    assert by_path["Gum use > Time > Baseline > Polyol > Subjects (n)"] == "90"
    assert by_path["No-gum use > 24 months > p value one-way ANOVA > Xylitol > Mean ± SD"] == "<0.01"


def test_llm_mode_questions_come_from_backend():
    gt = sj({"a": {"b": 1}})
    cfg = mock_script(["Which value does the b field of a hold?"])
    items = generate_questions(gt, leaf_paths(gt), cfg=cfg)
    assert items[0].question == "Which value does the b field of a hold?"
    assert items[0].expected == "1"


# -- extrinsic --------------------------------------------------------------------


def test_structural_self_consistency(gum_gt):
    items = generate_questions(gum_gt, leaf_paths(gum_gt))
    esc, _ = extrinsic_score(gum_gt, items)
    assert esc == 100.0


def test_structural_reference_fixture(gum_gt, gum_pred):
    items = generate_questions(gum_gt, leaf_paths(gum_gt))
    esc, scored = extrinsic_score(gum_pred, items)
    assert abs(esc - 90.47) <= 0.05
    wrong = [item for item in scored if item.score == 0]
    assert {item.expected for item in wrong} == {"0.42", "<0.01"}


def test_structural_empty_prediction_scores_0(gum_gt):
    items = generate_questions(gum_gt, leaf_paths(gum_gt))
    esc, _ = extrinsic_score(sj({}), items)
    assert esc == 0.0


def test_structural_type_mismatch_still_matches_by_string():
    gt = sj({"a": {"n": 90}})
    pred = sj({"a": {"n": "90"}})
    items = generate_questions(gt, leaf_paths(gt))
    esc, _ = extrinsic_score(pred, items)
    assert esc == 100.0


def test_llm_mode_verdict_protocol():
    gt = sj({"a": 1, "b": 2})
    pred = sj({"a": 1, "b": 3})
    items = generate_questions(gt, leaf_paths(gt))
    cfg = mock_script(["1\nMATCH", "3\nNO_MATCH"])
    esc, scored = extrinsic_score(pred, items, cfg=cfg)
    assert esc == 50.0
    assert scored[0].predicted == "1"
    assert scored[1].score == 0


def test_llm_mode_unparseable_verdict_flagged():
    gt = sj({"a": 1})
    items = generate_questions(gt, leaf_paths(gt))
    cfg = mock_script(["I think the answer might be 1?"])
    esc, scored = extrinsic_score(sj({"a": 1}), items, cfg=cfg)
    assert esc == 0.0
    assert scored[0].flag == "unparseable_verdict"


def test_extrinsic_requires_items():
    with pytest.raises(ValueError):
        extrinsic_score(sj({}), [])
