import json

import pytest

from tabsem import correct, mock_script, validate_json
from tabsem.syntax_corrector import FailureMode, correction_prompt


# -- validation and classification --------------------------------------------


def test_valid_json_has_empty_diagnosis():
    diag = validate_json('{"a": 1}')
    assert diag.valid
    assert diag.failure_modes == frozenset()
    assert diag.error_offset is None


def test_missing_list_enclosure():
    diag = validate_json('{"a":1}{"b":2}')
    assert not diag.valid
    assert FailureMode.MISSING_LIST_ENCLOSURE in diag.failure_modes


def test_missing_list_enclosure_with_comma_separator():
    diag = validate_json('{"a":1},{"b":2}')
    assert FailureMode.MISSING_LIST_ENCLOSURE in diag.failure_modes


def test_unmatched_curly_braces():
    diag = validate_json('{"a": {"b": 1}')
    assert not diag.valid
    assert FailureMode.UNMATCHED_CURLY_BRACES in diag.failure_modes


def test_missing_commas():
    diag = validate_json('{"a": 1 "b": 2}')
    assert not diag.valid
    assert FailureMode.MISSING_COMMAS in diag.failure_modes
    assert diag.error_offset is not None


def test_misplaced_quotes_in_long_number():
    diag = validate_json('{"n": 123,"456,789"}')
    assert not diag.valid
    assert FailureMode.MISPLACED_QUOTES in diag.failure_modes


def test_unclassifiable_error_is_other():
    diag = validate_json("certainly! here is your json")
    assert not diag.valid
    assert diag.failure_modes == frozenset({FailureMode.OTHER})


def test_braces_inside_strings_do_not_count():
    diag = validate_json('{"a": "{{{", "b": tru}')
    assert not diag.valid
    assert FailureMode.UNMATCHED_CURLY_BRACES not in diag.failure_modes


# -- the repair loop ------------------------------------------------------------


def test_valid_input_short_circuits_without_model_calls():
    cfg = mock_script(["should never be consumed"])
    final, trace = correct('{"a": 1}', cfg, max_iterations=3)
    assert final == '{"a": 1}'
    assert trace.final_valid
    assert trace.iterations_used == 0
    assert trace.steps == ()
    # the script cursor was never advanced
    assert cfg.script.next() == "should never be consumed"


def test_two_round_repair():
    cfg = mock_script(['{"a": 1', '{"a": 1}'])
    final, trace = correct('{"a":', cfg, max_iterations=3)
    assert final == '{"a": 1}'
    assert trace.final_valid
    assert trace.iterations_used == 2
    assert trace.steps[0].input_text == '{"a":'
    assert trace.steps[0].output_text == '{"a": 1'
    assert not trace.steps[0].diagnosis.valid
    assert trace.steps[1].input_text == '{"a": 1'
    assert trace.steps[1].diagnosis.valid


def test_bounded_loop_returns_invalid_final_text():
    cfg = mock_script(["{bad", "{worse", "{worst"])
    final, trace = correct("{broken", cfg, max_iterations=3)
    assert final == "{worst"
    assert not trace.final_valid
    assert trace.iterations_used == 3


def test_replies_are_fence_stripped():
    cfg = mock_script(['```json\n{"ok": true}\n```'])
    final, trace = correct("{broken", cfg, max_iterations=2)
    assert final == '{"ok": true}'
    assert trace.final_valid
    assert trace.iterations_used == 1


def test_prompt_substitutes_current_text():
    prompt = correction_prompt()
    assert "{json_input}" in prompt
    assert prompt.count("{json_input}") == 1


def test_final_text_parses_with_independent_parser():
    cfg = mock_script(['[{"row": 1}, {"row": 2}]'])
    final, trace = correct('{"row": 1}{"row": 2}', cfg, max_iterations=3)
    assert trace.final_valid
    json.loads(final)  # independent check, not validate_json


def test_max_iterations_must_be_positive():
    with pytest.raises(ValueError):
        correct("{bad", mock_script(["x"]), max_iterations=0)
