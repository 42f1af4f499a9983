"""JSON syntax diagnostics and the reflective repair loop.

validate_json classifies the structural failure patterns commonly seen in
model output (object streams missing their list enclosure, unbalanced curly
braces, missing commas, quotes dropped inside long digit groups). correct()
feeds the broken text back to the model with a fixed repair prompt and
iterates until the reply parses or the iteration budget runs out. No
deterministic auto-repair is attempted: classification is diagnostics only.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass

from .llm_gateway import BackendConfig, ChatRequest, complete
from .synthesizer import load_prompt_asset, strip_code_fence


class FailureMode(str, enum.Enum):
    MISSING_LIST_ENCLOSURE = "missing_list_enclosure"
    UNMATCHED_CURLY_BRACES = "unmatched_curly_braces"
    MISSING_COMMAS = "missing_commas"
    MISPLACED_QUOTES = "misplaced_quotes"
    OTHER = "other"


@dataclass(frozen=True)
class SyntaxDiagnosis:
    valid: bool
    error_offset: int | None = None
    failure_modes: frozenset[FailureMode] = frozenset()


@dataclass(frozen=True)
class CorrectionStep:
    input_text: str
    output_text: str
    diagnosis: SyntaxDiagnosis


@dataclass(frozen=True)
class CorrectionTrace:
    steps: tuple[CorrectionStep, ...]
    final_valid: bool
    iterations_used: int


# quotes inserted inside a digit run, e.g. 123,"456,789"
_QUOTE_IN_DIGITS = re.compile(r'\d\s*,?\s*"\s*\d|\d\s*"\s*,\s*\d')


def validate_json(text: str) -> SyntaxDiagnosis:
    """Parse-check text and classify the failure heuristically if invalid."""
    try:
        json.loads(text)
        return SyntaxDiagnosis(valid=True)
    except json.JSONDecodeError as exc:
        modes = set()
        if _looks_like_unwrapped_objects(text):
            modes.add(FailureMode.MISSING_LIST_ENCLOSURE)
        if _curly_braces_unbalanced(text):
            modes.add(FailureMode.UNMATCHED_CURLY_BRACES)
        if exc.msg == "Expecting ',' delimiter":
            modes.add(FailureMode.MISSING_COMMAS)
        if _QUOTE_IN_DIGITS.search(text):
            modes.add(FailureMode.MISPLACED_QUOTES)
        if not modes:
            modes.add(FailureMode.OTHER)
        return SyntaxDiagnosis(valid=False, error_offset=exc.pos, failure_modes=frozenset(modes))


def _looks_like_unwrapped_objects(text: str) -> bool:
    stripped = text.strip()
    if not stripped.startswith("{"):
        return False
    try:
        _, end = json.JSONDecoder().raw_decode(stripped)
    except json.JSONDecodeError:
        return False
    rest = stripped[end:].lstrip()
    if rest.startswith(","):
        rest = rest[1:].lstrip()
    return rest.startswith("{")


def _curly_braces_unbalanced(text: str) -> bool:
    depth = 0
    in_string = False
    escaped = False
    for ch in text:
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return True
    return depth != 0


def correction_prompt() -> str:
    return load_prompt_asset("syntax_correction.txt")


def correct(
    text: str,
    cfg: BackendConfig,
    max_iterations: int = 3,
    model: str = "default",
    max_output_tokens: int = 4096,
) -> tuple[str, CorrectionTrace]:
    """Iteratively ask the model to repair text until it parses as JSON.

    Valid input short-circuits with zero model calls. An invalid final text is
    still returned, with final_valid=False; callers decide what to do with it.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if validate_json(text).valid:
        return text, CorrectionTrace(steps=(), final_valid=True, iterations_used=0)

    prompt_template = correction_prompt()
    steps: list[CorrectionStep] = []
    current = text
    for _ in range(max_iterations):
        prompt = prompt_template.replace("{json_input}", current)
        request = ChatRequest(
            model=model,
            messages=[("user", prompt)],
            temperature=0.0,
            max_output_tokens=max_output_tokens,
        )
        reply = strip_code_fence(complete(cfg, request).content)
        diagnosis = validate_json(reply)
        steps.append(CorrectionStep(input_text=current, output_text=reply, diagnosis=diagnosis))
        current = reply
        if diagnosis.valid:
            break

    trace = CorrectionTrace(
        steps=tuple(steps),
        final_valid=steps[-1].diagnosis.valid,
        iterations_used=len(steps),
    )
    return current, trace
