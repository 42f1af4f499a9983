"""Intrinsic and extrinsic scoring of generated JSON against a source table.

The intrinsic score measures content preservation: the fraction of unique
cell texts that appear in the JSON's element set (object keys plus stringified
scalar values). The extrinsic score measures structural fidelity: every
root-to-leaf path of the ground-truth JSON becomes one question, and the
predicted JSON must answer it with the leaf value.

Both scores run in two modes. Structural mode is deterministic and offline:
questions come from a fixed template and answers are looked up by following
the path in the predicted JSON. LLM mode delegates question generation and
answer checking to a backend; the answer checker must reply with a predicted
answer followed by a final line of exactly MATCH or NO_MATCH.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .context_optimizer import JsonParseError
from .llm_gateway import BackendConfig, ChatRequest, GatewayError, complete
from .synthesizer import load_prompt_asset, strip_code_fence
from .table_ingest import CleanTable, normalize_text

QUESTION_TEMPLATE = "What is the value at path: {path}?"


class EmptyTable(ValueError):
    """The table has no cells to score against."""


@dataclass(frozen=True)
class SemanticJson:
    """A parsed JSON tree as produced by the model or a ground-truth file."""

    root: Any

    @classmethod
    def from_text(cls, text: str) -> "SemanticJson":
        try:
            return cls(root=json.loads(text))
        except json.JSONDecodeError as exc:
            raise JsonParseError(f"line {exc.lineno}: {exc.msg}") from exc


@dataclass(frozen=True)
class LeafPath:
    """Key/index sequence from the root to a scalar leaf."""

    segments: tuple[Any, ...]  # str keys and int array indices
    rendered: str

    @classmethod
    def make(cls, segments: tuple[Any, ...]) -> "LeafPath":
        rendered = " > ".join(str(s) for s in segments) if segments else "<root>"
        return cls(segments=segments, rendered=rendered)


@dataclass
class QAItem:
    path: LeafPath
    question: str | None
    expected: str
    predicted: str | None = None
    score: int | None = None  # 1, 0, or None when unscored
    flag: str | None = None


@dataclass
class EvalScores:
    isc: float
    esc: float | None
    per_cell_hits: list[tuple[str, bool]] = field(default_factory=list)
    qa_items: list[QAItem] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "isc": self.isc,
            "esc": self.esc,
            "per_cell_hits": [[cell, hit] for cell, hit in self.per_cell_hits],
            "qa_items": [
                {
                    "path": item.path.rendered,
                    "question": item.question,
                    "expected": item.expected,
                    "predicted": item.predicted,
                    "score": item.score,
                }
                for item in self.qa_items
            ],
        }


def stringify_scalar(value: Any) -> str:
    """Canonical string form: shortest round-trip decimals, true/false, null."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return str(value)


def json_elements(j: SemanticJson) -> set[str]:
    """Every object key and stringified scalar value, normalized and uniqued.

    Nulls are excluded; array indices contribute nothing.
    """
    elements: set[str] = set()

    def walk(value: Any) -> None:
        if isinstance(value, dict):
            for key, child in value.items():
                elements.add(normalize_text(key))
                walk(child)
        elif isinstance(value, list):
            for child in value:
                walk(child)
        elif value is not None:
            elements.add(normalize_text(stringify_scalar(value)))

    walk(j.root)
    return elements


def intrinsic_score(clean: CleanTable, j: SemanticJson) -> tuple[float, list[tuple[str, bool]]]:
    """Percentage of unique cell texts present in the JSON element set."""
    unique_cells = list(dict.fromkeys(normalize_text(c.text) for c in clean.cells))
    if not unique_cells:
        raise EmptyTable(f"table {clean.id!r} has no cells")
    element_set = json_elements(j)
    hits = [(cell, cell in element_set) for cell in unique_cells]
    isc = 100.0 * sum(1 for _, hit in hits if hit) / len(unique_cells)
    return isc, hits


def leaf_paths(gt: SemanticJson) -> list[LeafPath]:
    """Depth-first root-to-leaf paths; one per scalar leaf."""
    paths: list[LeafPath] = []

    def walk(value: Any, segments: tuple[Any, ...]) -> None:
        if isinstance(value, dict):
            for key, child in value.items():
                walk(child, segments + (key,))
        elif isinstance(value, list):
            for i, child in enumerate(value):
                walk(child, segments + (i,))
        else:
            paths.append(LeafPath.make(segments))

    walk(gt.root, ())
    return paths


def follow_path(root: Any, segments: tuple[Any, ...]) -> tuple[bool, Any]:
    """Walk segments from root; returns (found, value)."""
    value = root
    for seg in segments:
        if isinstance(value, dict) and seg in value:
            value = value[seg]
        elif isinstance(value, list) and isinstance(seg, int) and 0 <= seg < len(value):
            value = value[seg]
        else:
            return False, None
    if isinstance(value, (dict, list)):
        return False, None
    return True, value


def generate_questions(
    gt: SemanticJson,
    paths: list[LeafPath],
    cfg: BackendConfig | None = None,
    model: str = "default",
) -> list[QAItem]:
    """One QAItem per path; expected answer is the stringified leaf value.

    With cfg=None the question is the deterministic template. With a backend,
    the model is prompted once per path; a failed call leaves that item
    unscored but does not abort the batch.
    """
    prompt_template = load_prompt_asset("question_gen.txt") if cfg is not None else None
    gt_text = json.dumps(gt.root, ensure_ascii=False)
    items: list[QAItem] = []
    for path in paths:
        found, leaf = follow_path(gt.root, path.segments)
        if not found:
            raise ValueError(f"path {path.rendered!r} does not reach a leaf in the ground truth")
        expected = stringify_scalar(leaf)
        if cfg is None:
            items.append(QAItem(path=path, question=QUESTION_TEMPLATE.format(path=path.rendered), expected=expected))
            continue
        prompt = prompt_template.replace("{json}", gt_text).replace("{path}", path.rendered)
        try:
            reply = complete(cfg, ChatRequest(model=model, messages=[("user", prompt)]))
            items.append(QAItem(path=path, question=reply.content.strip(), expected=expected))
        except GatewayError as exc:
            items.append(QAItem(path=path, question=None, expected=expected, flag=f"question_generation_failed: {exc}"))
    return items


def extrinsic_score(
    pred: SemanticJson,
    items: list[QAItem],
    cfg: BackendConfig | None = None,
    model: str = "default",
) -> tuple[float, list[QAItem]]:
    """Score each QAItem against the predicted JSON; esc = 100 * hits / items.

    Structural mode (cfg=None) follows the item's path inside pred and
    compares normalized strings. LLM mode sends (pred JSON, question,
    expected) in a single prompt and scores 1 iff the final verdict line is
    MATCH; unparseable verdicts score 0 and are flagged.
    """
    if not items:
        raise ValueError("no QA items to score")
    if cfg is None:
        for item in items:
            found, leaf = follow_path(pred.root, item.path.segments)
            item.predicted = stringify_scalar(leaf) if found else None
            item.score = int(
                found and normalize_text(item.predicted) == normalize_text(item.expected)
            )
    else:
        prompt_template = load_prompt_asset("answer_eval.txt")
        pred_text = json.dumps(pred.root, ensure_ascii=False)
        for item in items:
            if item.question is None:
                continue  # stays unscored
            prompt = (
                prompt_template.replace("{json}", pred_text)
                .replace("{question}", item.question)
                .replace("{expected}", item.expected)
            )
            try:
                reply = complete(cfg, ChatRequest(model=model, messages=[("user", prompt)]))
            except GatewayError as exc:
                item.flag = f"evaluation_failed: {exc}"
                continue
            predicted, verdict = _parse_verdict(strip_code_fence(reply.content))
            item.predicted = predicted
            if verdict is None:
                item.score = 0
                item.flag = "unparseable_verdict"
            else:
                item.score = int(verdict)

    esc = 100.0 * sum(item.score or 0 for item in items) / len(items)
    return esc, items


def evaluate_pair(
    clean: CleanTable,
    pred: SemanticJson,
    gt: SemanticJson,
    cfg: BackendConfig | None = None,
    model: str = "default",
) -> EvalScores:
    """Full scoring of one prediction: intrinsic plus extrinsic in one pass."""
    isc, hits = intrinsic_score(clean, pred)
    items = generate_questions(gt, leaf_paths(gt), cfg=cfg, model=model)
    esc, items = extrinsic_score(pred, items, cfg=cfg, model=model)
    return EvalScores(isc=isc, esc=esc, per_cell_hits=hits, qa_items=items)


def _parse_verdict(content: str) -> tuple[str | None, bool | None]:
    lines = [line.strip() for line in content.strip().splitlines() if line.strip()]
    if not lines:
        return None, None
    verdict_line = lines[-1]
    predicted = "\n".join(lines[:-1]) or None
    if verdict_line == "MATCH":
        return predicted, True
    if verdict_line == "NO_MATCH":
        return predicted, False
    return content.strip() or None, None
