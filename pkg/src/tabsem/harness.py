"""Corpus pipeline runner: per-table processing, run records, aggregation.

A corpus is a directory of ``{id}.html`` inputs with optional ``{id}.gt.json``
ground truths. Each table flows through sanitize -> encode -> synthesize ->
correct -> decode -> (when ground truth exists) evaluate. One JSONL record is
appended per table; per-table failures are recorded without stopping the run.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .context_optimizer import decode_json, decode_text, encode_table, token_efficiency
from .evaluator import SemanticJson, evaluate_pair
from .llm_gateway import BackendConfig, GatewayError
from .synthesizer import EmptyCompletion, PromptTemplate, synthesize
from .syntax_corrector import correct
from .table_ingest import MalformedHtml, NoTableFound, RawTable, sanitize
from .tokenizer import TokenizerHandle


@dataclass
class RunReport:
    """One pipeline record per table; None fields are omitted from JSONL."""

    table_id: str
    backend: str = ""
    tokens_before: int | None = None
    tokens_after: int | None = None
    efficiency: float | None = None
    correction: dict | None = None  # {"iterations_used": int, "final_valid": bool}
    isc: float | None = None
    esc: float | None = None
    timings_ms: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        record = {
            "table_id": self.table_id,
            "backend": self.backend,
            "tokens_before": self.tokens_before,
            "tokens_after": self.tokens_after,
            "efficiency": self.efficiency,
            "correction": self.correction,
            "isc": self.isc,
            "esc": self.esc,
            "timings_ms": self.timings_ms,
            "error": self.error,
        }
        return {k: v for k, v in record.items() if v is not None}


@dataclass(frozen=True)
class CorpusEntry:
    table_id: str
    html_path: Path
    gt_path: Path | None


def discover_corpus(root: str | Path) -> list[CorpusEntry]:
    """List {id}.html inputs (sorted by id) with their optional ground truths."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"corpus root {root} is not a directory")
    entries = []
    for html_path in sorted(root.glob("*.html")):
        if html_path.name.endswith(".enc.html"):
            continue
        table_id = html_path.name[: -len(".html")]
        gt_path = root / f"{table_id}.gt.json"
        entries.append(
            CorpusEntry(table_id=table_id, html_path=html_path, gt_path=gt_path if gt_path.exists() else None)
        )
    return entries


class _Stopwatch:
    def __init__(self) -> None:
        self.laps: dict[str, float] = {}

    def time(self, stage: str):
        return _Lap(self, stage)


class _Lap:
    def __init__(self, watch: _Stopwatch, stage: str) -> None:
        self._watch = watch
        self._stage = stage

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self._watch.laps[self._stage] = round((time.perf_counter() - self._start) * 1000, 3)
        return False


def run_table(
    entry: CorpusEntry,
    handle: TokenizerHandle,
    template: PromptTemplate,
    cfg: BackendConfig,
    out_dir: Path,
    max_iterations: int = 3,
    model: str = "default",
    mode: str = "structural",
) -> RunReport:
    """Run the full pipeline for one table, persisting the decoded out file."""
    report = RunReport(table_id=entry.table_id, backend=cfg.name)
    watch = _Stopwatch()
    report.timings_ms = watch.laps
    try:
        raw = RawTable(id=entry.table_id, html=entry.html_path.read_text(encoding="utf-8"))
        with watch.time("sanitize"):
            clean = sanitize(raw)
        with watch.time("encode"):
            enc = encode_table(clean, handle)
        report.tokens_before = enc.tokens_before
        report.tokens_after = enc.tokens_after
        report.efficiency = token_efficiency(enc.tokens_before, enc.tokens_after)
        _write(out_dir / f"{entry.table_id}.enc.html", enc.html)
        _write(out_dir / f"{entry.table_id}.codebook.json", enc.codebook.to_json())

        with watch.time("synthesize"):
            raw_json = synthesize(enc, template, cfg, model=model)
        with watch.time("correct"):
            corrected, trace = correct(raw_json, cfg, max_iterations=max_iterations, model=model)
        report.correction = {"iterations_used": trace.iterations_used, "final_valid": trace.final_valid}

        with watch.time("decode"):
            if trace.final_valid:
                out_text = decode_json(corrected, enc.codebook)
            else:
                out_text = decode_text(corrected, enc.codebook)
        _write(out_dir / f"{entry.table_id}.out.json", out_text)

        if entry.gt_path is not None and trace.final_valid:
            with watch.time("evaluate"):
                pred = SemanticJson.from_text(out_text)
                gt = SemanticJson.from_text(entry.gt_path.read_text(encoding="utf-8"))
                scores = evaluate_pair(clean, pred, gt, cfg=cfg if mode == "llm" else None, model=model)
                report.isc = scores.isc
                report.esc = scores.esc
    except (NoTableFound, MalformedHtml, GatewayError, EmptyCompletion, ValueError, OSError) as exc:
        report.error = f"{type(exc).__name__}: {exc}"
    return report


def run_pipeline(
    corpus_dir: str | Path,
    out_dir: str | Path,
    handle: TokenizerHandle,
    template: PromptTemplate,
    cfg: BackendConfig,
    report_path: str | Path,
    max_iterations: int = 3,
    model: str = "default",
    mode: str = "structural",
    jobs: int = 1,
) -> list[RunReport]:
    """Run every table in the corpus; JSONL appends are serialized and atomic."""
    entries = discover_corpus(corpus_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = Path(report_path)
    lock = threading.Lock()
    reports: list[RunReport | None] = [None] * len(entries)

    def process(index: int, entry: CorpusEntry) -> None:
        report = run_table(
            entry, handle, template, cfg, out_dir,
            max_iterations=max_iterations, model=model, mode=mode,
        )
        reports[index] = report
        line = json.dumps(report.to_dict(), ensure_ascii=False) + "\n"
        with lock:
            with open(report_path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()

    if jobs <= 1:
        for i, entry in enumerate(entries):
            process(i, entry)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(process, i, e) for i, e in enumerate(entries)]
            for future in futures:
                future.result()
    return [r for r in reports if r is not None]


def summarize(report_path: str | Path) -> dict:
    """Aggregate a JSONL run record file.

    Corpus efficiency is computed from summed token counts, never by
    averaging per-table percentages.
    """
    records = []
    with open(report_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{report_path}:{lineno}: malformed record: {exc.msg}") from exc
            if not isinstance(record, dict) or "table_id" not in record:
                raise ValueError(f"{report_path}:{lineno}: record is not a run report")
            records.append(record)

    total_before = sum(r.get("tokens_before") or 0 for r in records)
    total_after = sum(r.get("tokens_after") or 0 for r in records)
    iscs = [r["isc"] for r in records if r.get("isc") is not None]
    escs = [r["esc"] for r in records if r.get("esc") is not None]
    corrections = [r["correction"] for r in records if r.get("correction") is not None]
    failures = [r for r in records if r.get("error")]
    return {
        "tables": len(records),
        "failed": len(failures),
        "tokens_before": total_before,
        "tokens_after": total_after,
        "efficiency": token_efficiency(total_before, total_after) if total_before else None,
        "mean_isc": round(sum(iscs) / len(iscs), 2) if iscs else None,
        "mean_esc": round(sum(escs) / len(escs), 2) if escs else None,
        "corrected_tables": sum(1 for c in corrections if c["iterations_used"] > 0),
        "correction_failures": sum(1 for c in corrections if not c["final_valid"]),
    }


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
