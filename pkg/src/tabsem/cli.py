"""tabsem command line: run pipeline stages or whole corpora from the shell.

Exit codes: 0 ok, 2 input/parse error, 3 I/O error, 4 backend failure.
Settings resolve as CLI flags > TABSEM_* environment variables > --config
file (flat JSON) > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .context_optimizer import (
    InvalidInput,
    JsonParseError,
    encode_table,
    token_efficiency,
)
from .evaluator import EmptyTable, SemanticJson, evaluate_pair
from .harness import discover_corpus, run_pipeline, summarize
from .llm_gateway import BackendConfig, GatewayError, mock_script
from .synthesizer import EmptyCompletion, default_template, load_template, synthesize
from .syntax_corrector import correct
from .table_ingest import MalformedHtml, NoTableFound, RawTable, sanitize
from .tokenizer import VocabParseError, load_bpe, whitespace_tokenizer

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_BACKEND = 4


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NoTableFound, MalformedHtml, JsonParseError, VocabParseError, InvalidInput,
            EmptyTable, EmptyCompletion, ValueError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GatewayError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabsem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="encode table html; write .enc.html and .codebook.json")
    p.add_argument("input", help="html file or corpus directory")
    _add_common(p)
    p.add_argument("--out", help="output directory (default: alongside input)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("synthesize", help="send encoded html to the model; print/store raw JSON")
    p.add_argument("input", help="encoded (or sanitized) table html file")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--template", help="prompt template file with {table} placeholder")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("correct", help="run the reflective JSON repair loop on a file")
    p.add_argument("input", help="JSON text file to repair")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("pipeline", help="run the full pipeline over a corpus directory")
    p.add_argument("--corpus", required=True, help="directory of {id}.html (+ optional {id}.gt.json)")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--template", help="prompt template file")
    p.add_argument("--out", help="output directory (default: corpus dir)")
    p.add_argument("--report", help="JSONL run-record path (default: OUT/run_report.jsonl)")
    p.add_argument("--jobs", type=int, help="parallel tables (default 1)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="score predicted JSON against ground truth and table html")
    p.add_argument("--pred", required=True, help="predicted (decoded) JSON file")
    p.add_argument("--gt", required=True, help="ground-truth JSON file")
    p.add_argument("--html", required=True, help="source table html file")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--out", help="scores JSON path (default: PRED with .eval.json suffix)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate a JSONL run-record file")
    p.add_argument("jsonl", help="run-record file written by pipeline")
    p.set_defaults(func=cmd_report)

    return parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--tokenizer", help="'whitespace' or a BPE vocab/combined file path")
    p.add_argument("--merges", help="separate merges file for --tokenizer")
    p.add_argument("--max-iterations", type=int, dest="max_iterations",
                   help="syntax-corrector iteration budget (default 3)")
    p.add_argument("--mode", choices=["structural", "llm"], help="evaluation mode (default structural)")


def _add_backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", help="OpenAI-compatible base URL")
    p.add_argument("--model", help="model name sent to the backend")
    p.add_argument("--mock-script", dest="mock_script", help="JSON file: list of scripted responses")
    p.add_argument("--timeout", type=float, help="per-call timeout seconds")
    p.add_argument("--retries", type=int, help="transient-failure retries")


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise JsonParseError(f"config {path}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise JsonParseError(f"config {path}: expected a JSON object")
    return doc


def _setting(args, config: dict, name: str, env: str, default, cast=None):
    value = getattr(args, name, None)
    if value is None:
        raw = os.environ.get(env)
        if raw is not None:
            value = raw
        elif name in config:
            value = config[name]
    if value is None:
        return default
    return cast(value) if cast else value


def _resolve_tokenizer(args, config: dict):
    choice = _setting(args, config, "tokenizer", "TABSEM_TOKENIZER", "whitespace")
    if choice == "whitespace":
        return whitespace_tokenizer()
    merges = _setting(args, config, "merges", "TABSEM_MERGES", None)
    return load_bpe(choice, merges)


def _resolve_backend(args, config: dict) -> BackendConfig:
    script_path = _setting(args, config, "mock_script", "TABSEM_MOCK_SCRIPT", None)
    if script_path:
        doc = json.loads(Path(script_path).read_text(encoding="utf-8"))
        if not isinstance(doc, list) or not all(isinstance(s, str) for s in doc):
            raise JsonParseError(f"mock script {script_path}: expected a JSON list of strings")
        return mock_script(doc)
    endpoint = _setting(args, config, "endpoint", "TABSEM_ENDPOINT", None)
    if not endpoint:
        raise ValueError("no backend: pass --endpoint or --mock-script")
    return BackendConfig(
        backend_kind="http",
        endpoint_url=endpoint,
        api_key_env=str(config.get("api_key_env", "TABSEM_API_KEY")),
        timeout=_setting(args, config, "timeout", "TABSEM_TIMEOUT", 60.0, float),
        retries=_setting(args, config, "retries", "TABSEM_RETRIES", 2, int),
    )


def _resolve_template(args, config: dict):
    path = _setting(args, config, "template", "TABSEM_TEMPLATE", None)
    return load_template(path) if path else default_template()


# ---------------------------------------------------------------------------
# subcommands


def cmd_optimize(args) -> int:
    config = _load_config(args)
    handle = _resolve_tokenizer(args, config)
    input_path = Path(args.input)
    if input_path.is_dir():
        entries = discover_corpus(input_path)
        if not entries:
            raise ValueError(f"no *.html tables under {input_path}")
        pairs = [(e.table_id, e.html_path) for e in entries]
    else:
        pairs = [(input_path.stem, input_path)]
    out_dir = Path(args.out) if args.out else input_path if input_path.is_dir() else input_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    total_before = total_after = 0
    for table_id, html_path in pairs:
        clean = sanitize(RawTable(id=table_id, html=html_path.read_text(encoding="utf-8")))
        enc = encode_table(clean, handle)
        (out_dir / f"{table_id}.enc.html").write_text(enc.html, encoding="utf-8")
        (out_dir / f"{table_id}.codebook.json").write_text(enc.codebook.to_json(), encoding="utf-8")
        eff = token_efficiency(enc.tokens_before, enc.tokens_after)
        print(f"{table_id}: A={enc.tokens_before} B={enc.tokens_after} efficiency={eff:.2f}%")
        total_before += enc.tokens_before
        total_after += enc.tokens_after
    if len(pairs) > 1:
        eff = token_efficiency(total_before, total_after)
        print(f"TOTAL: A={total_before} B={total_after} efficiency={eff:.2f}%")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    config = _load_config(args)
    cfg = _resolve_backend(args, config)
    template = _resolve_template(args, config)
    model = _setting(args, config, "model", "TABSEM_MODEL", "default")
    html = Path(args.input).read_text(encoding="utf-8")
    # Stage command: accept already-encoded html verbatim, no re-encoding.
    from .context_optimizer import Codebook, EncodedTable

    enc = EncodedTable(
        id=Path(args.input).stem,
        html=html,
        codebook=Codebook(entries=[], tokenizer_name="external"),
        tokens_before=1,
        tokens_after=1,
    )
    raw_json = synthesize(enc, template, cfg, model=model)
    _emit(raw_json, args.out)
    return EXIT_OK


def cmd_correct(args) -> int:
    config = _load_config(args)
    cfg = _resolve_backend(args, config)
    model = _setting(args, config, "model", "TABSEM_MODEL", "default")
    max_iterations = _setting(args, config, "max_iterations", "TABSEM_MAX_ITERATIONS", 3, int)
    text = Path(args.input).read_text(encoding="utf-8")
    final_text, trace = correct(text, cfg, max_iterations=max_iterations, model=model)
    print(f"iterations={trace.iterations_used} final_valid={trace.final_valid}", file=sys.stderr)
    _emit(final_text, args.out)
    return EXIT_OK if trace.final_valid else EXIT_BACKEND


def cmd_pipeline(args) -> int:
    config = _load_config(args)
    handle = _resolve_tokenizer(args, config)
    cfg = _resolve_backend(args, config)
    template = _resolve_template(args, config)
    model = _setting(args, config, "model", "TABSEM_MODEL", "default")
    max_iterations = _setting(args, config, "max_iterations", "TABSEM_MAX_ITERATIONS", 3, int)
    mode = _setting(args, config, "mode", "TABSEM_MODE", "structural")
    jobs = _setting(args, config, "jobs", "TABSEM_JOBS", 1, int)
    out_dir = Path(args.out) if args.out else Path(args.corpus)
    report_path = Path(args.report) if args.report else out_dir / "run_report.jsonl"
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = run_pipeline(
        args.corpus, out_dir, handle, template, cfg, report_path,
        max_iterations=max_iterations, model=model, mode=mode, jobs=jobs,
    )
    if not reports:
        raise ValueError(f"no *.html tables under {args.corpus}")
    for report in reports:
        status = report.error or "ok"
        print(f"{report.table_id}: {status}")
    print(f"report: {report_path}")
    if all(r.error for r in reports):
        print("error: all tables failed", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    mode = _setting(args, config, "mode", "TABSEM_MODE", "structural")
    cfg = _resolve_backend(args, config) if mode == "llm" else None
    model = _setting(args, config, "model", "TABSEM_MODEL", "default")

    clean = sanitize(RawTable(id=Path(args.html).stem, html=Path(args.html).read_text(encoding="utf-8")))
    pred = SemanticJson.from_text(Path(args.pred).read_text(encoding="utf-8"))
    gt = SemanticJson.from_text(Path(args.gt).read_text(encoding="utf-8"))
    scores = evaluate_pair(clean, pred, gt, cfg=cfg, model=model)

    hit_count = sum(1 for _, h in scores.per_cell_hits if h)
    print(f"Intrinsic Score: {scores.isc:.2f}%  ({hit_count}/{len(scores.per_cell_hits)} unique cells)")
    print(f"{'Cell Content':<48} Present")
    for cell, hit in scores.per_cell_hits:
        print(f"{cell!r:<48} {'yes' if hit else 'NO'}")
    print()
    items = scores.qa_items
    scored = sum(item.score or 0 for item in items)
    print(f"Extrinsic Score: {scores.esc:.2f}%  ({scored}/{len(items)} paths)")
    print(f"{'Path':<64} {'Expected':<16} {'Predicted':<16} Score")
    for item in items:
        predicted = item.predicted if item.predicted is not None else "-"
        score = "-" if item.score is None else str(item.score)
        print(f"{item.path.rendered:<64} {item.expected:<16} {predicted:<16} {score}")
        if item.question:
            print(f"    Q: {item.question}")

    out_path = Path(args.out) if args.out else Path(args.pred).with_suffix(".eval.json")
    out_path.write_text(json.dumps(scores.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    summary = summarize(args.jsonl)
    print(f"tables: {summary['tables']} (failed: {summary['failed']})")
    print(f"tokens before (A): {summary['tokens_before']}")
    print(f"tokens after  (B): {summary['tokens_after']}")
    if summary["efficiency"] is not None:
        print(f"token efficiency: {summary['efficiency']:.2f}%")
    if summary["mean_isc"] is not None:
        print(f"mean ISC: {summary['mean_isc']:.2f}%")
    if summary["mean_esc"] is not None:
        print(f"mean ESC: {summary['mean_esc']:.2f}%")
    print(f"tables needing correction: {summary['corrected_tables']}")
    print(f"correction failures: {summary['correction_failures']}")
    return EXIT_OK


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        print(text)


if __name__ == "__main__":
    sys.exit(main())
