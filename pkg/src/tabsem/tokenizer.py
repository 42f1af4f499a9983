"""Pluggable subword tokenizers used for counting and prefix extraction.

Two implementations ship with the package:

* a byte-level BPE loaded from vocabulary/merges files (GPT-2 style byte
  alphabet, greedy lowest-rank merging), and
* a deterministic whitespace tokenizer for tests and offline runs: tokens are
  whitespace-prefixed words, so the separator always attaches to the
  following token.

Both guarantee the prefix property: concatenating the surfaces of any k-token
prefix reproduces a prefix of the input string, and the full concatenation
reproduces the input exactly.
"""

from __future__ import annotations

import codecs
import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable


class VocabParseError(ValueError):
    """A vocabulary or merges file is missing, unreadable, or inconsistent."""


@dataclass(frozen=True)
class TokenSeq:
    """Tokenization of one string: parallel ids and surface pieces."""

    token_ids: tuple[int, ...]
    surfaces: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class TokenizerHandle:
    """Immutable handle; identical input always yields an identical TokenSeq."""

    name: str
    vocab_size: int
    segment: Callable[[str], TokenSeq] = field(repr=False, compare=False)


def tokenize(handle: TokenizerHandle, text: str) -> TokenSeq:
    return handle.segment(text)


def count_tokens(handle: TokenizerHandle, text: str) -> int:
    return len(handle.segment(text))


# ---------------------------------------------------------------------------
# Whitespace test tokenizer

_WS_TOKEN = re.compile(r"\s*\S+|\s+\Z")


def _ws_segment(text: str) -> TokenSeq:
    surfaces = tuple(_WS_TOKEN.findall(text))
    ids = tuple(zlib.crc32(s.encode("utf-8")) & 0x7FFFFFFF for s in surfaces)
    return TokenSeq(token_ids=ids, surfaces=surfaces)


def whitespace_tokenizer() -> TokenizerHandle:
    """Split at whitespace; each run of whitespace attaches to the next word."""
    return TokenizerHandle(name="whitespace", vocab_size=2**31, segment=_ws_segment)


# ---------------------------------------------------------------------------
# Byte-level BPE


def bytes_to_unicode() -> dict[int, str]:
    """The standard reversible byte -> printable-unicode alphabet for BPE files."""
    visible = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    chars = visible[:]
    n = 0
    for b in range(256):
        if b not in visible:
            visible.append(b)
            chars.append(256 + n)
            n += 1
    return dict(zip(visible, (chr(c) for c in chars)))


_BYTE_ENCODER = bytes_to_unicode()
_BYTE_DECODER = {c: b for b, c in _BYTE_ENCODER.items()}


def _read_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise VocabParseError(f"{path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise VocabParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc


def _parse_merge_line(path, lineno: int, line: str) -> tuple[str, str]:
    parts = line.split(" ")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise VocabParseError(f"{path}:{lineno}: merge rule must be two space-separated tokens")
    return parts[0], parts[1]


def load_bpe(vocab_path: str | Path, merges_path: str | Path | None = None) -> TokenizerHandle:
    """Load a byte-level BPE tokenizer.

    Either pass a combined JSON file ({"vocab": {token: id}, "merges": ["a b", ...]},
    the "model" section of a tokenizer.json also works) as vocab_path, or a
    plain token->id JSON map plus a separate merges text file (one "left right"
    rule per line, rank = line order, '#' lines ignored).
    """
    vocab_path = Path(vocab_path)
    data = _read_json(vocab_path)
    if isinstance(data, dict) and "model" in data and isinstance(data["model"], dict):
        data = data["model"]

    if merges_path is None:
        if not isinstance(data, dict) or "vocab" not in data or "merges" not in data:
            raise VocabParseError(f"{vocab_path}: combined file needs 'vocab' and 'merges' fields")
        vocab = data["vocab"]
        merges = [
            _parse_merge_line(vocab_path, i + 1, m if isinstance(m, str) else " ".join(m))
            for i, m in enumerate(data["merges"])
        ]
    else:
        vocab = data["vocab"] if isinstance(data, dict) and "vocab" in data else data
        merges = []
        merges_path = Path(merges_path)
        try:
            lines = merges_path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise VocabParseError(f"{merges_path}: {exc}") from exc
        for i, line in enumerate(lines):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            merges.append(_parse_merge_line(merges_path, i + 1, line))

    if not isinstance(vocab, dict) or not all(isinstance(v, int) for v in vocab.values()):
        raise VocabParseError(f"{vocab_path}: vocab must map token strings to integer ids")

    missing = [b for b in range(256) if _BYTE_ENCODER[b] not in vocab]
    if missing:
        raise VocabParseError(
            f"{vocab_path}: vocab lacks base byte token for byte {missing[0]}; "
            "all 256 byte tokens are required for total coverage"
        )
    ranks: dict[tuple[str, str], int] = {}
    for i, (left, right) in enumerate(merges):
        if left not in vocab or right not in vocab or left + right not in vocab:
            raise VocabParseError(f"merge #{i + 1} '{left} {right}': parts or result missing from vocab")
        ranks.setdefault((left, right), i)

    segment = _make_bpe_segment(vocab, ranks)
    return TokenizerHandle(name=vocab_path.stem, vocab_size=len(vocab), segment=segment)


def _make_bpe_segment(vocab: dict[str, int], ranks: dict[tuple[str, str], int]):
    def apply_merges(symbols: list[str]) -> list[str]:
        while len(symbols) > 1:
            best_rank = None
            best_i = -1
            for i in range(len(symbols) - 1):
                rank = ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_i = rank, i
            if best_rank is None:
                break
            merged = symbols[best_i] + symbols[best_i + 1]
            symbols = symbols[:best_i] + [merged] + symbols[best_i + 2 :]
        return symbols

    def segment(text: str) -> TokenSeq:
        raw = text.encode("utf-8")
        symbols = apply_merges([_BYTE_ENCODER[b] for b in raw])
        ids = tuple(vocab[s] for s in symbols)
        # A token may end mid-character; the incremental decoder buffers the
        # partial bytes and emits the character with the token that completes
        # it, so surface concatenation stays byte-exact.
        decoder = codecs.getincrementaldecoder("utf-8")()
        surfaces = tuple(
            decoder.decode(bytes(_BYTE_DECODER[ch] for ch in s)) for s in symbols
        )
        return TokenSeq(token_ids=ids, surfaces=surfaces)

    return segment
