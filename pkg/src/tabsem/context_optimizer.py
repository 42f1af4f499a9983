"""Token-based cell encoding and decoding.

Encoding rewrites each table cell to the shortest token prefix that is unique
across the whole table, which cuts the token count of vocabulary-misaligned
content (domain terms, identifiers, measurements) without touching short
cells. The per-table codebook maps originals to encoded forms; decoding
restores the original lexicon in downstream model output. Codebooks are built
fresh per table and never shared across documents.

Encoding rules, applied to unique cell texts in ascending token count
(ties in document order):

* texts of at most 2 tokens are kept as-is (rewriting them gains nothing);
* longer texts start from their first 2 tokens' surfaces;
* the candidate is extended by one token surface at a time while it is empty,
  contains an unclosed ( [ or {, or collides with an already-assigned encoded
  form or any other cell's original text;
* if the tokens run out, the encoded form is the full original text.

The collision rule also covering other cells' originals is what makes
decoding unambiguous: no encoded form can shadow a value that legitimately
appears in the table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .table_ingest import CleanTable, _cell_nodes, _parse_table, normalize_text, render_table
from .tokenizer import TokenizerHandle, count_tokens, tokenize

_OPEN_TO_CLOSE = {"(": ")", "[": "]", "{": "}"}


class InvalidInput(ValueError):
    """An argument is outside the operation's domain."""


class JsonParseError(ValueError):
    """Input text is not valid JSON."""


@dataclass(frozen=True)
class CodebookEntry:
    original: str
    encoded: str


@dataclass
class Codebook:
    """Per-document bidirectional mapping between originals and encoded forms."""

    entries: list[CodebookEntry]
    tokenizer_name: str
    _by_encoded: dict[str, str] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        originals = [e.original for e in self.entries]
        encodeds = [e.encoded for e in self.entries]
        if len(set(originals)) != len(originals):
            raise InvalidInput("codebook originals are not unique")
        if len(set(encodeds)) != len(encodeds):
            raise InvalidInput("codebook encoded forms are not unique")
        other_originals = set(originals)
        for entry in self.entries:
            if entry.encoded != entry.original and entry.encoded in other_originals:
                raise InvalidInput(
                    f"encoded form {entry.encoded!r} shadows another cell's original text"
                )
        self._by_encoded = {e.encoded: e.original for e in self.entries}

    def original_for(self, encoded: str) -> str | None:
        return self._by_encoded.get(encoded)

    def to_json(self) -> str:
        doc = {
            "tokenizer": self.tokenizer_name,
            "entries": [{"original": e.original, "encoded": e.encoded} for e in self.entries],
        }
        return json.dumps(doc, ensure_ascii=False, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise JsonParseError(f"codebook is not valid JSON: {exc.msg}") from exc
        try:
            entries = [CodebookEntry(e["original"], e["encoded"]) for e in doc["entries"]]
            return cls(entries=entries, tokenizer_name=doc["tokenizer"])
        except (KeyError, TypeError) as exc:
            raise JsonParseError(f"codebook document missing field: {exc}") from exc


@dataclass(frozen=True)
class EncodedTable:
    """Table html with cell texts replaced by their encoded forms."""

    id: str
    html: str
    codebook: Codebook
    tokens_before: int
    tokens_after: int


def _unclosed_open_bracket(text: str) -> bool:
    return any(text.count(o) > text.count(c) for o, c in _OPEN_TO_CLOSE.items())


def encode_table(clean: CleanTable, handle: TokenizerHandle) -> EncodedTable:
    """Rewrite cell contents to minimal unique token prefixes."""
    texts = [cell.text for cell in clean.cells]
    unique = list(dict.fromkeys(texts))
    originals = set(unique)
    seqs = {t: tokenize(handle, t) for t in unique}
    ordered = sorted(unique, key=lambda t: len(seqs[t]))  # stable: ties keep document order

    assigned: dict[str, str] = {}
    taken: set[str] = set()
    for text in ordered:
        surfaces = seqs[text].surfaces
        n = len(surfaces)
        if n <= 2:
            candidate = text
        else:
            k = 2
            candidate = "".join(surfaces[:k])
            while k < n and (
                not candidate
                or _unclosed_open_bracket(candidate)
                or candidate in taken
                or (candidate in originals and candidate != text)
            ):
                candidate += surfaces[k]
                k += 1
        assigned[text] = candidate
        taken.add(candidate)

    encoded_html = render_table(_parse_table(clean.html), [assigned[t] for t in texts])
    tokens_before = count_tokens(handle, clean.html)
    tokens_after = count_tokens(handle, encoded_html)
    if tokens_after > tokens_before:
        # Degenerate vocabularies can make a prefix tokenize worse in context;
        # keep the table unencoded rather than emit a larger one.
        return EncodedTable(
            id=clean.id,
            html=clean.html,
            codebook=Codebook(
                entries=[CodebookEntry(t, t) for t in unique], tokenizer_name=handle.name
            ),
            tokens_before=tokens_before,
            tokens_after=tokens_before,
        )

    # Every unique cell gets an entry, identity mappings included: an
    # unchanged cell whose text embeds another cell's encoded form would
    # otherwise be corrupted by substring decoding, and only its own entry
    # (exact match, longest-first) shields it.
    entries = [CodebookEntry(t, assigned[t]) for t in unique]
    return EncodedTable(
        id=clean.id,
        html=encoded_html,
        codebook=Codebook(entries=entries, tokenizer_name=handle.name),
        tokens_before=tokens_before,
        tokens_after=tokens_after,
    )


def restore_html(enc: EncodedTable) -> str:
    """Rebuild the sanitized html by mapping each cell's encoded form back."""
    tree = _parse_table(enc.html)
    texts = []
    for node in _cell_nodes(tree):
        encoded = normalize_text(node.raw_text())
        original = enc.codebook.original_for(encoded)
        texts.append(encoded if original is None else original)
    return render_table(tree, texts)


def decode_text(text: str, codebook: Codebook) -> str:
    """Restore original cell texts inside an arbitrary string.

    Stage 1: if the whole string equals an encoded form, return its original.
    Stage 2: replace encoded forms as whole substrings, longest first,
    left-to-right, non-overlapping. Unmatched text passes through unchanged.
    """
    exact = codebook.original_for(text)
    if exact is not None:
        return exact

    spans: list[tuple[int, int, str]] = []
    occupied = [False] * len(text)
    for entry in sorted(codebook.entries, key=lambda e: len(e.encoded), reverse=True):
        if not entry.encoded:
            continue
        start = 0
        while True:
            i = text.find(entry.encoded, start)
            if i < 0:
                break
            j = i + len(entry.encoded)
            if not any(occupied[i:j]):
                spans.append((i, j, entry.original))
                occupied[i:j] = [True] * (j - i)
                start = j
            else:
                start = i + 1

    if not spans:
        return text
    spans.sort()
    out: list[str] = []
    pos = 0
    for i, j, original in spans:
        out.append(text[pos:i])
        out.append(original)
        pos = j
    out.append(text[pos:])
    return "".join(out)


def decode_json(json_text: str, codebook: Codebook) -> str:
    """Decode every object key and string scalar of a JSON document.

    Numbers, booleans, and nulls are untouched; structure is unchanged.
    """
    try:
        root = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise JsonParseError(f"line {exc.lineno}: {exc.msg}") from exc

    def walk(value):
        if isinstance(value, dict):
            return {decode_text(k, codebook): walk(v) for k, v in value.items()}
        if isinstance(value, list):
            return [walk(v) for v in value]
        if isinstance(value, str):
            return decode_text(value, codebook)
        return value

    return json.dumps(walk(root), ensure_ascii=False, indent=2)


def token_efficiency(tokens_before: int, tokens_after: int) -> float:
    """Percentage token reduction, (1 - after/before) * 100, to 2 decimals."""
    if tokens_before == 0:
        raise InvalidInput("tokens_before must be positive")
    if tokens_before < 0 or tokens_after < 0:
        raise InvalidInput("token counts must be non-negative")
    return round((1 - tokens_after / tokens_before) * 100, 2)
