"""HTML table ingestion: sanitize raw markup and extract the ordered cell inventory.

Sanitization keeps only the structural table tags (table, thead, tbody, tfoot,
tr, td, th, caption) and the rowspan/colspan attributes on cells. Everything
else is dropped: styling attributes disappear, inline formatting tags (b, i,
span, sup, sub, ...) are flattened to their text, <br> becomes a single space,
and script/style/noscript content is removed outright. The output is minified
(no whitespace between tags) and cell text is NFC-normalized with internal
whitespace runs collapsed, so sanitizing twice is byte-stable.
"""

from __future__ import annotations

import html as htmlmod
import re
import unicodedata
from dataclasses import dataclass, field
from html.parser import HTMLParser

STRUCTURAL_TAGS = frozenset({"table", "thead", "tbody", "tfoot", "tr", "td", "th", "caption"})
CELL_TAGS = frozenset({"td", "th"})
SECTION_TAGS = frozenset({"thead", "tbody", "tfoot"})
KEPT_ATTRS = ("rowspan", "colspan")

_WS_RUN = re.compile(r"\s+")


class NoTableFound(ValueError):
    """The document contains no <table> element."""


class MalformedHtml(ValueError):
    """The parser could not recover a usable tree from the input."""


def normalize_text(text: str) -> str:
    """NFC-normalize, collapse whitespace runs to single spaces, and trim."""
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", text)).strip()


@dataclass(frozen=True)
class RawTable:
    """Unprocessed HTML document expected to contain at least one table."""

    id: str
    html: str


@dataclass(frozen=True)
class Cell:
    """One td/th in document order; text is normalized visible content."""

    index: int
    text: str


@dataclass(frozen=True)
class CleanTable:
    """Sanitized, minified table plus its ordered cell inventory."""

    id: str
    html: str
    cells: tuple[Cell, ...]


def sanitize(raw: RawTable) -> CleanTable:
    """Parse raw HTML and return the first table, sanitized and minified.

    Raises NoTableFound if the document has no <table>, MalformedHtml if the
    parser fails outright.
    """
    tree = _parse_table(raw.html)
    if tree is None:
        raise NoTableFound(f"no <table> element in document {raw.id!r}")
    texts = [normalize_text(node.raw_text()) for node in _cell_nodes(tree)]
    html_out = render_table(tree, texts)
    cells = tuple(Cell(index=i, text=t) for i, t in enumerate(texts))
    return CleanTable(id=raw.id, html=html_out, cells=cells)


def extract_cells(clean: CleanTable) -> list[Cell]:
    """Ordered cell contents of a sanitized table; duplicates retained."""
    return list(clean.cells)


# ---------------------------------------------------------------------------
# Internal tree model. encode/decode stages reparse the canonical html with
# _parse_table and re-render with replacement texts, so the round trip must be
# byte-exact for sanitizer output.


@dataclass
class _Element:
    tag: str  # table | thead | tbody | tfoot | tr
    children: list = field(default_factory=list)


@dataclass
class _Leaf:
    tag: str  # td | th | caption
    attrs: list[tuple[str, str]] = field(default_factory=list)
    parts: list[str] = field(default_factory=list)

    def raw_text(self) -> str:
        return "".join(self.parts)


class _TableParser(HTMLParser):
    """Captures the first <table> of a document as an _Element tree.

    html.parser is a tokenizer, not a tree builder, so the common omissions in
    real-world tables (unclosed td/tr, cells outside any tr) are repaired here
    with implicit closes and an implicit row.
    """

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.table: _Element | None = None
        self.done = False
        self._section: _Element | None = None
        self._row: _Element | None = None
        self._leaf: _Leaf | None = None  # open td/th/caption receiving text
        self._nested_tables = 0
        self._suppress = 0  # script/style/noscript depth

    # -- tag events --------------------------------------------------------

    def handle_starttag(self, tag, attrs):
        if self.done:
            return
        if tag in ("script", "style", "noscript"):
            self._suppress += 1
            return
        if self.table is None:
            if tag == "table":
                self.table = _Element("table")
            return
        if self._nested_tables:
            if tag == "table":
                self._nested_tables += 1
            elif tag == "br":
                self._append_text(" ")
            return
        if tag == "table":
            self._nested_tables = 1
        elif tag == "caption":
            if self._leaf is None:
                self._close_row()
                self._leaf = _Leaf("caption")
                self.table.children.append(self._leaf)
        elif tag in SECTION_TAGS:
            self._close_row()
            self._section = _Element(tag)
            self.table.children.append(self._section)
        elif tag == "tr":
            self._close_row()
            self._row = _Element("tr")
            (self._section or self.table).children.append(self._row)
        elif tag in CELL_TAGS:
            self._close_leaf()
            if self._row is None:
                self._row = _Element("tr")
                (self._section or self.table).children.append(self._row)
            kept = [(k, v if v is not None else "") for k, v in attrs if k in KEPT_ATTRS]
            self._leaf = _Leaf(tag, attrs=kept)
            self._row.children.append(self._leaf)
        elif tag == "br":
            self._append_text(" ")
        # any other tag is flattened: its text flows via handle_data

    def handle_startendtag(self, tag, attrs):
        if tag == "br":
            if not self.done and not self._suppress:
                self._append_text(" ")
        else:
            self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if self.done:
            return
        if tag in ("script", "style", "noscript"):
            self._suppress = max(0, self._suppress - 1)
            return
        if self.table is None:
            return
        if self._nested_tables:
            if tag == "table":
                self._nested_tables -= 1
            return
        if tag == "table":
            self._close_row()
            self._section = None
            self.done = True
        elif tag in CELL_TAGS or tag == "caption":
            self._close_leaf()
        elif tag == "tr":
            self._close_leaf()
            self._row = None
        elif tag in SECTION_TAGS:
            self._close_row()
            self._section = None

    def handle_data(self, data):
        if not self.done and not self._suppress:
            self._append_text(data)

    # -- helpers -----------------------------------------------------------

    def _append_text(self, text: str) -> None:
        if self._leaf is not None:
            self._leaf.parts.append(text)

    def _close_leaf(self) -> None:
        self._leaf = None

    def _close_row(self) -> None:
        self._leaf = None
        self._row = None


def _parse_table(source: str) -> _Element | None:
    parser = _TableParser()
    try:
        parser.feed(source)
        parser.close()
    except Exception as exc:  # html.parser rarely raises, but when it does: give up
        raise MalformedHtml(str(exc)) from exc
    return parser.table


def _cell_nodes(table: _Element) -> list[_Leaf]:
    out: list[_Leaf] = []

    def walk(node) -> None:
        if isinstance(node, _Leaf):
            if node.tag in CELL_TAGS:
                out.append(node)
            return
        for child in node.children:
            walk(child)

    walk(table)
    return out


def render_table(table: _Element, cell_texts: list[str]) -> str:
    """Serialize a parsed table with the given per-cell texts (document order).

    cell_texts must have one entry per td/th; callers pass either the
    normalized originals (sanitize) or replacement texts (cell encoding).
    """
    cells = _cell_nodes(table)
    if len(cell_texts) != len(cells):
        raise ValueError(f"expected {len(cells)} cell texts, got {len(cell_texts)}")
    by_id = {id(node): text for node, text in zip(cells, cell_texts)}

    def emit(node) -> str:
        if isinstance(node, _Leaf):
            if node.tag == "caption":
                body = htmlmod.escape(normalize_text(node.raw_text()), quote=False)
                return f"<caption>{body}</caption>"
            attrs = "".join(
                f' {name}="{htmlmod.escape(value, quote=True)}"' for name, value in node.attrs
            )
            body = htmlmod.escape(by_id[id(node)], quote=False)
            return f"<{node.tag}{attrs}>{body}</{node.tag}>"
        inner = "".join(emit(child) for child in node.children)
        return f"<{node.tag}>{inner}</{node.tag}>"

    return emit(table)
