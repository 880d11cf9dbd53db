"""
Document segmentation.

Serializes tables to text, splits overlong elements and merges adjacent small
pieces into segments that respect a token budget.
"""

import csv
import io
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Protocol, Sequence, Tuple
from xml.sax.saxutils import escape

from src.document_model import Document, ElementKind, Table
from src.exceptions import ConfigError, EmptyDocument

logger = logging.getLogger(__name__)

SEGMENT_JOINER = "\n\n"
MIN_SEGMENT_TOKENS = 16


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> List[Tuple[int, int]]:
        """Return (start, end) character spans of each token."""
        ...

    def count(self, text: str) -> int:
        ...


class RegexTokenizer:
    """
    Deterministic stand-in for a model tokenizer.

    A token is a maximal run of alphanumeric characters or a single
    non-alphanumeric, non-whitespace character.
    """

    _TOKEN = re.compile(r"[^\W_]+|\S")

    def tokenize(self, text: str) -> List[Tuple[int, int]]:
        return [m.span() for m in self._TOKEN.finditer(text)]

    def count(self, text: str) -> int:
        return sum(1 for _ in self._TOKEN.finditer(text))


DEFAULT_TOKENIZER = RegexTokenizer()


def count_tokens(text: str, tokenizer: Optional[Tokenizer] = None) -> int:
    return (tokenizer or DEFAULT_TOKENIZER).count(text)


def truncate_tokens(text: str, max_tokens: int, tokenizer: Optional[Tokenizer] = None) -> str:
    """Keep the prefix of text holding at most max_tokens tokens."""
    spans = (tokenizer or DEFAULT_TOKENIZER).tokenize(text)
    if len(spans) <= max_tokens:
        return text
    if max_tokens <= 0:
        return ""
    return text[: spans[max_tokens - 1][1]]


class SerializationFormat(str, Enum):
    PLAIN = "PLAIN"
    CSV = "CSV"
    XML = "XML"
    HTML = "HTML"

    @classmethod
    def parse(cls, value: str) -> "SerializationFormat":
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ConfigError(
                f"Unknown serialization format {value!r}; expected one of {[f.value for f in cls]}"
            ) from None


@dataclass(frozen=True)
class SegmenterConfig:
    max_tokens_per_segment: int = 512
    format: SerializationFormat = SerializationFormat.PLAIN

    def __post_init__(self):
        if self.max_tokens_per_segment < MIN_SEGMENT_TOKENS:
            raise ConfigError(
                f"max_tokens_per_segment must be >= {MIN_SEGMENT_TOKENS}, "
                f"got {self.max_tokens_per_segment}"
            )


@dataclass(frozen=True)
class Segment:
    """A token-budgeted chunk of serialized document content.

    position is the segment's 0-based place in the document's segment list and
    is what retrieval tie-breaks and Refine ordering use.
    """

    text: str
    token_count: int
    source_indices: Tuple[int, ...]
    doc_id: str
    position: int = 0


def serialize_table(table: Table, format: SerializationFormat = SerializationFormat.PLAIN) -> str:
    """
    Render a table as text.

    PLAIN joins cells with " | " and rows with newlines. CSV follows RFC 4180
    quoting. XML and HTML escape &, < and >; HTML puts header rows in <th>.
    No format appends a trailing row terminator; in PLAIN a final row made of
    one empty cell is an empty last line.
    """
    if format is SerializationFormat.PLAIN:
        return "\n".join(" | ".join(row) for row in table.cells)

    if format is SerializationFormat.CSV:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerows(table.cells)
        return buffer.getvalue()[:-1]

    if format is SerializationFormat.XML:
        rows = "".join(
            "<row>" + "".join(f"<cell>{escape(cell)}</cell>" for cell in row) + "</row>"
            for row in table.cells
        )
        return f"<table>{rows}</table>"

    rows = []
    for i, row in enumerate(table.cells):
        tag = "th" if i < table.header_rows else "td"
        rows.append("<tr>" + "".join(f"<{tag}>{escape(cell)}</{tag}>" for cell in row) + "</tr>")
    return "<table>" + "".join(rows) + "</table>"


def _hard_split(text: str, budget: int, tokenizer: Tokenizer) -> List[str]:
    """Cut text into pieces of at most budget tokens at token boundaries."""
    spans = tokenizer.tokenize(text)
    pieces = []
    for start in range(0, len(spans), budget):
        group = spans[start:start + budget]
        pieces.append(text[group[0][0]:group[-1][1]])
    return pieces


_SENTENCE_BREAK = re.compile(r"(?<=[.!?])[ \t]+|\n")


def _pack(units: Sequence[str], budget: int, joiner: str, tokenizer: Tokenizer) -> List[str]:
    """Greedy first-fit packing of units; units larger than budget get hard-split."""
    pieces: List[str] = []
    current: List[str] = []
    for unit in units:
        unit_tokens = tokenizer.count(unit)
        if unit_tokens > budget:
            if current:
                pieces.append(joiner.join(current))
                current = []
            pieces.extend(_hard_split(unit, budget, tokenizer))
            continue
        if current and tokenizer.count(joiner.join(current + [unit])) > budget:
            pieces.append(joiner.join(current))
            current = []
        current.append(unit)
    if current:
        pieces.append(joiner.join(current))
    return pieces


def split_element(text: str, cfg: SegmenterConfig, tokenizer: Optional[Tokenizer] = None) -> List[str]:
    """
    Split an overlong text element at sentence boundaries.

    See split_text; the budget is cfg.max_tokens_per_segment.
    """
    return split_text(text, cfg.max_tokens_per_segment, tokenizer)


def split_text(text: str, budget: int, tokenizer: Optional[Tokenizer] = None) -> List[str]:
    """
    Split text at sentence boundaries so every piece fits budget tokens.

    Sentences (ending in ". ", "! ", "? " or a newline) are packed greedily
    while the piece stays within budget; a sentence longer than the budget is
    cut at token boundaries.

    Args:
        text: Element text
        budget: Maximum tokens per piece

    Returns:
        Pieces in order; [text] when already within budget
    """
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    if tokenizer.count(text) <= budget:
        return [text]
    sentences = [s.strip() for s in _SENTENCE_BREAK.split(text) if s.strip()]
    return _pack(sentences, budget, " ", tokenizer)


def split_table(table: Table, cfg: SegmenterConfig, tokenizer: Optional[Tokenizer] = None) -> List[str]:
    """Serialize a table with cfg.format, split to cfg.max_tokens_per_segment (see split_table_rows)."""
    return split_table_rows(table, cfg.max_tokens_per_segment, cfg.format, tokenizer)


def split_table_rows(
    table: Table,
    budget: int,
    format: SerializationFormat = SerializationFormat.PLAIN,
    tokenizer: Optional[Tokenizer] = None,
) -> List[str]:
    """
    Serialize a table, splitting at row boundaries when it exceeds the budget.

    Every chunk after the first repeats the header rows so each chunk stays
    self-describing. A chunk that still exceeds the budget with a single body
    row is cut at token boundaries.
    """
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    whole = serialize_table(table, format)
    if tokenizer.count(whole) <= budget:
        return [whole]

    header = list(table.cells[: table.header_rows])
    body = list(table.cells[table.header_rows:])

    def render(rows):
        return serialize_table(Table(cells=tuple(header + rows), header_rows=len(header)), format)

    pieces: List[str] = []
    current: List[Tuple[str, ...]] = []
    for row in body:
        if current and tokenizer.count(render(current + [row])) > budget:
            pieces.append(render(current))
            current = []
        current.append(row)
    if current or not body:
        pieces.append(render(current))

    result: List[str] = []
    for piece in pieces:
        if tokenizer.count(piece) > budget:
            result.extend(_hard_split(piece, budget, tokenizer))
        else:
            result.append(piece)
    return result


def segment_document(doc: Document, cfg: SegmenterConfig, tokenizer: Optional[Tokenizer] = None) -> List[Segment]:
    """
    Turn a document into token-budgeted segments.

    Tables are serialized with cfg.format, overlong elements are split, then
    adjacent pieces are merged left to right while the merged text (pieces
    joined by a blank line) stays within budget.

    Args:
        doc: Document to segment
        cfg: Segmenter configuration

    Returns:
        Segments in document order

    Raises:
        EmptyDocument: If the document has no elements or no tokens at all
    """
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    budget = cfg.max_tokens_per_segment
    if not doc.elements:
        raise EmptyDocument(f"Document {doc.id} has no elements")

    pieces: List[Tuple[str, int]] = []
    for index, element in enumerate(doc.elements):
        if element.kind is ElementKind.TABLE:
            parts = split_table(element.table, cfg, tokenizer)
        else:
            parts = split_element(element.text, cfg, tokenizer)
        pieces.extend((part, index) for part in parts)

    merged: List[Tuple[List[str], List[int]]] = []
    texts: List[str] = []
    indices: List[int] = []
    for text, index in pieces:
        if texts:
            candidate = SEGMENT_JOINER.join(texts + [text])
            if tokenizer.count(candidate) > budget:
                merged.append((texts, indices))
                texts, indices = [], []
        texts.append(text)
        indices.append(index)
    if texts:
        merged.append((texts, indices))

    segments = []
    for texts, indices in merged:
        text = SEGMENT_JOINER.join(texts)
        segments.append(Segment(
            text=text,
            token_count=tokenizer.count(text),
            source_indices=tuple(sorted(set(indices))),
            doc_id=doc.id,
            position=len(segments),
        ))

    if all(segment.token_count == 0 for segment in segments):
        raise EmptyDocument(f"Document {doc.id} contains no tokens")

    logger.info(
        f"Segmented {doc.id}: {len(doc.elements)} elements -> {len(segments)} segments "
        f"(budget={budget}, format={cfg.format.value})"
    )
    return segments


def serialize_document(doc: Document, format: SerializationFormat = SerializationFormat.PLAIN) -> str:
    """Whole-document text: elements serialized and joined by blank lines."""
    parts = []
    for element in doc.elements:
        if element.kind is ElementKind.TABLE:
            parts.append(serialize_table(element.table, format))
        else:
            parts.append(element.text)
    return SEGMENT_JOINER.join(parts)
