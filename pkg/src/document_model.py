"""
Hybrid document data model and ingestion.

A document is an ordered list of text and table elements plus metadata.
Documents arrive either in the canonical JSON format or as minimal HTML
(tables plus block-level text).
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from bs4 import BeautifulSoup, Comment, NavigableString, Tag

from src.exceptions import MalformedInput

logger = logging.getLogger(__name__)


class Scale(str, Enum):
    """Magnitude multiplier stated for a value or a whole document."""

    UNIT = "unit"
    THOUSAND = "thousand"
    MILLION = "million"
    BILLION = "billion"

    @property
    def multiplier(self) -> int:
        return _SCALE_MULTIPLIERS[self]


_SCALE_MULTIPLIERS = {
    Scale.UNIT: 1,
    Scale.THOUSAND: 10**3,
    Scale.MILLION: 10**6,
    Scale.BILLION: 10**9,
}


class ElementKind(str, Enum):
    TEXT = "text"
    TABLE = "table"


@dataclass(frozen=True)
class Table:
    """Rectangular grid of cell strings."""

    cells: Tuple[Tuple[str, ...], ...]
    header_rows: int = 0

    def __post_init__(self):
        if not self.cells:
            raise MalformedInput("Table must have at least one row")
        width = len(self.cells[0])
        if width < 1:
            raise MalformedInput("Table rows must have at least one column")
        if any(len(row) != width for row in self.cells):
            raise MalformedInput("Table rows must have equal column counts")
        if not 0 <= self.header_rows <= len(self.cells):
            raise MalformedInput(
                f"header_rows={self.header_rows} outside 0..{len(self.cells)}"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[str]], header_rows: int = 0) -> "Table":
        """Build a table, right-padding short rows with empty strings."""
        if not rows:
            return cls(cells=(("",),), header_rows=0)
        width = max(1, max(len(row) for row in rows))
        padded = tuple(
            tuple(str(cell) for cell in row) + ("",) * (width - len(row))
            for row in rows
        )
        return cls(cells=padded, header_rows=header_rows)

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def n_cols(self) -> int:
        return len(self.cells[0])


@dataclass(frozen=True)
class Element:
    kind: ElementKind
    text: Optional[str] = None
    table: Optional[Table] = None

    def __post_init__(self):
        if self.kind is ElementKind.TEXT and (self.text is None or self.table is not None):
            raise MalformedInput("Text element must carry text and no table")
        if self.kind is ElementKind.TABLE and (self.table is None or self.text is not None):
            raise MalformedInput("Table element must carry a table and no text")

    @classmethod
    def of_text(cls, text: str) -> "Element":
        return cls(kind=ElementKind.TEXT, text=text)

    @classmethod
    def of_table(cls, table: Table) -> "Element":
        return cls(kind=ElementKind.TABLE, table=table)


@dataclass(frozen=True)
class DocMetadata:
    company: Optional[str] = None
    time: Optional[str] = None
    scale_hint: Optional[Scale] = None


@dataclass(frozen=True)
class Document:
    id: str
    metadata: DocMetadata = field(default_factory=DocMetadata)
    elements: Tuple[Element, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise MalformedInput("Document id must be non-empty")


def parse_scale(value: Any) -> Optional[Scale]:
    """
    Parse a scale name, returning None for missing values.

    Raises:
        MalformedInput: If the value is not one of the known scales.
    """
    if value is None:
        return None
    try:
        return Scale(str(value).strip().lower())
    except ValueError:
        raise MalformedInput(
            f"Unknown scale_hint {value!r}; expected one of {[s.value for s in Scale]}"
        ) from None


def _metadata_from_dict(raw: Any) -> DocMetadata:
    if raw is None:
        return DocMetadata()
    if not isinstance(raw, dict):
        raise MalformedInput("metadata must be a JSON object")
    for key in ("company", "time"):
        if key in raw and raw[key] is not None and not isinstance(raw[key], str):
            raise MalformedInput(f"metadata.{key} must be a string")
    return DocMetadata(
        company=raw.get("company"),
        time=raw.get("time"),
        scale_hint=parse_scale(raw.get("scale_hint")),
    )


def _element_from_dict(raw: Any, position: int) -> Element:
    if not isinstance(raw, dict):
        raise MalformedInput(f"elements[{position}] must be a JSON object")
    kind = raw.get("kind")
    if kind == ElementKind.TEXT.value:
        text = raw.get("text")
        if not isinstance(text, str):
            raise MalformedInput(f"elements[{position}] text element needs a string 'text'")
        return Element.of_text(text)
    if kind == ElementKind.TABLE.value:
        cells = raw.get("cells")
        if not isinstance(cells, list) or not all(isinstance(row, list) for row in cells):
            raise MalformedInput(f"elements[{position}] table element needs 'cells' as a list of rows")
        if not cells:
            raise MalformedInput(f"elements[{position}] table has no rows")
        if any(not isinstance(cell, str) for row in cells for cell in row):
            raise MalformedInput(f"elements[{position}] table cells must be strings")
        header_rows = raw.get("header_rows", 0)
        if not isinstance(header_rows, int) or isinstance(header_rows, bool):
            raise MalformedInput(f"elements[{position}] header_rows must be an integer")
        return Element.of_table(Table.from_rows(cells, header_rows=header_rows))
    raise MalformedInput(f"elements[{position}] has unknown kind {kind!r}")


def parse_json_doc(data: bytes) -> Document:
    """
    Parse a document in the canonical JSON format.

    Short table rows are right-padded with empty strings.

    Args:
        data: UTF-8 encoded JSON

    Returns:
        Document with elements in file order (possibly zero elements)

    Raises:
        MalformedInput: On invalid JSON, bad encoding or missing fields
    """
    try:
        raw = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedInput(f"Document is not valid UTF-8 JSON: {e}") from e

    if not isinstance(raw, dict):
        raise MalformedInput("Document must be a JSON object")
    doc_id = raw.get("id")
    if not isinstance(doc_id, str) or not doc_id:
        raise MalformedInput("Document is missing a non-empty string 'id'")
    elements_raw = raw.get("elements")
    if not isinstance(elements_raw, list):
        raise MalformedInput("Document is missing the 'elements' list")

    elements = tuple(_element_from_dict(item, i) for i, item in enumerate(elements_raw))
    doc = Document(id=doc_id, metadata=_metadata_from_dict(raw.get("metadata")), elements=elements)
    logger.debug(f"Parsed JSON document {doc.id}: {len(doc.elements)} elements")
    return doc


def document_to_dict(doc: Document) -> Dict[str, Any]:
    """Inverse of parse_json_doc for schema-valid documents."""
    metadata: Dict[str, Any] = {}
    if doc.metadata.company is not None:
        metadata["company"] = doc.metadata.company
    if doc.metadata.time is not None:
        metadata["time"] = doc.metadata.time
    if doc.metadata.scale_hint is not None:
        metadata["scale_hint"] = doc.metadata.scale_hint.value

    elements: List[Dict[str, Any]] = []
    for element in doc.elements:
        if element.kind is ElementKind.TEXT:
            elements.append({"kind": "text", "text": element.text})
        else:
            elements.append({
                "kind": "table",
                "header_rows": element.table.header_rows,
                "cells": [list(row) for row in element.table.cells],
            })
    return {"id": doc.id, "metadata": metadata, "elements": elements}


def serialize_json_doc(doc: Document) -> bytes:
    return json.dumps(document_to_dict(doc), ensure_ascii=False, indent=2).encode("utf-8")


# Containers that end a line of text when ingesting HTML
_BLOCK_TAGS = {
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3",
    "h4", "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre",
    "section", "ul", "caption",
}
_SKIPPED_TAGS = {"script", "style", "head", "title", "noscript", "template"}


def _collapse(text: str) -> str:
    return " ".join(text.split())


def _html_table(tag: Tag) -> Table:
    rows: List[List[str]] = []
    header_flags: List[bool] = []
    for tr in tag.find_all("tr"):
        if tr.find_parent("table") is not tag:
            continue
        cells = tr.find_all(["td", "th"], recursive=False)
        if not cells:
            continue
        rows.append([_collapse(cell.get_text(" ")) for cell in cells])
        header_flags.append(all(cell.name == "th" for cell in cells))

    header_rows = 0
    for is_header in header_flags:
        if not is_header:
            break
        header_rows += 1
    return Table.from_rows(rows, header_rows=header_rows)


class _HtmlWalker:
    """Walks parsed HTML, emitting a Text element for each run of non-table text."""

    def __init__(self):
        self.elements: List[Element] = []
        self._lines: List[str] = []
        self._current: List[str] = []

    def _break_line(self):
        line = _collapse("".join(self._current))
        if line:
            self._lines.append(line)
        self._current = []

    def flush(self):
        self._break_line()
        if self._lines:
            self.elements.append(Element.of_text("\n".join(self._lines)))
        self._lines = []

    def walk(self, node: Tag):
        for child in node.children:
            if isinstance(child, Comment):
                continue
            if isinstance(child, NavigableString):
                self._current.append(str(child))
                continue
            if not isinstance(child, Tag) or child.name in _SKIPPED_TAGS:
                continue
            if child.name == "table":
                self.flush()
                self.elements.append(Element.of_table(_html_table(child)))
                continue
            is_block = child.name in _BLOCK_TAGS
            if is_block:
                self._break_line()
            self.walk(child)
            if is_block:
                self._break_line()


def parse_html_doc(data: bytes, id: str, metadata: Optional[DocMetadata] = None) -> Document:
    """
    Parse minimal HTML into a Document.

    Each <table> becomes one Table element (leading rows made only of <th>
    cells count as header rows). Contiguous non-table text becomes one Text
    element, one line per block-level container, whitespace collapsed.

    Args:
        data: HTML bytes, UTF-8 encoded
        id: Document id
        metadata: Document metadata supplied by the caller

    Returns:
        Document in source order

    Raises:
        MalformedInput: If the bytes are not valid UTF-8
    """
    try:
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    except UnicodeDecodeError as e:
        raise MalformedInput(f"HTML document {id} is not valid UTF-8: {e}") from e

    soup = BeautifulSoup(text, "html.parser")
    walker = _HtmlWalker()
    walker.walk(soup)
    walker.flush()

    doc = Document(id=id, metadata=metadata or DocMetadata(), elements=tuple(walker.elements))
    n_tables = sum(1 for e in doc.elements if e.kind is ElementKind.TABLE)
    logger.debug(f"Parsed HTML document {id}: {len(doc.elements)} elements, {n_tables} tables")
    return doc
