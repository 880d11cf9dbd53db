"""
Task files and the document store.

Loads extraction tasks from JSONL with field validation and resolves their
document references against a directory of documents.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from src.config import PipelineConfig
from src.document_model import DocMetadata, Document, parse_html_doc, parse_json_doc
from src.exceptions import DocumentNotFound, MalformedInput

logger = logging.getLogger(__name__)

# Required fields for each task record
REQUIRED_FIELDS = ["doc", "keyword"]
EVALUATION_FIELDS = ["truth"]


@dataclass(frozen=True)
class ExtractionTask:
    """One keyword to extract from one document.

    ground_truth is a scale-resolved number, a string (for string-valued
    datasets) or None when only extracting. config is filled in by
    resolve_config once command-line flags are known.
    """

    index: int
    doc_ref: str
    keyword: str
    ground_truth: Optional[Union[float, str]] = None
    overrides: Dict[str, Any] = field(default_factory=dict)
    config: PipelineConfig = field(default_factory=PipelineConfig)

    @property
    def is_numeric(self) -> bool:
        return not isinstance(self.ground_truth, str)


def validate_fields(record: Dict[str, Any], required: List[str], where: str) -> None:
    """
    Validate that a task record contains all required fields.

    Raises:
        MalformedInput: If required fields are missing
    """
    missing = [name for name in required if name not in record]
    if missing:
        raise MalformedInput(
            f"{where} is missing required fields: {', '.join(missing)}. "
            f"Found fields: {', '.join(sorted(record))}"
        )


def parse_task(record: Any, index: int, where: str, require_truth: bool = True) -> ExtractionTask:
    if not isinstance(record, dict):
        raise MalformedInput(f"{where} must be a JSON object")
    validate_fields(record, REQUIRED_FIELDS + (EVALUATION_FIELDS if require_truth else []), where)

    keyword = record["keyword"]
    if not isinstance(keyword, str) or not keyword.strip():
        raise MalformedInput(f"{where} needs a non-empty string keyword")
    if not isinstance(record["doc"], str) or not record["doc"]:
        raise MalformedInput(f"{where} needs a non-empty string doc")

    truth = record.get("truth")
    if isinstance(truth, bool) or not isinstance(truth, (int, float, str, type(None))):
        raise MalformedInput(f"{where} truth must be a number or a string")
    if isinstance(truth, (int, float)):
        truth = float(truth)

    overrides = record.get("config")
    if overrides is None:
        overrides = {}
    if not isinstance(overrides, dict):
        raise MalformedInput(f"{where} config must be a JSON object")
    # reject unknown keys up front
    PipelineConfig.from_dict(overrides)

    return ExtractionTask(index=index, doc_ref=record["doc"], keyword=keyword, ground_truth=truth, overrides=overrides)


def load_tasks(path: Union[str, Path], require_truth: bool = True) -> List[ExtractionTask]:
    """
    Load a JSONL task file, one task per non-blank line.

    Args:
        path: Task file
        require_truth: Whether every task must carry a ground truth

    Returns:
        Tasks with index set to their position in the file

    Raises:
        MalformedInput: If the file is unreadable or a line is invalid
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise MalformedInput(f"Cannot read task file {path}: {e}") from e

    tasks = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}:{line_no}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedInput(f"{where} is not valid JSON: {e}") from e
        tasks.append(parse_task(record, len(tasks), where, require_truth))

    logger.info(f"Loaded {len(tasks)} tasks from {path}")
    return tasks


def load_document(path: Union[str, Path], metadata: Optional[DocMetadata] = None) -> Document:
    """
    Load one document from a .json (canonical) or .html file.

    HTML documents take their id from the file stem.

    Raises:
        DocumentNotFound: If the file does not exist
        MalformedInput: If it cannot be parsed
    """
    path = Path(path)
    if not path.is_file():
        raise DocumentNotFound(str(path))
    data = path.read_bytes()
    if path.suffix.lower() in (".html", ".htm"):
        return parse_html_doc(data, id=path.stem, metadata=metadata)
    return parse_json_doc(data)


class DocumentStore:
    """Documents indexed by id, with path fallback for task references."""

    def __init__(self, documents: Optional[List[Document]] = None, base_dir: Optional[Union[str, Path]] = None):
        self.documents: Dict[str, Document] = {}
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        for doc in documents or []:
            self.add(doc)

    def add(self, doc: Document) -> None:
        if doc.id in self.documents:
            logger.warning(f"Duplicate document id {doc.id}; keeping the first")
            return
        self.documents[doc.id] = doc

    @classmethod
    def from_directory(cls, directory: Union[str, Path], base_dir: Optional[Union[str, Path]] = None) -> "DocumentStore":
        directory = Path(directory)
        store = cls(base_dir=base_dir or directory)
        if not directory.is_dir():
            raise DocumentNotFound(str(directory))
        for path in sorted(directory.iterdir()):
            if path.suffix.lower() in (".json", ".html", ".htm"):
                store.add(load_document(path))
        logger.info(f"Loaded {len(store.documents)} documents from {directory}")
        return store

    def resolve(self, doc_ref: str) -> Document:
        """
        Find a document by id, else by path relative to base_dir.

        Raises:
            DocumentNotFound: If neither lookup succeeds
        """
        if doc_ref in self.documents:
            return self.documents[doc_ref]
        path = Path(doc_ref)
        if not path.is_absolute():
            path = self.base_dir / path
        if path.is_file():
            doc = load_document(path)
            self.documents.setdefault(doc_ref, doc)
            return doc
        logger.error(f"Document not found: {doc_ref}")
        raise DocumentNotFound(doc_ref)
