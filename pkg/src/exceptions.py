"""
Exception types for the extraction pipeline.

Input and contract violations derive from ValueError; anything raised while
talking to an LLM or embedding service derives from BackendError.
"""

from typing import Optional


class MalformedInput(ValueError):
    """Document, task file or fixture could not be parsed."""


class EmptyDocument(ValueError):
    """Document has nothing to segment."""


class NoSegments(ValueError):
    """An operation that needs at least one segment received none."""


class MissingMetadata(ValueError):
    """Keyword completion needs a metadata field the document lacks."""

    def __init__(self, field: str):
        super().__init__(f"Document metadata is missing required field: {field}")
        self.field = field


class EmptySummary(ValueError):
    """Extraction prompt requested with an empty summary."""


class NotANumber(ValueError):
    """No parseable numeric literal in a model answer."""

    def __init__(self, message: str, raw_answer: Optional[str] = None):
        super().__init__(message)
        self.raw_answer = raw_answer


class AmbiguousNumber(ValueError):
    """More than one numeric literal in a model answer."""

    def __init__(self, message: str, raw_answer: Optional[str] = None):
        super().__init__(message)
        self.raw_answer = raw_answer


class EmptyOutcomes(ValueError):
    """Accuracy requested over zero outcomes."""


class UndefinedRPD(ValueError):
    """Relative percentage difference of two zero accuracies."""


class DocumentNotFound(LookupError):
    """A task references a document the store cannot resolve."""

    def __init__(self, doc_ref: str):
        super().__init__(f"Document not found: {doc_ref}")
        self.doc_ref = doc_ref


class TemplateError(ValueError):
    """Template pack is incomplete or a template has an unknown placeholder."""


class ConfigError(ValueError):
    """Pipeline configuration failed validation."""


class StorageError(OSError):
    """Replay or cache file could not be written."""


class BackendError(RuntimeError):
    """Base class for failures raised by LLM and embedding backends.

    Summarization fills in call_index and call_purpose before re-raising so
    callers can tell which call in a chain failed.
    """

    call_index: Optional[int] = None
    call_purpose: Optional[str] = None

    def describe(self) -> str:
        if self.call_index is None:
            return str(self)
        return f"{self} (call {self.call_index}, {self.call_purpose})"


class NoFixtureMatch(BackendError):
    """Scripted backend has no fixture for a prompt."""

    def __init__(self, prompt: str):
        preview = prompt[:80].replace("\n", " ")
        super().__init__(f"No fixture matches prompt: {preview!r}")
        self.prompt = prompt


class TransportError(BackendError):
    """Remote service unreachable after all retry attempts."""


class BackendRefused(BackendError):
    """Remote service rejected the request; retrying will not help."""


class EmbedderUnavailable(BackendError):
    """External embedding service failed."""
