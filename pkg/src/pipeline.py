"""
End-to-end extraction pipeline.

Wires segmentation, keyword completion, retrieval, summarization and value
extraction together, plus the Naive truncation baseline and the backend /
embedder factories shared by the CLI and the benchmark harness.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

from src.config import Config, PipelineConfig
from src.document_model import Document
from src.exceptions import AmbiguousNumber, ConfigError, NotANumber
from src.extraction import NormalizedValue, complete_keyword, extract_answer, extract_value
from src.llm_backend import CachedBackend, HttpBackend, LLMBackend, ScriptedBackend, record_replay
from src.retrieval import DEFAULT_EMBEDDER, Embedder, HttpEmbedder, RetrievalConfig, ScoredSegment, top_segments
from src.segmentation import SegmenterConfig, segment_document, serialize_document, truncate_tokens
from src.summarization import SummaryTrace, summarize
from src.tasks import ExtractionTask
from src.templates import TemplatePack, default_templates

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    completed_keyword: str
    retrieved: List[ScoredSegment]
    trace: Optional[SummaryTrace]
    raw_answer: str
    value: Optional[NormalizedValue] = None

    @property
    def llm_calls(self) -> int:
        return (len(self.trace.llm_calls) if self.trace else 0) + 1


def load_templates(config: PipelineConfig) -> TemplatePack:
    if config.template_dir:
        return TemplatePack.load(config.template_dir)
    return default_templates()


def build_backend(config: PipelineConfig) -> LLMBackend:
    """
    Create the LLM backend selected by config.

    scripted and replay read config.fixture_path; http reads the service
    settings from the environment. A record_path wraps the backend in a
    recorder, a cache_path in a persistent cache (outermost).

    Raises:
        ConfigError: If a required path or environment setting is missing
    """
    if config.backend in ("scripted", "replay"):
        if not config.fixture_path:
            raise ConfigError(f"backend {config.backend!r} needs fixture_path")
        backend: LLMBackend = ScriptedBackend.from_file(config.fixture_path)
    else:
        try:
            Config.validate_llm()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        backend = HttpBackend(Config.LLM_URL, Config.LLM_KEY)

    if config.record_path:
        backend = record_replay(backend, config.record_path)
    if config.cache_path:
        backend = CachedBackend(backend, config.cache_path)

    logger.info(f"Using LLM backend {backend.backend_id}")
    return backend


def build_baseline_backend(config: PipelineConfig) -> LLMBackend:
    """Backend for the Naive baseline; baseline_fixture_path replaces fixture_path when set."""
    if config.baseline_fixture_path:
        config = replace(config, fixture_path=config.baseline_fixture_path)
    return build_backend(config)


def build_embedder(config: PipelineConfig) -> Embedder:
    if config.embedder == "tf":
        return DEFAULT_EMBEDDER
    try:
        Config.validate_embedder()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return HttpEmbedder(Config.EMBED_URL, Config.EMBED_KEY)


def _answer(
    task: ExtractionTask,
    context: str,
    backend: LLMBackend,
    document: Document,
    templates: TemplatePack,
    numeric: bool,
    label: str = "",
) -> Tuple[str, Optional[NormalizedValue]]:
    """Raw answer plus its normalized value when numeric is set."""
    if not numeric:
        raw = extract_answer(task, context, backend, document.metadata, templates)
        logger.info(f"{document.id}{label}: {task.keyword!r} -> {raw!r}")
        return raw, None
    try:
        value = extract_value(task, context, backend, document.metadata, templates)
    except (NotANumber, AmbiguousNumber) as e:
        logger.info(f"{document.id}{label}: {task.keyword!r} -> {e.raw_answer!r} (unparsed)")
        raise
    logger.info(f"{document.id}{label}: {task.keyword!r} -> {value.raw!r}")
    return value.raw, value


def run_pipeline(
    document: Document,
    keyword: str,
    config: PipelineConfig,
    backend: LLMBackend,
    templates: Optional[TemplatePack] = None,
    embedder: Optional[Embedder] = None,
    numeric: bool = True,
) -> PipelineResult:
    """
    Extract one keyword's value from one document.

    Steps:
    1. Segment the document
    2. Complete the keyword with document metadata
    3. Retrieve the top-n segments
    4. Summarize them (document order unless refine_order is "similarity")
    5. Ask for the value and normalize it

    Args:
        document: Source document
        keyword: Bare keyword, e.g. "Revenue"
        config: Resolved pipeline configuration
        backend: LLM backend

    Returns:
        PipelineResult; value is None when numeric is False

    Raises:
        EmptyDocument, MissingMetadata, NotANumber, AmbiguousNumber, BackendError
    """
    templates = templates or load_templates(config)
    segments = segment_document(
        document, SegmenterConfig(config.max_tokens_per_segment, config.format)
    )
    completed = complete_keyword(keyword, document.metadata, config.mode)
    retrieved = top_segments(completed, segments, RetrievalConfig(config.top_n), embedder)

    ordered = [scored.segment for scored in retrieved]
    if config.refine_order == "document":
        ordered.sort(key=lambda segment: segment.position)

    trace = summarize(
        completed, ordered, backend,
        strategy=config.strategy,
        templates=templates,
        parallelism=config.parallelism,
        max_tokens_per_segment=config.max_tokens_per_segment,
        max_output_tokens=config.max_output_tokens,
    )
    task = ExtractionTask(index=0, doc_ref=document.id, keyword=keyword, config=config)
    raw, value = _answer(task, trace.final_summary, backend, document, templates, numeric)
    return PipelineResult(completed_keyword=completed, retrieved=retrieved, trace=trace, raw_answer=raw, value=value)


def run_naive(
    document: Document,
    keyword: str,
    config: PipelineConfig,
    backend: LLMBackend,
    templates: Optional[TemplatePack] = None,
    numeric: bool = True,
) -> PipelineResult:
    """
    Naive baseline: keep the head of the serialized document and prompt once.

    The whole document is serialized with config.format and truncated to
    config.naive_context_tokens tokens; that prefix stands in for the summary.
    """
    templates = templates or load_templates(config)
    completed = complete_keyword(keyword, document.metadata, config.mode)
    context = truncate_tokens(serialize_document(document, config.format), config.naive_context_tokens)
    task = ExtractionTask(index=0, doc_ref=document.id, keyword=keyword, config=config)
    raw, value = _answer(task, context, backend, document, templates, numeric, " (naive)")
    return PipelineResult(completed_keyword=completed, retrieved=[], trace=None, raw_answer=raw, value=value)
