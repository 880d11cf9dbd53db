"""
Keyword-focused summarization of retrieved segments.

Refine threads one evolving summary through the segments in order.
Map-Reduce summarizes each segment independently (in parallel) and then
combines the partial summaries.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

from src.exceptions import BackendError, ConfigError, NoSegments
from src.llm_backend import CompletionRequest, LLMBackend
from src.segmentation import Segment, count_tokens
from src.templates import TemplatePack, default_templates

logger = logging.getLogger(__name__)

MAP_OUTPUT_JOINER = "\n\n"
DEFAULT_PARALLELISM = 4


class SummarizationStrategy(str, Enum):
    REFINE = "refine"
    MAP_REDUCE = "map-reduce"

    @classmethod
    def parse(cls, value: str) -> "SummarizationStrategy":
        normalized = str(value).strip().lower().replace("_", "-")
        if normalized == "mapreduce":
            normalized = cls.MAP_REDUCE.value
        try:
            return cls(normalized)
        except ValueError:
            raise ConfigError(
                f"Unknown summarization strategy {value!r}; expected refine or map-reduce"
            ) from None


class CallPurpose(str, Enum):
    INIT = "Init"
    REFINE = "Refine"
    MAP = "Map"
    REDUCE = "Reduce"


@dataclass(frozen=True)
class SummaryCall:
    purpose: CallPurpose
    prompt: str
    response: str


@dataclass
class SummaryTrace:
    final_summary: str
    llm_calls: List[SummaryCall] = field(default_factory=list)

    def purposes(self) -> List[str]:
        return [call.purpose.value for call in self.llm_calls]


def _call(
    backend: LLMBackend,
    prompt: str,
    purpose: CallPurpose,
    index: int,
    max_output_tokens: int,
) -> str:
    try:
        return backend.complete(CompletionRequest(prompt=prompt, max_output_tokens=max_output_tokens)).text
    except BackendError as e:
        e.call_index = index
        e.call_purpose = purpose.value
        logger.error(f"{purpose.value} call {index} failed: {e}")
        raise


def refine_summarize(
    keyword: str,
    segments: Sequence[Segment],
    backend: LLMBackend,
    templates: Optional[TemplatePack] = None,
    max_output_tokens: int = 256,
) -> SummaryTrace:
    """
    Summarize segments with the Refine strategy.

    The first segment goes through the Init template; each later segment is
    folded into the current summary with the Refine template. Segments are
    processed in the order given.

    Args:
        keyword: Completed keyword
        segments: Segments, already in processing order
        backend: LLM backend

    Returns:
        SummaryTrace whose final_summary is the last response

    Raises:
        NoSegments: If segments is empty
        BackendError: With call_index/call_purpose set on the failing call
    """
    if not segments:
        raise NoSegments("Refine summarization needs at least one segment")
    templates = templates or default_templates()

    calls: List[SummaryCall] = []
    prompt = templates.render("refine_init", keyword=keyword, segment=segments[0].text)
    summary = _call(backend, prompt, CallPurpose.INIT, 0, max_output_tokens)
    calls.append(SummaryCall(CallPurpose.INIT, prompt, summary))

    for i, segment in enumerate(segments[1:], start=1):
        prompt = templates.render(
            "refine_step", keyword=keyword, current_summary=summary, segment=segment.text
        )
        summary = _call(backend, prompt, CallPurpose.REFINE, i, max_output_tokens)
        calls.append(SummaryCall(CallPurpose.REFINE, prompt, summary))

    logger.info(f"Refine summary for {keyword!r} built with {len(calls)} calls")
    return SummaryTrace(final_summary=summary, llm_calls=calls)


def _pack_outputs(outputs: List[str], budget: int) -> List[List[str]]:
    batches: List[List[str]] = []
    current: List[str] = []
    for output in outputs:
        if current and count_tokens(MAP_OUTPUT_JOINER.join(current + [output])) > budget:
            batches.append(current)
            current = []
        current.append(output)
    if current:
        batches.append(current)
    return batches


def map_reduce_summarize(
    keyword: str,
    segments: Sequence[Segment],
    backend: LLMBackend,
    templates: Optional[TemplatePack] = None,
    parallelism: int = DEFAULT_PARALLELISM,
    max_tokens_per_segment: int = 512,
    max_output_tokens: int = 256,
) -> SummaryTrace:
    """
    Summarize segments with the Map-Reduce strategy.

    Map calls run concurrently (up to parallelism) and are reassembled in
    segment order. With two or more segments one Reduce call combines the map
    outputs; if the joined outputs exceed max_tokens_per_segment they are
    reduced in budget-sized batches first. A single segment needs no Reduce.

    Args:
        keyword: Completed keyword
        segments: Segments in document order
        backend: LLM backend, safe for concurrent calls
        parallelism: Maximum concurrent Map calls

    Returns:
        SummaryTrace with Map calls first (segment order) then Reduce calls

    Raises:
        NoSegments: If segments is empty
        BackendError: With call_index/call_purpose set on the failing call
    """
    if not segments:
        raise NoSegments("Map-Reduce summarization needs at least one segment")
    templates = templates or default_templates()

    prompts = [templates.render("map", keyword=keyword, segment=s.text) for s in segments]
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        outputs = list(pool.map(
            lambda item: _call(backend, item[1], CallPurpose.MAP, item[0], max_output_tokens),
            enumerate(prompts),
        ))
    calls = [SummaryCall(CallPurpose.MAP, p, o) for p, o in zip(prompts, outputs)]

    if len(outputs) == 1:
        logger.info(f"Map-Reduce summary for {keyword!r}: single segment, no reduce")
        return SummaryTrace(final_summary=outputs[0], llm_calls=calls)

    def reduce(batch: List[str]) -> str:
        prompt = templates.render("reduce", keyword=keyword, map_outputs=MAP_OUTPUT_JOINER.join(batch))
        response = _call(backend, prompt, CallPurpose.REDUCE, len(calls), max_output_tokens)
        calls.append(SummaryCall(CallPurpose.REDUCE, prompt, response))
        return response

    level = outputs
    while count_tokens(MAP_OUTPUT_JOINER.join(level)) > max_tokens_per_segment:
        batches = _pack_outputs(level, max_tokens_per_segment)
        if len(batches) == len(level):
            break
        level = [reduce(batch) if len(batch) > 1 else batch[0] for batch in batches]
        if len(level) == 1:
            logger.info(f"Map-Reduce summary for {keyword!r} built with {len(calls)} calls")
            return SummaryTrace(final_summary=level[0], llm_calls=calls)

    final = reduce(level)
    logger.info(f"Map-Reduce summary for {keyword!r} built with {len(calls)} calls")
    return SummaryTrace(final_summary=final, llm_calls=calls)


def summarize(
    keyword: str,
    segments: Sequence[Segment],
    backend: LLMBackend,
    strategy: SummarizationStrategy = SummarizationStrategy.REFINE,
    templates: Optional[TemplatePack] = None,
    parallelism: int = DEFAULT_PARALLELISM,
    max_tokens_per_segment: int = 512,
    max_output_tokens: int = 256,
) -> SummaryTrace:
    if strategy is SummarizationStrategy.MAP_REDUCE:
        return map_reduce_summarize(
            keyword, segments, backend, templates,
            parallelism=parallelism,
            max_tokens_per_segment=max_tokens_per_segment,
            max_output_tokens=max_output_tokens,
        )
    return refine_summarize(keyword, segments, backend, templates, max_output_tokens=max_output_tokens)
