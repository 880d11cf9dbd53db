"""
Value extraction from a keyword-focused summary.

Completes the user's keyword with document metadata, composes the extraction
prompt for the configured variant and shots, calls the backend and
normalizes the answer into a comparable number.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

from src.document_model import DocMetadata, Scale
from src.exceptions import (
    AmbiguousNumber,
    ConfigError,
    EmptySummary,
    MissingMetadata,
    NotANumber,
)
from src.llm_backend import CompletionRequest, LLMBackend
from src.templates import TemplatePack, default_templates

if TYPE_CHECKING:
    from src.tasks import ExtractionTask

logger = logging.getLogger(__name__)

MAX_SHOTS = 3


class PromptVariant(str, Enum):
    """Extraction prompt variants.

    R adds the precision requirement, S adds an example with a rounded answer,
    SP adds an example whose answer keeps full precision.
    """

    TD_O = "TD_O"
    TD_R = "TD_R"
    TD_S = "TD_S"
    TD_RS = "TD_RS"
    TD_SP = "TD_SP"
    TD_RSP = "TD_RSP"

    @classmethod
    def parse(cls, value: str) -> "PromptVariant":
        try:
            return cls(str(value).strip().upper().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"Unknown prompt variant {value!r}") from None

    @property
    def has_precision_clause(self) -> bool:
        return self in (PromptVariant.TD_R, PromptVariant.TD_RS, PromptVariant.TD_RSP)

    @property
    def example_template(self) -> Optional[str]:
        if self in (PromptVariant.TD_S, PromptVariant.TD_RS):
            return "shot_plain"
        if self in (PromptVariant.TD_SP, PromptVariant.TD_RSP):
            return "shot_precision"
        return None


class CompletionMode(str, Enum):
    K = "K"
    K_C = "K_C"
    K_T = "K_T"
    K_T_C = "K_T_C"

    @classmethod
    def parse(cls, value: str) -> "CompletionMode":
        try:
            return cls(str(value).strip().upper().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"Unknown keyword completion mode {value!r}") from None


# Precision-bearing examples used as configured shots
DEFAULT_SHOTS: Tuple[Tuple[str, str], ...] = (
    (
        "Summary: Total assets of Sample Industries in FY2019 were $12,480.75 million at year end.\n"
        "Keyword: Total assets of Sample Industries in FY2019",
        "12,480.75 million",
    ),
    (
        "Summary: Sample Industries reported a net loss of $(86.4) million for FY2019.\n"
        "Keyword: Net income of Sample Industries in FY2019",
        "(86.4) million",
    ),
    (
        "Summary: Operating margin of Sample Industries in FY2019 was 14.27%.\n"
        "Keyword: Operating margin of Sample Industries in FY2019",
        "14.27%",
    ),
)


@dataclass(frozen=True)
class ShotConfig:
    shot_count: int = 1
    shots: Tuple[Tuple[str, str], ...] = field(default=DEFAULT_SHOTS[:1])

    def __post_init__(self):
        if not 0 <= self.shot_count <= MAX_SHOTS:
            raise ConfigError(f"shot_count must be in [0, {MAX_SHOTS}], got {self.shot_count}")
        if len(self.shots) != self.shot_count:
            raise ConfigError(f"ShotConfig has {len(self.shots)} shots but shot_count={self.shot_count}")

    @classmethod
    def from_count(cls, shot_count: int, library: Sequence[Tuple[str, str]] = DEFAULT_SHOTS) -> "ShotConfig":
        return cls(shot_count=shot_count, shots=tuple(library[:shot_count]))


@dataclass(frozen=True)
class NormalizedValue:
    magnitude: float
    scale_applied: Scale
    is_percent: bool
    raw: str


def complete_keyword(keyword: str, metadata: DocMetadata, mode: CompletionMode = CompletionMode.K_T_C) -> str:
    """
    Enrich a bare keyword with the document's company and time period.

    Raises:
        MissingMetadata: If the mode needs a field the metadata lacks
    """
    if mode is CompletionMode.K:
        return keyword
    if mode in (CompletionMode.K_C, CompletionMode.K_T_C) and not metadata.company:
        raise MissingMetadata("company")
    if mode in (CompletionMode.K_T, CompletionMode.K_T_C) and not metadata.time:
        raise MissingMetadata("time")

    if mode is CompletionMode.K_C:
        return f"{keyword} of {metadata.company}"
    if mode is CompletionMode.K_T:
        return f"{keyword} in {metadata.time}"
    return f"{keyword} of {metadata.company} in {metadata.time}"


def _render_shot(index: int, example_input: str, example_output: str) -> str:
    return f"Example {index}:\n{example_input}\nAnswer: {example_output}"


def build_extraction_prompt(
    completed_keyword: str,
    summary: str,
    variant: PromptVariant = PromptVariant.TD_RSP,
    shots: Optional[ShotConfig] = None,
    templates: Optional[TemplatePack] = None,
) -> str:
    """
    Compose the extraction prompt.

    Order: base task description, precision clause (R variants), the
    variant's own example (S / SP variants), then the configured shots.

    Raises:
        EmptySummary: If summary is empty or whitespace
    """
    if not summary or not summary.strip():
        raise EmptySummary("Extraction needs a non-empty summary")
    templates = templates or default_templates()
    shots = shots if shots is not None else ShotConfig()

    parts = [templates.render("extract_base", keyword=completed_keyword, summary=summary)]
    if variant.has_precision_clause:
        parts.append(templates.render("precision_clause"))
    if variant.example_template:
        parts.append(templates.render(variant.example_template))
    for i, (example_input, example_output) in enumerate(shots.shots, start=1):
        parts.append(_render_shot(i, example_input, example_output))
    return "\n\n".join(parts)


_NUMBER = re.compile(
    r"(?<![A-Za-z\d.,])"
    r"(?:\d{1,3}(?:,\d{3})+|\d+)(?!,?\d)(?:\.\d+)?(?:[eE][+-]?\d+)?"
    r"|(?<![A-Za-z\d])\.\d+(?:[eE][+-]?\d+)?"
)
_SCALE_WORD = re.compile(r"^\s*\)?\s*(thousand|million|billion)s?\b", re.IGNORECASE)
_CURRENCY = "$€£"


def normalize_numeric(raw: str, doc_scale_hint: Optional[Scale] = None) -> NormalizedValue:
    """
    Parse a model answer into a scale-resolved number.

    Currency symbols and thousands separators are dropped, parentheses or a
    leading minus make the value negative, an adjacent scale word multiplies
    it, otherwise the document scale hint applies. Percentages keep their face
    value and ignore the hint.

    Args:
        raw: Model answer
        doc_scale_hint: Document-level scale, if known

    Returns:
        NormalizedValue with the original answer in raw

    Raises:
        NotANumber: If no numeric literal is present
        AmbiguousNumber: If two or more numeric literals are present
    """
    matches = list(_NUMBER.finditer(raw))
    if not matches:
        if any(c.isdigit() for c in raw):
            raise NotANumber(f"Malformed number in answer {raw!r}", raw)
        raise NotANumber(f"No numeric value in answer {raw!r}", raw)
    if len(matches) > 1:
        raise AmbiguousNumber(
            f"Answer {raw!r} contains {len(matches)} numbers: {', '.join(m.group() for m in matches)}",
            raw,
        )

    match = matches[0]
    prefix = raw[: match.start()].rstrip().rstrip(_CURRENCY).rstrip()
    suffix = raw[match.end():]

    try:
        value = Decimal(match.group().replace(",", ""))
    except InvalidOperation as e:
        raise NotANumber(f"Unparseable number in answer {raw!r}", raw) from e

    negative = prefix.endswith(("-", "−")) or (prefix.endswith("(") and ")" in suffix)
    is_percent = suffix.lstrip().startswith("%") or "percent" in suffix.lower()

    scale_match = _SCALE_WORD.match(suffix)
    if scale_match:
        scale = Scale(scale_match.group(1).lower())
    elif doc_scale_hint is not None and not is_percent:
        scale = doc_scale_hint
    else:
        scale = Scale.UNIT

    magnitude = float(value * scale.multiplier)
    if not math.isfinite(magnitude):
        raise NotANumber(f"Answer {raw!r} is not a finite number", raw)
    if negative:
        magnitude = -magnitude
    return NormalizedValue(magnitude=magnitude, scale_applied=scale, is_percent=is_percent, raw=raw)


def request_answer(
    completed_keyword: str,
    summary: str,
    backend: LLMBackend,
    variant: PromptVariant = PromptVariant.TD_RSP,
    shots: Optional[ShotConfig] = None,
    templates: Optional[TemplatePack] = None,
    max_output_tokens: int = 256,
) -> str:
    """Build the extraction prompt and return the backend's raw answer, stripped."""
    prompt = build_extraction_prompt(completed_keyword, summary, variant, shots, templates)
    response = backend.complete(CompletionRequest(prompt=prompt, max_output_tokens=max_output_tokens))
    logger.debug(f"Extraction answer for {completed_keyword!r}: {response.text!r}")
    return response.text.strip()


def extract_answer(
    task: "ExtractionTask",
    summary: str,
    backend: LLMBackend,
    metadata: DocMetadata,
    templates: Optional[TemplatePack] = None,
) -> str:
    """Ask for the task's value under its resolved config; returns the raw answer."""
    config = task.config
    completed = complete_keyword(task.keyword, metadata, config.mode)
    return request_answer(
        completed, summary, backend,
        variant=config.variant,
        shots=ShotConfig.from_count(config.shot_count),
        templates=templates,
        max_output_tokens=config.max_output_tokens,
    )


def extract_value(
    task: "ExtractionTask",
    summary: str,
    backend: LLMBackend,
    metadata: DocMetadata,
    templates: Optional[TemplatePack] = None,
) -> NormalizedValue:
    """
    Extract and normalize the task's value from a summary.

    The prompt follows the task's resolved configuration (variant, completion
    mode, shot count); the backend is called once.

    Args:
        task: Task with a resolved config
        summary: Summary produced for this task
        backend: LLM backend
        metadata: Metadata of the task's document

    Returns:
        NormalizedValue, raw holding the model's answer

    Raises:
        MissingMetadata: Before any call, if the mode needs absent metadata
        NotANumber, AmbiguousNumber: With raw_answer set to the model's answer
    """
    raw = extract_answer(task, summary, backend, metadata, templates)
    return normalize_numeric(raw, metadata.scale_hint)


def format_plain(magnitude: float) -> str:
    """Render a magnitude in plain decimal notation (no exponent, no trailing .0)."""
    value = Decimal(repr(magnitude))
    if value == value.to_integral_value():
        value = value.quantize(Decimal(1))
    return format(value, "f")


def fold_text(value: str) -> str:
    return " ".join(value.split()).casefold()
