import csv
import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.config import PipelineConfig
from src.document_model import DocMetadata, Scale
from src.exceptions import AmbiguousNumber, ConfigError, EmptySummary, MissingMetadata, NotANumber
from src.extraction import (
    DEFAULT_SHOTS,
    CompletionMode,
    PromptVariant,
    ShotConfig,
    build_extraction_prompt,
    complete_keyword,
    extract_value,
    format_plain,
    fold_text,
    normalize_numeric,
    request_answer,
)
from src.llm_backend import CountingBackend, ScriptedBackend
from src.tasks import ExtractionTask
from src.templates import default_templates

ACME = DocMetadata(company="Acme Corp", time="FY2022", scale_hint=Scale.MILLION)


@pytest.mark.parametrize("mode, expected", [
    (CompletionMode.K, "Revenue"),
    (CompletionMode.K_C, "Revenue of Acme Corp"),
    (CompletionMode.K_T, "Revenue in FY2022"),
    (CompletionMode.K_T_C, "Revenue of Acme Corp in FY2022"),
])
def test_complete_keyword(mode, expected):
    assert complete_keyword("Revenue", ACME, mode) == expected


@pytest.mark.parametrize("mode, missing", [
    (CompletionMode.K_C, "company"),
    (CompletionMode.K_T_C, "company"),
])
def test_complete_keyword_without_company(mode, missing):
    with pytest.raises(MissingMetadata) as info:
        complete_keyword("Revenue", DocMetadata(time="FY2022"), mode)
    assert info.value.field == missing


def test_complete_keyword_without_time():
    with pytest.raises(MissingMetadata) as info:
        complete_keyword("Revenue", DocMetadata(company="Acme"), CompletionMode.K_T)
    assert info.value.field == "time"
    assert complete_keyword("Revenue", DocMetadata(), CompletionMode.K) == "Revenue"


names = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz &.-0123456789", min_size=1, max_size=20)


@settings(max_examples=20)
@given(names.filter(str.strip), names.filter(str.strip), names.filter(str.strip))
def test_full_completion_template(keyword, company, time):
    completed = complete_keyword(keyword, DocMetadata(company=company, time=time), CompletionMode.K_T_C)
    assert completed == f"{keyword} of {company} in {time}"


PRECISION_CLAUSE = default_templates().text("precision_clause")
SHOT_PLAIN = default_templates().text("shot_plain")
SHOT_PRECISION = default_templates().text("shot_precision")


@pytest.mark.parametrize(
    "variant, mode, shot_count",
    list(itertools.product(PromptVariant, CompletionMode, range(4))),
)
def test_prompt_matrix(variant, mode, shot_count):
    completed = complete_keyword("Net Income", ACME, mode)
    prompt = build_extraction_prompt(
        completed, "Net income was 612 million.", variant, ShotConfig.from_count(shot_count)
    )

    assert f'"{completed}"' in prompt
    assert "Net income was 612 million." in prompt
    assert (PRECISION_CLAUSE in prompt) == variant.has_precision_clause
    assert (SHOT_PLAIN in prompt) == (variant in (PromptVariant.TD_S, PromptVariant.TD_RS))
    assert (SHOT_PRECISION in prompt) == (variant in (PromptVariant.TD_SP, PromptVariant.TD_RSP))
    for i in range(1, 4):
        assert (f"Example {i}:" in prompt) == (i <= shot_count)


def test_precision_clause_only_in_r_variants():
    rsp = build_extraction_prompt("Revenue", "s", PromptVariant.TD_RSP)
    plain = build_extraction_prompt("Revenue", "s", PromptVariant.TD_O)
    assert PRECISION_CLAUSE in rsp
    assert PRECISION_CLAUSE not in plain


def test_prompt_part_order():
    prompt = build_extraction_prompt("Revenue", "s", PromptVariant.TD_RSP, ShotConfig.from_count(2))
    positions = [
        prompt.index("Summary:\ns"),
        prompt.index(PRECISION_CLAUSE),
        prompt.index(SHOT_PRECISION),
        prompt.index("Example 1:"),
        prompt.index("Example 2:"),
    ]
    assert positions == sorted(positions)
    assert DEFAULT_SHOTS[1][1] in prompt


def test_prompt_is_deterministic():
    args = ("Revenue of Acme", "Revenue was 5,307.", PromptVariant.TD_RS, ShotConfig.from_count(3))
    assert build_extraction_prompt(*args) == build_extraction_prompt(*args)


@pytest.mark.parametrize("summary", ["", "   \n"])
def test_empty_summary(summary):
    with pytest.raises(EmptySummary):
        build_extraction_prompt("Revenue", summary)


def test_shot_config_validation():
    with pytest.raises(ConfigError):
        ShotConfig.from_count(4)
    with pytest.raises(ConfigError):
        ShotConfig(shot_count=2, shots=DEFAULT_SHOTS[:1])
    assert ShotConfig.from_count(0).shots == ()


@pytest.mark.parametrize("value, expected", [
    ("td_rsp", PromptVariant.TD_RSP),
    ("TD-O", PromptVariant.TD_O),
    ("k_t_c", CompletionMode.K_T_C),
])
def test_enum_parsing(value, expected):
    assert type(expected).parse(value) is expected


def test_enum_parsing_rejects_unknown():
    with pytest.raises(ConfigError):
        PromptVariant.parse("TD_X")
    with pytest.raises(ConfigError):
        CompletionMode.parse("K_Q")


def load_numeric_forms(data_dir):
    with open(data_dir / "numeric_forms.csv", newline="", encoding="utf-8") as f:
        return [(row["raw"], row["hint"] or None, float(row["expected"])) for row in csv.DictReader(f)]


def reference_parse(raw, hint):
    """Character-scanning parser for single-number answers."""
    digits = "0123456789"
    text = raw.strip()
    start = next(
        i for i, c in enumerate(text)
        if c in digits or (c == "." and i + 1 < len(text) and text[i + 1] in digits)
    )
    end = start
    while end < len(text):
        c = text[end]
        nxt = text[end + 1] if end + 1 < len(text) else ""
        if c in digits or c == ",":
            end += 1
        elif c == "." and nxt and nxt in digits:
            end += 1
        elif c in "eE" and nxt and nxt in digits + "+-":
            end += 2 if nxt in "+-" else 1
        else:
            break

    number = float(text[start:end].replace(",", ""))
    before = text[:start].rstrip().rstrip("$€£").rstrip()
    after = text[end:]
    negative = before.endswith(("-", "−")) or (before.endswith("(") and ")" in after)
    words = after.strip().lower()
    percent = words.startswith("%") or "percent" in words

    parts = words.lstrip(")").split()
    first = parts[0].strip(".,") if parts else ""
    if first.endswith("s"):
        first = first[:-1]
    multipliers = {"unit": 1, "thousand": 1e3, "million": 1e6, "billion": 1e9}
    if first in ("thousand", "million", "billion"):
        factor = multipliers[first]
    elif hint and not percent:
        factor = multipliers[hint]
    else:
        factor = 1
    value = number * factor
    return -value if negative else value


def test_numeric_forms(data_dir):
    forms = load_numeric_forms(data_dir)
    assert len(forms) >= 40
    for raw, hint, expected in forms:
        value = normalize_numeric(raw, Scale(hint) if hint else None)
        assert value.magnitude == pytest.approx(expected, rel=1e-12, abs=1e-12), raw
        assert reference_parse(raw, hint) == pytest.approx(expected, rel=1e-12, abs=1e-12), raw
        assert value.raw == raw


def test_normalize_reports_scale_and_percent():
    value = normalize_numeric("5,307", Scale.MILLION)
    assert value.scale_applied is Scale.MILLION
    assert not value.is_percent
    explicit = normalize_numeric("1.2 billion", Scale.MILLION)
    assert explicit.scale_applied is Scale.BILLION
    percent = normalize_numeric("14.27%", Scale.MILLION)
    assert percent.is_percent
    assert percent.scale_applied is Scale.UNIT


@pytest.mark.parametrize("raw", ["not found", "", "N/A", "nothing relevant", "FY2022"])
def test_not_a_number(raw):
    with pytest.raises(NotANumber):
        normalize_numeric(raw)


@pytest.mark.parametrize("raw", ["5,307 or 5,400", "between 1 and 2", "Revenue in 2022 was 5,307"])
def test_ambiguous_number(raw):
    with pytest.raises(AmbiguousNumber):
        normalize_numeric(raw)


@pytest.mark.parametrize("raw", ["1,234,56", "12,3", "1,2345", "$5,30 million"])
def test_malformed_grouping(raw):
    with pytest.raises(NotANumber, match="Malformed number") as info:
        normalize_numeric(raw)
    assert info.value.raw_answer == raw


def test_number_errors_carry_raw_answer():
    with pytest.raises(AmbiguousNumber) as info:
        normalize_numeric("5,307 or 5,400")
    assert info.value.raw_answer == "5,307 or 5,400"


finite_magnitudes = st.floats(
    min_value=-1e15, max_value=1e15, allow_nan=False, allow_infinity=False, allow_subnormal=False,
)
scale_hints = st.sampled_from([None] + list(Scale))


@settings(max_examples=200)
@given(finite_magnitudes)
def test_normalize_is_idempotent_on_plain_output(magnitude):
    assert normalize_numeric(format_plain(magnitude)).magnitude == magnitude


@settings(max_examples=200)
@given(finite_magnitudes, scale_hints)
def test_normalize_again_keeps_magnitude(magnitude, hint):
    first = normalize_numeric(format_plain(magnitude), hint).magnitude
    assert normalize_numeric(format_plain(first)).magnitude == first


@settings(max_examples=200)
@given(st.floats(min_value=0, max_value=1e12, allow_nan=False, allow_subnormal=False), scale_hints)
def test_parentheses_and_minus_agree(magnitude, hint):
    text = format_plain(magnitude)
    positive = normalize_numeric(text, hint).magnitude
    assert normalize_numeric(f"({text})", hint).magnitude == -positive
    assert normalize_numeric(f"-{text}", hint).magnitude == -positive
    assert normalize_numeric(f"$({text}) million", hint).magnitude == normalize_numeric(f"-{text} million").magnitude


def test_request_answer_strips_response():
    backend = CountingBackend(ScriptedBackend.from_pairs([("Revenue of Acme Corp", "  5,307 million \n")]))
    assert request_answer("Revenue of Acme Corp", "summary", backend) == "5,307 million"
    assert backend.calls == 1


def test_extract_value_uses_task_config():
    config = PipelineConfig.from_dict({"mode": "K_C", "variant": "TD_O", "shot_count": 0})
    task = ExtractionTask(index=0, doc_ref="acme", keyword="Revenue", config=config)
    backend = CountingBackend(ScriptedBackend.from_pairs([('"Revenue of Acme Corp"', "5,307")]))

    value = extract_value(task, "Revenue was 5,307.", backend, ACME)
    assert value.magnitude == 5_307_000_000
    assert value.raw == "5,307"
    assert backend.calls == 1


def test_extract_value_missing_metadata():
    task = ExtractionTask(index=0, doc_ref="x", keyword="Revenue", config=PipelineConfig(mode=CompletionMode.K_C))
    backend = CountingBackend(ScriptedBackend.from_pairs([("", "1")]))
    with pytest.raises(MissingMetadata):
        extract_value(task, "summary", backend, DocMetadata(time="FY2022"))
    assert backend.calls == 0


@pytest.mark.parametrize("magnitude, expected", [
    (5307000000.0, "5307000000"),
    (0.025, "0.025"),
    (-86400000.0, "-86400000"),
    (1e21, "1000000000000000000000"),
])
def test_format_plain(magnitude, expected):
    assert format_plain(magnitude) == expected


def test_fold_text():
    assert fold_text("  Acme\n CORP ") == "acme corp"
