import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.document_model import Document, Element, Table
from src.exceptions import ConfigError, EmptyDocument
from src.segmentation import (
    DEFAULT_TOKENIZER,
    SEGMENT_JOINER,
    SegmenterConfig,
    SerializationFormat,
    count_tokens,
    segment_document,
    serialize_document,
    serialize_table,
    split_element,
    split_table_rows,
    split_text,
    truncate_tokens,
)


@pytest.mark.parametrize("text, expected", [
    ("hello world", 2),
    ("", 0),
    ("$5,307.0", 6),
    ("  \n\t ", 0),
    ("snake_case", 3),
    ("Umsatz größer", 2),
])
def test_count_tokens(text, expected):
    assert count_tokens(text) == expected


def test_truncate_tokens_keeps_prefix():
    assert truncate_tokens("a b c d", 2) == "a b"
    assert truncate_tokens("a b", 5) == "a b"
    assert truncate_tokens("a b", 0) == ""


def test_serialize_table_formats():
    table = Table.from_rows([["Item", "2022"], ["Revenue", "100"]], header_rows=1)
    assert serialize_table(table, SerializationFormat.PLAIN) == "Item | 2022\nRevenue | 100"
    assert serialize_table(table, SerializationFormat.CSV) == "Item,2022\nRevenue,100"
    assert serialize_table(table, SerializationFormat.HTML) == (
        "<table><tr><th>Item</th><th>2022</th></tr><tr><td>Revenue</td><td>100</td></tr></table>"
    )


def test_serialize_table_csv_quotes():
    assert serialize_table(Table.from_rows([["a,b"]]), SerializationFormat.CSV) == '"a,b"'
    assert serialize_table(Table.from_rows([['say "hi"']]), SerializationFormat.CSV) == '"say ""hi"""'


def test_serialize_table_xml_escapes():
    assert serialize_table(Table.from_rows([["x"]]), SerializationFormat.XML) == (
        "<table><row><cell>x</cell></row></table>"
    )
    assert serialize_table(Table.from_rows([["a<b & c>d"]]), SerializationFormat.XML) == (
        "<table><row><cell>a&lt;b &amp; c&gt;d</cell></row></table>"
    )


def test_serialization_format_parse():
    assert SerializationFormat.parse("xml") is SerializationFormat.XML
    with pytest.raises(ConfigError):
        SerializationFormat.parse("markdown")


def test_segmenter_config_minimum_budget():
    with pytest.raises(ConfigError):
        SegmenterConfig(max_tokens_per_segment=15)


def test_split_element_under_budget():
    assert split_element("short", SegmenterConfig()) == ["short"]


def test_split_text_at_sentences():
    assert split_text("A b. C d. E f.", 4) == ["A b.", "C d.", "E f."]


def test_split_text_hard_splits_long_sentence():
    pieces = split_text("one two three four five six seven", 3)
    assert pieces == ["one two three", "four five six", "seven"]


def test_split_table_repeats_header():
    table = Table.from_rows([["H", "Y"], ["r1", "1"], ["r2", "2"]], header_rows=1)
    assert split_table_rows(table, 7) == ["H | Y\nr1 | 1", "H | Y\nr2 | 2"]


def test_split_table_without_header():
    table = Table.from_rows([["a", "1"], ["b", "2"], ["c", "3"]])
    assert split_table_rows(table, 7) == ["a | 1\nb | 2", "c | 3"]


def _words(n, start=0):
    return " ".join(f"w{i}" for i in range(start, start + n))


def test_segment_document_greedy_merge():
    doc = Document(id="d", elements=(
        Element.of_text(_words(100)), Element.of_text(_words(200)), Element.of_text(_words(300)),
    ))
    segments = segment_document(doc, SegmenterConfig(max_tokens_per_segment=512))
    assert [s.source_indices for s in segments] == [(0, 1), (2,)]
    assert segments[0].text == _words(100) + SEGMENT_JOINER + _words(200)
    assert [s.position for s in segments] == [0, 1]


def test_segment_document_single_element():
    doc = Document(id="d", elements=(Element.of_text("just one"),))
    segments = segment_document(doc, SegmenterConfig())
    assert len(segments) == 1
    assert segments[0].source_indices == (0,)
    assert segments[0].doc_id == "d"


def test_segment_document_splits_long_element():
    text = ". ".join(_words(12, start=i * 12) for i in range(100)) + "."
    assert count_tokens(text) == 1300
    doc = Document(id="d", elements=(Element.of_text(text),))
    segments = segment_document(doc, SegmenterConfig(max_tokens_per_segment=512))
    assert len(segments) >= 3
    assert all(s.token_count <= 512 for s in segments)
    assert all(s.source_indices == (0,) for s in segments)
    assert sum(s.token_count for s in segments) == 1300


def test_segment_document_empty():
    with pytest.raises(EmptyDocument):
        segment_document(Document(id="d"), SegmenterConfig())
    with pytest.raises(EmptyDocument):
        segment_document(Document(id="d", elements=(Element.of_text("   "),)), SegmenterConfig())


def test_segment_document_uses_format(hybrid_doc):
    segments = segment_document(hybrid_doc, SegmenterConfig(format=SerializationFormat.XML))
    assert "<row><cell>Revenue</cell><cell>5,307</cell></row>" in segments[0].text


def test_serialize_document_joins_elements(hybrid_doc):
    text = serialize_document(hybrid_doc)
    assert text.startswith("Acme Corp builds industrial pumps.")
    assert "\n\nItem | FY2022\nRevenue | 5,307\nNet Income | 612\n\n" in text


words = st.text(alphabet="abcdefghij0123456789", min_size=1, max_size=8)
sentences = st.lists(words, min_size=1, max_size=30).map(lambda ws: " ".join(ws) + ".")


@st.composite
def text_elements(draw):
    n_sentences = draw(st.integers(min_value=0, max_value=60))
    parts = [draw(sentences) for _ in range(n_sentences)]
    joiners = [draw(st.sampled_from([" ", "\n", "! ", " "])) for _ in parts]
    return "".join(p + j for p, j in zip(parts, joiners)).strip() or "x"


@st.composite
def table_elements(draw):
    n_cols = draw(st.integers(min_value=1, max_value=5))
    n_rows = draw(st.integers(min_value=1, max_value=40))
    rows = [
        draw(st.lists(words, min_size=1, max_size=n_cols))
        for _ in range(n_rows)
    ]
    return Table.from_rows(rows, header_rows=draw(st.integers(min_value=0, max_value=min(2, n_rows))))


@st.composite
def hybrid_documents(draw):
    n = draw(st.integers(min_value=1, max_value=12))
    elements = []
    for _ in range(n):
        if draw(st.booleans()):
            elements.append(Element.of_text(draw(text_elements())))
        else:
            elements.append(Element.of_table(draw(table_elements())))
    return Document(id="rand", elements=tuple(elements))


@settings(max_examples=200, deadline=None)
@given(
    hybrid_documents(),
    st.sampled_from([16, 24, 64, 128, 512]),
    st.sampled_from(list(SerializationFormat)),
)
def test_segmentation_invariants(doc, budget, fmt):
    cfg = SegmenterConfig(max_tokens_per_segment=budget, format=fmt)
    segments = segment_document(doc, cfg)

    # budget and count consistency
    for segment in segments:
        assert 1 <= segment.token_count <= budget
        assert segment.token_count == count_tokens(segment.text)

    # contiguous ascending indices, covering every element in order
    visited = []
    for segment in segments:
        indices = list(segment.source_indices)
        assert indices == list(range(indices[0], indices[-1] + 1))
        for index in indices:
            if not visited or visited[-1] != index:
                visited.append(index)
    assert visited == list(range(len(doc.elements)))

    assert [s.position for s in segments] == list(range(len(segments)))
    assert segment_document(doc, cfg) == segments


@settings(max_examples=100, deadline=None)
@given(text_elements(), st.sampled_from([4, 8, 16, 50]))
def test_split_text_keeps_every_token(text, budget):
    pieces = split_text(text, budget)
    assert all(count_tokens(p) <= budget for p in pieces)
    def tokens(s):
        return [s[a:b] for a, b in DEFAULT_TOKENIZER.tokenize(s)]

    assert [t for p in pieces for t in tokens(p)] == tokens(text)
