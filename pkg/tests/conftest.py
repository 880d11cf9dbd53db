"""Shared fixtures: corpus paths, small documents and scripted backends."""

from pathlib import Path

import pytest

from src.document_model import DocMetadata, Document, Element, Scale, Table
from src.llm_backend import ScriptedBackend

ROOT = Path(__file__).resolve().parent.parent
CORPUS_DIR = ROOT / "corpus"
DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS_DIR


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def hybrid_doc() -> Document:
    """A two-paragraph document with one financial table."""
    return Document(
        id="demo",
        metadata=DocMetadata(company="Acme Corp", time="FY2022", scale_hint=Scale.MILLION),
        elements=(
            Element.of_text("Acme Corp builds industrial pumps. Demand was steady through the year."),
            Element.of_table(Table.from_rows(
                [["Item", "FY2022"], ["Revenue", "5,307"], ["Net Income", "612"]], header_rows=1
            )),
            Element.of_text("Management expects modest growth next year."),
        ),
    )


@pytest.fixture
def echo_backend() -> ScriptedBackend:
    """Answers every prompt with the same summary."""
    return ScriptedBackend.from_pairs([("", "summary")])
