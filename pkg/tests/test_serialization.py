"""Serialized tables parse back to their cell grids."""

import csv
import io
import xml.etree.ElementTree as ET

from bs4 import BeautifulSoup
from hypothesis import given, settings
from hypothesis import strategies as st

from src.document_model import Table
from src.segmentation import SerializationFormat, serialize_table

MARKUP_ALPHABET = "abcXYZ019 &<>\"',;.-|"
PLAIN_ALPHABET = "abcXYZ019&<>\"',;.-"


def tables(alphabet):
    @st.composite
    def build(draw):
        n_cols = draw(st.integers(min_value=1, max_value=5))
        n_rows = draw(st.integers(min_value=1, max_value=6))
        cell = st.text(alphabet=alphabet, max_size=6)
        rows = [draw(st.lists(cell, min_size=n_cols, max_size=n_cols)) for _ in range(n_rows)]
        return Table.from_rows(rows, header_rows=draw(st.integers(min_value=0, max_value=n_rows)))
    return build()


@settings(max_examples=100)
@given(tables(MARKUP_ALPHABET))
def test_xml_round_trip(table):
    root = ET.fromstring(serialize_table(table, SerializationFormat.XML))
    grid = tuple(tuple(cell.text or "" for cell in row) for row in root.findall("row"))
    assert grid == table.cells


@settings(max_examples=100)
@given(tables(MARKUP_ALPHABET))
def test_html_round_trip(table):
    soup = BeautifulSoup(serialize_table(table, SerializationFormat.HTML), "html.parser")
    rows = soup.find_all("tr")
    grid = tuple(tuple(cell.get_text() for cell in row.find_all(["th", "td"])) for row in rows)
    assert grid == table.cells
    headers = [all(c.name == "th" for c in row.find_all(["th", "td"])) for row in rows]
    assert headers == [i < table.header_rows for i in range(table.n_rows)]


@settings(max_examples=100)
@given(tables(MARKUP_ALPHABET))
def test_csv_round_trip(table):
    reader = csv.reader(io.StringIO(serialize_table(table, SerializationFormat.CSV)))
    assert tuple(tuple(row) for row in reader) == table.cells


@settings(max_examples=100)
@given(tables(PLAIN_ALPHABET))
def test_plain_cell_boundaries(table):
    text = serialize_table(table, SerializationFormat.PLAIN)
    grid = tuple(tuple(line.split(" | ")) for line in text.split("\n"))
    assert grid == table.cells
    assert text.count("\n") == table.n_rows - 1


def test_plain_empty_single_cell_rows():
    table = Table(cells=(("",), ("",)))
    assert serialize_table(table, SerializationFormat.PLAIN) == "\n"
    assert serialize_table(Table(cells=(("a",), ("",))), SerializationFormat.PLAIN) == "a\n"
