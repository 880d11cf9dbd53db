"""Builders shared by several test modules."""

from src.segmentation import Segment, count_tokens


def make_segments(texts, doc_id="doc"):
    return [
        Segment(text=text, token_count=count_tokens(text), source_indices=(i,), doc_id=doc_id, position=i)
        for i, text in enumerate(texts)
    ]
