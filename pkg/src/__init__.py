"""
Hybrid Long Document Extraction

Segments documents that mix prose and tables, retrieves the segments relevant
to a keyword, summarizes them with an LLM and extracts a normalized value.
"""

__version__ = "1.0.0"
