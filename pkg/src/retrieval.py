"""
Embedding-based segment retrieval.

Segments and the (completed) keyword are embedded, scored by cosine
similarity and the top-n segments are returned.
"""

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import requests
from sklearn.feature_extraction import DictVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from src.exceptions import ConfigError, EmbedderUnavailable, NoSegments
from src.segmentation import Segment

logger = logging.getLogger(__name__)

DEFAULT_TOP_N = 3
# ranking resolution; closer scores tie and fall back to position
SCORE_DECIMALS = 9


@dataclass(frozen=True)
class Embedding:
    """Sparse term weights (default embedder) or a dense vector (external embedder)."""

    weights: Optional[Dict[str, float]] = None
    vector: Optional[Tuple[float, ...]] = None

    @property
    def norm(self) -> float:
        values = self.weights.values() if self.weights is not None else (self.vector or ())
        return math.sqrt(sum(v * v for v in values))

    @property
    def is_sparse(self) -> bool:
        return self.weights is not None


@dataclass(frozen=True)
class RetrievalConfig:
    top_n: int = DEFAULT_TOP_N

    def __post_init__(self):
        if self.top_n < 1:
            raise ConfigError(f"top_n must be >= 1, got {self.top_n}")


@dataclass(frozen=True)
class ScoredSegment:
    segment: Segment
    score: float


class Embedder(Protocol):
    embedder_id: str

    def embed_many(self, texts: Sequence[str]) -> List[Embedding]:
        ...


class TermFrequencyEmbedder:
    """Exact lower-cased term frequencies over alphanumeric runs; symbols are dropped."""

    embedder_id = "tf"
    _TERM = re.compile(r"[^\W_]+")

    def embed(self, text: str) -> Embedding:
        counts = Counter(self._TERM.findall(text.lower()))
        return Embedding(weights={term: float(n) for term, n in counts.items()})

    def embed_many(self, texts: Sequence[str]) -> List[Embedding]:
        return [self.embed(text) for text in texts]


class HttpEmbedder:
    """
    Client for an external embedding service.

    POSTs {"texts": [...]} and expects {"vectors": [[...], ...]} back.
    """

    def __init__(self, url: str, api_key: str = "", timeout: float = 30.0):
        self.url = url
        self.api_key = api_key
        self.timeout = timeout
        self.embedder_id = f"http:{url}"

    def embed_many(self, texts: Sequence[str]) -> List[Embedding]:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            response = requests.post(
                self.url, json={"texts": list(texts)}, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
            vectors = response.json()["vectors"]
        except (requests.RequestException, ValueError, KeyError, TypeError) as e:
            logger.error(f"Embedding request to {self.url} failed: {e}")
            raise EmbedderUnavailable(f"Embedding service {self.url} failed: {e}") from e

        if len(vectors) != len(texts):
            raise EmbedderUnavailable(
                f"Embedding service returned {len(vectors)} vectors for {len(texts)} texts"
            )
        return [Embedding(vector=tuple(float(x) for x in vec)) for vec in vectors]


DEFAULT_EMBEDDER = TermFrequencyEmbedder()


def embed(text: str, embedder: Optional[Embedder] = None) -> Embedding:
    return (embedder or DEFAULT_EMBEDDER).embed_many([text])[0]


def cosine_scores(query: Embedding, embeddings: Sequence[Embedding]) -> List[float]:
    """
    Cosine similarity of query against each embedding.

    A zero vector on either side scores 0.
    """
    if not embeddings:
        return []

    if query.is_sparse:
        vectorizer = DictVectorizer()
        matrix = vectorizer.fit_transform([query.weights] + [e.weights for e in embeddings])
        if matrix.shape[1] == 0:
            return [0.0] * len(embeddings)
    else:
        matrix = np.array([query.vector] + [e.vector for e in embeddings], dtype=float)

    scores = cosine_similarity(matrix[0:1], matrix[1:])[0]
    return [float(s) for s in np.clip(scores, -1.0, 1.0)]


def cosine(a: Embedding, b: Embedding) -> float:
    return cosine_scores(a, [b])[0]


def top_segments(
    keyword: str,
    segments: Sequence[Segment],
    cfg: RetrievalConfig,
    embedder: Optional[Embedder] = None,
) -> List[ScoredSegment]:
    """
    Rank segments by cosine similarity to the keyword.

    Ties are broken by ascending segment position in the document.

    Args:
        keyword: Retrieval query (the completed keyword)
        segments: Candidate segments
        cfg: Retrieval configuration

    Returns:
        min(top_n, len(segments)) scored segments, best first

    Raises:
        NoSegments: If segments is empty
    """
    if not segments:
        raise NoSegments("Cannot retrieve from an empty segment list")

    embedder = embedder or DEFAULT_EMBEDDER
    embeddings = embedder.embed_many([keyword] + [segment.text for segment in segments])
    scores = cosine_scores(embeddings[0], embeddings[1:])

    order = sorted(range(len(segments)), key=lambda i: (-round(scores[i], SCORE_DECIMALS), segments[i].position))
    ranked = [ScoredSegment(segment=segments[i], score=scores[i]) for i in order[: cfg.top_n]]

    logger.info(
        f"Retrieved {len(ranked)}/{len(segments)} segments for {keyword!r}: "
        + ", ".join(f"#{s.segment.position}={s.score:.4f}" for s in ranked)
    )
    return ranked
