"""
Semantic response cache

Responses are keyed by a deterministic hashed bag-of-words embedding; a
lookup returns the most similar cached response when its cosine similarity
reaches the threshold. Entries live in a fixed-size ring buffer, so inserting
past capacity overwrites the oldest entry.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidConfig

logger = logging.getLogger(__name__)

HASH_SEED = 0x9E3779B9
# Wide enough that the agenda requests rarely share a bucket between features.
DEFAULT_DIMENSION = 4096


@dataclass
class SemanticCacheConfig:
    """[semantic_cache] section."""

    enabled: bool = False
    threshold: float = 0.8
    capacity_entries: int = 1000
    dimension: int = DEFAULT_DIMENSION
    anonymize: bool = False

    def validate(self) -> None:
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig("semantic_cache.threshold must be in (0, 1)")
        if self.capacity_entries < 1:
            raise InvalidConfig("semantic_cache.capacity_entries must be a positive integer")
        if self.dimension < 1:
            raise InvalidConfig("semantic_cache.dimension must be a positive integer")


def _bucket(feature: str, dimension: int, seed: int) -> int:
    digest = hashlib.blake2b(
        feature.encode('utf-8'),
        digest_size=8,
        key=seed.to_bytes(8, 'big'),
    ).digest()
    return int.from_bytes(digest, 'big') % dimension


def embed(text: str, dimension: int = DEFAULT_DIMENSION, seed: int = HASH_SEED) -> np.ndarray:
    """
    Embed text as an L2-normalized hashed feature vector.

    Features are the lowercased whitespace tokens and every adjacent token
    bigram, each counted once per occurrence.

    Args:
        text: Input text
        dimension: Number of hash buckets
        seed: Hash key

    Returns:
        float64 vector of length `dimension`; all zeros for empty input
    """
    words = text.lower().split()
    vector = np.zeros(dimension, dtype=np.float64)
    features = [f"u:{w}" for w in words]
    features += [f"b:{a} {b}" for a, b in zip(words, words[1:])]
    for feature in features:
        vector[_bucket(feature, dimension, seed)] += 1.0
    norm = np.linalg.norm(vector)
    if norm > 0:
        vector /= norm
    return vector


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


@dataclass
class SemanticEntry:
    embedding: np.ndarray
    request_text: str
    response_text: str
    tick: int


class SemanticCache:
    """Thresholded nearest-neighbour response cache with FIFO eviction."""

    def __init__(self, config: Optional[SemanticCacheConfig] = None):
        self.config = config or SemanticCacheConfig()
        self.config.validate()
        capacity = self.config.capacity_entries
        self._matrix = np.zeros((capacity, self.config.dimension), dtype=np.float64)
        self._requests: List[str] = [''] * capacity
        self._responses: List[str] = [''] * capacity
        self._ticks: List[int] = [0] * capacity
        self._size = 0
        self._next_slot = 0
        self._tick = 0

    @property
    def threshold(self) -> float:
        return self.config.threshold

    def __len__(self) -> int:
        return self._size

    def embed(self, text: str) -> np.ndarray:
        return embed(text, self.config.dimension)

    def similarities(self, query_text: str) -> np.ndarray:
        """Cosine similarity of the query against every resident entry, in slot order."""
        query = self.embed(query_text)
        nonzero = np.flatnonzero(query)
        return self._matrix[:self._size, nonzero] @ query[nonzero]

    def lookup(self, query_text: str) -> Optional[Tuple[str, float]]:
        """
        Return the most similar cached response if it clears the threshold.

        Lookups never change cache state.

        Returns:
            (response_text, similarity) or None on a miss
        """
        if self._size == 0:
            return None
        sims = self.similarities(query_text)
        best = int(np.argmax(sims))
        similarity = float(sims[best])
        if similarity >= self.config.threshold:
            return self._responses[best], similarity
        return None

    def insert(self, request_text: str, response_text: str) -> None:
        """Add an entry, overwriting the oldest one when the buffer is full."""
        slot = self._next_slot
        self._tick += 1
        self._matrix[slot] = self.embed(request_text)
        self._requests[slot] = request_text
        self._responses[slot] = response_text
        self._ticks[slot] = self._tick
        self._next_slot = (slot + 1) % self.config.capacity_entries
        self._size = min(self._size + 1, self.config.capacity_entries)

    def flush(self) -> None:
        self._matrix[:self._size] = 0.0
        self._size = 0
        self._next_slot = 0

    def entries(self) -> List[SemanticEntry]:
        """Resident entries, oldest first."""
        slots = sorted(range(self._size), key=lambda s: self._ticks[s])
        return [
            SemanticEntry(self._matrix[s].copy(), self._requests[s], self._responses[s], self._ticks[s])
            for s in slots
        ]

    def to_dict(self) -> Dict:
        return {
            'threshold': self.config.threshold,
            'capacity_entries': self.config.capacity_entries,
            'entries': [
                {'tick': e.tick, 'request': e.request_text, 'response': e.response_text}
                for e in self.entries()
            ],
        }
