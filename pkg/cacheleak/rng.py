"""Seeded random streams for reproducible, virtual-time experiments."""

import hashlib
import random
from typing import List, Sequence, TypeVar

T = TypeVar('T')


def derive_seed(seed: int, label: str) -> int:
    """
    Derive an independent 64-bit sub-seed from a global seed and a label.

    Args:
        seed: Global experiment seed
        label: Name of the consumer (e.g. "corpus", "session:attacker")

    Returns:
        Non-negative 64-bit integer
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


class SeededRNG:
    """Wrapper around random.Random; one instance per session or consumer."""

    def __init__(self, seed: int):
        self._seed = seed
        self._rng = random.Random(seed)

    @property
    def seed(self) -> int:
        return self._seed

    def gauss(self, mu: float, sigma: float) -> float:
        return self._rng.gauss(mu, sigma)

    def random(self) -> float:
        return self._rng.random()

    def randrange(self, n: int) -> int:
        return self._rng.randrange(n)

    def choice(self, seq: Sequence[T]) -> T:
        return self._rng.choice(seq)

    def sample(self, seq: Sequence[T], k: int) -> List[T]:
        return self._rng.sample(seq, k)

    def shuffle(self, seq: list) -> None:
        self._rng.shuffle(seq)

    def fork(self, label: str) -> 'SeededRNG':
        """Create a child stream whose seed depends only on this seed and the label."""
        return SeededRNG(derive_seed(self._seed, label))
