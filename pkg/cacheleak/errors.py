"""
Error types raised across the cacheleak package.

Library code raises these; only the CLI catches them and turns them into
exit codes and ERROR lines.
"""

from typing import Optional


class CacheLeakError(Exception):
    """Base class for every error raised by cacheleak."""


class UnknownToken(CacheLeakError):
    """A word is not part of the closed vocabulary."""

    def __init__(self, word: str):
        super().__init__(f"Unknown token: {word!r}")
        self.word = word


class InvalidConfig(CacheLeakError):
    """A configuration value is missing, out of range or inconsistent."""


class MissingSlot(CacheLeakError):
    """A slot template was instantiated without a binding for a slot."""

    def __init__(self, name: str):
        super().__init__(f"Missing binding for slot: {name}")
        self.name = name


class SequenceExceedsCapacity(CacheLeakError):
    """A sequence is longer than the prefix cache's whole token budget."""

    def __init__(self, length: int, capacity: int):
        super().__init__(f"Sequence of {length} tokens exceeds cache capacity of {capacity} tokens")
        self.length = length
        self.capacity = capacity


class MalformedRequest(CacheLeakError):
    """A chat request violates the request contract."""


class EngineShuttingDown(CacheLeakError):
    """The serving engine no longer accepts requests."""


class TransportError(CacheLeakError):
    """The client could not talk to the serving engine."""

    def __init__(self, message: str, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.cause = cause


class EmptyCorpus(CacheLeakError):
    """A predictor was asked to train on no data."""


class EvictionIncomplete(CacheLeakError):
    """A verification probe still read a cache hit after a filler flood."""


class TooFewCandidates(CacheLeakError):
    """Representativeness ranking needs at least two candidates."""


class DegenerateLabels(CacheLeakError):
    """ROC computation needs both positive and negative samples."""
