"""
PII anonymization for semantic-cache keys

Pre-processor that:
1. Detects emails, phone numbers, card numbers and IP addresses by pattern,
   and names by gazetteer
2. Replaces each distinct value with a kind-numbered identifier (⟨NAME_1⟩)
3. Keeps the identifier -> value mapping for the request
Post-processor that puts the original values back into the response.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from . import seed_data
from .corpus import identifier_token
from .errors import InvalidConfig
from .rng import SeededRNG

logger = logging.getLogger(__name__)

PATTERNS = {
    'email': r'\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b',
    'credit_card': r'\b(?:\d{4}[-\s]?){3}\d{4}\b',
    'ip_address': r'\b(?:[0-9]{1,3}\.){3}[0-9]{1,3}\b',
    'phone': r'(?:\+?1[-.\s]?)?(?:\(\d{3}\)|\b\d{3})[-.\s]?\d{3}[-.\s]?\d{4}\b',
}

# Order in which overlapping detections starting at the same offset are preferred.
KIND_PRIORITY = ('email', 'credit_card', 'ip_address', 'phone', 'name')

IDENTIFIER_PATTERN = re.compile(r'⟨([A-Z_]+)_(\d+)⟩')


@dataclass(frozen=True)
class PiiSpan:
    start: int
    end: int
    kind: str
    surface: str


@dataclass
class RestoreMap:
    """Identifier -> original surface string for one request."""

    mapping: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.mapping)


@dataclass
class RestoreResult:
    text: str
    unknown_identifiers: List[str] = field(default_factory=list)


def default_gazetteer() -> List[str]:
    """Full names from the attribute corpus, plus their first and last names."""
    names = set(seed_data.NAMES)
    for full in seed_data.NAMES:
        parts = full.split()
        names.add(parts[0])
        names.add(parts[-1])
    return sorted(names)


class Anonymizer:
    """Rule-based detector and reversible replacer."""

    def __init__(self, gazetteer: Optional[Iterable[str]] = None):
        names = sorted(set(gazetteer if gazetteer is not None else default_gazetteer()),
                       key=lambda n: (-len(n), n))
        self._patterns = {kind: re.compile(p) for kind, p in PATTERNS.items()}
        self._names = None
        if names:
            alternatives = '|'.join(re.escape(n) for n in names)
            self._names = re.compile(rf'(?<!\w)(?:{alternatives})(?!\w)')

    def detect_pii(self, text: str) -> List[PiiSpan]:
        """
        Find private attributes in text.

        Returns:
            Non-overlapping spans sorted by start offset
        """
        candidates: List[PiiSpan] = []
        for kind, pattern in self._patterns.items():
            for match in pattern.finditer(text):
                candidates.append(PiiSpan(match.start(), match.end(), kind, match.group()))
        if self._names is not None:
            for match in self._names.finditer(text):
                candidates.append(PiiSpan(match.start(), match.end(), 'name', match.group()))

        candidates.sort(key=lambda s: (s.start, -(s.end - s.start), KIND_PRIORITY.index(s.kind)))
        spans: List[PiiSpan] = []
        for span in candidates:
            if spans and span.start < spans[-1].end:
                continue
            spans.append(span)
        return spans

    def anonymize(self, text: str) -> Tuple[str, RestoreMap]:
        """
        Replace detected values left to right with ⟨KIND_n⟩ identifiers.

        A value repeated within the text reuses its identifier.

        Returns:
            (anonymized text, RestoreMap)
        """
        restore_map = RestoreMap()
        by_surface: Dict[Tuple[str, str], str] = {}
        counters: Dict[str, int] = {}
        pieces = []
        cursor = 0
        for span in self.detect_pii(text):
            key = (span.kind, span.surface)
            identifier = by_surface.get(key)
            if identifier is None:
                counters[span.kind] = counters.get(span.kind, 0) + 1
                identifier = identifier_token(span.kind, counters[span.kind])
                by_surface[key] = identifier
                restore_map.mapping[identifier] = span.surface
            pieces.append(text[cursor:span.start])
            pieces.append(identifier)
            cursor = span.end
        pieces.append(text[cursor:])
        return ''.join(pieces), restore_map


def restore(response_text: str, restore_map: RestoreMap) -> RestoreResult:
    """
    Replace identifiers in a response with their original values.

    Identifiers missing from the map are left in place and reported.
    """
    unknown: List[str] = []

    def _replace(match: re.Match) -> str:
        identifier = match.group(0)
        if identifier in restore_map.mapping:
            return restore_map.mapping[identifier]
        if identifier not in unknown:
            unknown.append(identifier)
        return identifier

    text = IDENTIFIER_PATTERN.sub(_replace, response_text)
    if unknown:
        logger.debug("Response carried unknown identifiers: %s", ', '.join(unknown))
    return RestoreResult(text=text, unknown_identifiers=unknown)


_default_anonymizer: Optional[Anonymizer] = None


def _default() -> Anonymizer:
    global _default_anonymizer
    if _default_anonymizer is None:
        _default_anonymizer = Anonymizer()
    return _default_anonymizer


def detect_pii(text: str) -> List[PiiSpan]:
    return _default().detect_pii(text)


def anonymize(text: str) -> Tuple[str, RestoreMap]:
    return _default().anonymize(text)


@dataclass
class AnonymizeConfig:
    """[anonymize] section."""

    sentences: int = 1000
    sharing_pairs: int = 200
    pna_rounds: int = 100

    def validate(self) -> None:
        if self.sentences < 1 or self.sharing_pairs < 1 or self.pna_rounds < 0:
            raise InvalidConfig("anonymize sizes must be positive")


SENTENCE_TEMPLATES = [
    "please email {name} at {email} about the {condition} results",
    "call {name} on {phone} before the appointment",
    "charge card {card} for the visit of {name}",
    "{name} logged in from {ip} and asked about {condition}",
    "send the report for {name} to {email} and copy {phone}",
    "the clinic note says {name} has {condition}",
]


def pii_values(rng: SeededRNG) -> Dict[str, str]:
    """One random value per placeholder of SENTENCE_TEMPLATES."""
    name = rng.choice(seed_data.NAMES)
    parts = name.split()
    return {
        'name': name,
        'email': f"{parts[0].lower()}.{parts[-1].lower()}{rng.randrange(100)}@example.com",
        'phone': f"555-{rng.randrange(1000):03d}-{rng.randrange(10000):04d}",
        'card': ' '.join(f"{rng.randrange(10000):04d}" for _ in range(4)),
        'ip': '.'.join(str(rng.randrange(256)) for _ in range(4)),
        'condition': rng.choice(seed_data.CONDITIONS),
    }


def pii_sentences(rng: SeededRNG, count: int) -> List[str]:
    """Sentences carrying names, emails, phone numbers, card numbers and IP addresses."""
    return [rng.choice(SENTENCE_TEMPLATES).format(**pii_values(rng)) for _ in range(count)]
