"""
Token model and synthetic corpora

Builds the closed whitespace vocabulary shared by attacker and victim, and:
1. Encodes and decodes text against the vocabulary
2. Generates system-prompt corpora from preambles and an order-2 Markov chain
   over slotted bodies
3. Splits the corpus into disjoint victim and attacker prompt sets
4. Fills slot templates and expands paraphrase families for the
   semantic-cache experiments
"""

import itertools
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import seed_data
from .errors import InvalidConfig, MissingSlot, UnknownToken
from .rng import SeededRNG, derive_seed

logger = logging.getLogger(__name__)

TokenSeq = List[int]

UNK = '<unk>'
RARE = '<rare>'
SYSTEM_TAG = '<|system|>'
END_TAG = '<|end|>'
USER_TAG = '<|user|>'

# Kinds of private attributes the anonymizer can replace.
PII_KINDS = ('name', 'email', 'phone', 'credit_card', 'ip_address')
MAX_IDENTIFIERS_PER_KIND = 16

SLOT_PATTERN = re.compile(r'\[([^\[\]]+)\]')


def identifier_token(kind: str, index: int) -> str:
    """Surface form of an anonymized identifier, e.g. ⟨NAME_1⟩."""
    return f"⟨{kind.upper()}_{index}⟩"


def filler_words() -> List[str]:
    return [f"f{i:03d}" for i in range(seed_data.FILLER_WORD_COUNT)]


def document_words() -> List[str]:
    return [f"d{i:04d}" for i in range(seed_data.DOCUMENT_WORD_COUNT)]


@dataclass(frozen=True)
class Vocab:
    """Closed vocabulary; ids are dense positions in `tokens`."""

    tokens: Tuple[str, ...]
    id_of: Dict[str, int] = field(compare=False, repr=False)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> 'Vocab':
        token_tuple = tuple(tokens)
        id_of = {token: i for i, token in enumerate(token_tuple)}
        if len(id_of) != len(token_tuple):
            raise InvalidConfig("Vocabulary tokens must be distinct")
        return cls(tokens=token_tuple, id_of=id_of)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    @property
    def unk_id(self) -> int:
        return self.id_of[UNK]

    @property
    def rare_id(self) -> int:
        return self.id_of[RARE]


def seed_words() -> List[str]:
    words = set()
    texts = list(seed_data.PREAMBLES) + [slot for body in seed_data.PROMPT_BODIES for slot in body]
    texts += list(seed_data.NAMES) + list(seed_data.CONDITIONS)
    texts += list(seed_data.UNRELATED_REQUESTS) + [seed_data.SUMMARIZE_INSTRUCTION]
    texts.append(SLOT_PATTERN.sub(' ', seed_data.AGENDA_TEMPLATE))
    for word, alternatives in seed_data.SYNONYMS.items():
        texts.append(word)
        texts.extend(alternatives)
    for text in texts:
        words.update(text.split())
    return sorted(words)


def build_vocab() -> Vocab:
    """
    Build the shared vocabulary.

    Layout: reserved tokens first, then anonymizer identifiers, then the
    sorted seed words, filler words and document words.

    Returns:
        Vocab instance (identical on every call)
    """
    tokens = [UNK, RARE, SYSTEM_TAG, END_TAG, USER_TAG]
    for kind in PII_KINDS:
        tokens.extend(identifier_token(kind, i) for i in range(1, MAX_IDENTIFIERS_PER_KIND + 1))
    tokens.extend(seed_words())
    tokens.extend(filler_words())
    tokens.extend(document_words())
    return Vocab.from_tokens(tokens)


def encode(text: str, vocab: Vocab) -> TokenSeq:
    """
    Encode whitespace-delimited words into token ids.

    Args:
        text: Surface text
        vocab: Closed vocabulary

    Returns:
        Token ids in word order

    Raises:
        UnknownToken: If a word is not in the vocabulary
    """
    ids = []
    for word in text.split():
        token_id = vocab.id_of.get(word)
        if token_id is None:
            raise UnknownToken(word)
        ids.append(token_id)
    return ids


def encode_lenient(text: str, vocab: Vocab) -> TokenSeq:
    """Encode text, mapping out-of-vocabulary words to the <unk> id."""
    unk = vocab.unk_id
    return [vocab.id_of.get(word, unk) for word in text.split()]


def decode(ids: Sequence[int], vocab: Vocab) -> str:
    return ' '.join(vocab.tokens[i] for i in ids)


@dataclass
class CorpusConfig:
    """Corpus generation parameters ([corpus] section)."""

    n_prompts: int = 1000
    victim_fraction: float = 0.2
    min_length: int = 20
    max_length: int = 120

    def validate(self) -> None:
        if self.n_prompts < 2:
            raise InvalidConfig("corpus.n_prompts must be at least 2")
        if self.min_length < 1 or self.max_length < self.min_length:
            raise InvalidConfig("corpus lengths must satisfy 1 <= min_length <= max_length")
        if not 0.0 < self.victim_fraction < 1.0:
            raise InvalidConfig("corpus.victim_fraction must be in (0, 1)")
        victims = self.victim_count()
        if victims < 1 or victims >= self.n_prompts:
            raise InvalidConfig(
                f"corpus.victim_fraction {self.victim_fraction} leaves an empty split "
                f"for {self.n_prompts} prompts"
            )

    def victim_count(self) -> int:
        return int(round(self.n_prompts * self.victim_fraction))


@dataclass
class PromptCorpus:
    vocab: Vocab
    system_prompts: List[TokenSeq]
    victim_split: List[int]
    attacker_split: List[int]
    seed: int

    def victim_prompts(self) -> List[TokenSeq]:
        return [self.system_prompts[i] for i in self.victim_split]

    def attacker_prompts(self) -> List[TokenSeq]:
        return [self.system_prompts[i] for i in self.attacker_split]

    def text(self, index: int) -> str:
        return decode(self.system_prompts[index], self.vocab)

    def to_json(self) -> str:
        return json.dumps({
            'seed': self.seed,
            'vocab': list(self.vocab.tokens),
            'prompts': self.system_prompts,
            'victim': self.victim_split,
            'attacker': self.attacker_split,
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, payload: str) -> 'PromptCorpus':
        data = json.loads(payload)
        try:
            return cls(
                vocab=Vocab.from_tokens(data['vocab']),
                system_prompts=[list(p) for p in data['prompts']],
                victim_split=list(data['victim']),
                attacker_split=list(data['attacker']),
                seed=int(data['seed']),
            )
        except KeyError as e:
            raise InvalidConfig(f"Corpus JSON is missing field {e}") from e


class MarkovChain:
    """
    Order-2 word chain over slotted bodies, entered from a preamble.

    Any word of a slot may follow any word pair drawn from the two slots
    before it, so every continuation inside a body is a uniform choice
    among the slot's words. Bodies run on into the next one and the last
    wraps to the first.
    """

    def __init__(self, preambles: Sequence[str], bodies: Sequence[Sequence[str]]):
        self.preambles = [p.split() for p in preambles]
        if any(len(p) < 2 for p in self.preambles):
            raise InvalidConfig("Preambles need at least two words")
        self.table: Dict[Tuple[str, str], List[str]] = {}

        slots = [slot.split() for body in bodies for slot in body]
        cycle = slots + slots[:2]
        for before, last, successors in zip(cycle, cycle[1:], cycle[2:]):
            for context in itertools.product(before, last):
                self.table.setdefault(context, []).extend(successors)
        for preamble in self.preambles:
            for body in bodies:
                first, second = body[0].split(), body[1].split()
                self.table.setdefault((preamble[-2], preamble[-1]), []).extend(first)
                for word in first:
                    self.table.setdefault((preamble[-1], word), []).extend(second)

    def generate(self, rng: SeededRNG, length: int) -> List[str]:
        words = list(rng.choice(self.preambles))
        while len(words) < length:
            words.append(rng.choice(self.table[(words[-2], words[-1])]))
        return words[:length]


def build_corpus(config: CorpusConfig, seed: int, vocab: Optional[Vocab] = None) -> PromptCorpus:
    """
    Generate a system-prompt corpus and its victim/attacker split.

    Args:
        config: Corpus parameters
        seed: Global experiment seed
        vocab: Vocabulary to encode against (defaults to build_vocab())

    Returns:
        PromptCorpus with distinct prompts and disjoint covering splits

    Raises:
        InvalidConfig: On zero sizes or when distinct prompts cannot be generated
    """
    config.validate()
    vocab = vocab or build_vocab()
    rng = SeededRNG(derive_seed(seed, 'corpus'))
    chain = MarkovChain(seed_data.PREAMBLES, seed_data.PROMPT_BODIES)

    prompts: List[TokenSeq] = []
    seen = set()
    attempts = 0
    max_attempts = config.n_prompts * 50
    while len(prompts) < config.n_prompts:
        attempts += 1
        if attempts > max_attempts:
            raise InvalidConfig(
                f"Could not generate {config.n_prompts} distinct prompts; widen the length range"
            )
        length = config.min_length + rng.randrange(config.max_length - config.min_length + 1)
        words = chain.generate(rng, length)
        key = ' '.join(words)
        if key in seen:
            continue
        seen.add(key)
        prompts.append(encode(key, vocab))

    order = list(range(config.n_prompts))
    rng.shuffle(order)
    victims = config.victim_count()
    corpus = PromptCorpus(
        vocab=vocab,
        system_prompts=prompts,
        victim_split=sorted(order[:victims]),
        attacker_split=sorted(order[victims:]),
        seed=seed,
    )
    logger.info("Built corpus of %d prompts (%d victim, %d attacker)",
                len(prompts), len(corpus.victim_split), len(corpus.attacker_split))
    return corpus


def split_unigram_distance(corpus: PromptCorpus) -> float:
    """Total-variation distance between the victim and attacker unigram distributions."""
    victim = Counter(t for p in corpus.victim_prompts() for t in p)
    attacker = Counter(t for p in corpus.attacker_prompts() for t in p)
    n_victim = sum(victim.values()) or 1
    n_attacker = sum(attacker.values()) or 1
    tokens = set(victim) | set(attacker)
    return 0.5 * sum(abs(victim[t] / n_victim - attacker[t] / n_attacker) for t in tokens)


@dataclass(frozen=True)
class SlotTemplate:
    text: str
    slots: Tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> 'SlotTemplate':
        """Read slot names from `[slot]` markers; each name may appear once."""
        names = SLOT_PATTERN.findall(text)
        duplicates = sorted(n for n, c in Counter(names).items() if c > 1)
        if duplicates:
            raise InvalidConfig(f"Slot appears more than once: {', '.join(duplicates)}")
        return cls(text=text, slots=tuple(names))


def instantiate(template: SlotTemplate, bindings: Mapping[str, str]) -> str:
    """
    Fill every slot of a template.

    Args:
        template: Template with `[slot]` markers
        bindings: Slot name -> surface string, inserted as-is

    Returns:
        Filled text

    Raises:
        MissingSlot: If a slot has no binding
    """
    for name in template.slots:
        if name not in bindings:
            raise MissingSlot(name)
    return SLOT_PATTERN.sub(lambda m: bindings[m.group(1)], template.text)


@dataclass
class ParaphraseFamily:
    """
    Rule-based paraphrases of one template.

    Each swap rule independently exchanges two adjacent words; each synonym
    rule replaces a word with one of its alternatives. Variants enumerate
    every combination in a fixed order, the unmodified template first.
    """

    template: str
    swaps: List[Tuple[str, str]] = field(default_factory=list)
    synonyms: Dict[str, List[str]] = field(default_factory=dict)

    def variants(self) -> List[SlotTemplate]:
        words = self.template.split()
        synonym_slots = [(i, [w] + self.synonyms[w]) for i, w in enumerate(words) if w in self.synonyms]
        results = []
        for mask in range(2 ** len(self.swaps)):
            swapped = list(words)
            for bit, (first, second) in enumerate(self.swaps):
                if mask >> bit & 1:
                    i = swapped.index(first)
                    if swapped[i + 1] != second:
                        raise InvalidConfig(f"Swap rule ({first}, {second}) is not adjacent")
                    swapped[i], swapped[i + 1] = second, first
            for choice in itertools.product(*[options for _, options in synonym_slots]):
                variant = list(swapped)
                for (position, _), word in zip(synonym_slots, choice):
                    variant[position] = word
                results.append(SlotTemplate.parse(' '.join(variant)))
        return results


def agenda_family() -> ParaphraseFamily:
    """The healthcare agenda template with its reorder rules."""
    return ParaphraseFamily(template=seed_data.AGENDA_TEMPLATE, swaps=list(seed_data.AGENDA_SWAPS))


def agenda_bindings(name: str, condition: str) -> Dict[str, str]:
    return {'name': name, 'condition': condition}


def make_document(rng: SeededRNG, length: int) -> List[str]:
    """Synthetic document of `length` words drawn uniformly from the document pool."""
    pool = document_words()
    return [pool[rng.randrange(len(pool))] for _ in range(length)]
