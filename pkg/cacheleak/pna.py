"""
Peeping neighbor attack on the semantic cache

Infers whether another user asked a question carrying a specific pair of
private attributes (a name and a medical condition):
1. Builds probe candidates from paraphrases of the question template
2. Ranks them by representativeness and greedily keeps orthogonal ones
   while the estimated false positive rate stays under budget
3. Per victim request, floods the cache clean, lets the victim ask, then
   sends the probes and calls a hit when any probe TTFT is fast
4. Scores TPR on true samples and FPR per false-sample type

Also hosts the document inference probe and the semantic leakage
characterization used for ROC analysis.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import seed_data
from .client import EngineClient
from .corpus import (ParaphraseFamily, SlotTemplate, agenda_bindings, agenda_family, filler_words,
                     instantiate, make_document)
from .errors import InvalidConfig, TooFewCandidates, TransportError
from .probe import HIT, MISS
from .rng import SeededRNG
from .semantic_cache import DEFAULT_DIMENSION, HASH_SEED, embed

logger = logging.getLogger(__name__)

ROUND_FIELDS = ['round', 'victim_type', 'probe_count', 'decision', 'truth']
PNA_SUMMARY_FIELDS = ['probe_count', 'tpr', 'fpr_type2', 'fpr_type3', 'fpr_type4']
DOC_FIELDS = ['repetition', 'phase', 'doc_id', 'doc_tokens', 'ttft_s', 'decision', 'truth']

VICTIM_TYPES = (1, 2, 3, 4)
PROBE_MODES = ('lookup', 'insert')
ESTIMATOR_POOLS = ('unrelated', 'mixed')

Target = Tuple[str, str]
FprEstimator = Callable[['ProbeCandidate', List['ProbeCandidate']], float]


@dataclass
class GreedyConfig:
    sigma_budget: float = 0.06
    max_probes: int = 5
    orthogonality_min_distance: float = 0.35

    def validate(self) -> None:
        if not 0.0 < self.sigma_budget < 1.0:
            raise InvalidConfig("pna.sigma_budget must be in (0, 1)")
        if self.max_probes < 0:
            raise InvalidConfig("pna.max_probes must be non-negative")
        if self.orthogonality_min_distance < 0:
            raise InvalidConfig("pna.orthogonality_min_distance must be non-negative")


@dataclass
class PnaConfig:
    """[pna] section."""

    rounds: int = 500
    probe_mode: str = 'lookup'
    eviction: str = 'flood'
    flood_requests: int = 1000
    flood_words: int = 8
    estimator_pool: str = 'unrelated'
    decision_threshold: float = field(default=0.0, metadata={'unit': 's'})
    greedy: GreedyConfig = field(default_factory=GreedyConfig)

    def validate(self) -> None:
        if self.rounds < 0:
            raise InvalidConfig("pna.rounds must be non-negative")
        if self.probe_mode not in PROBE_MODES:
            raise InvalidConfig(f"pna.probe_mode must be one of {', '.join(PROBE_MODES)}")
        if self.eviction not in ('flood', 'flush'):
            raise InvalidConfig("pna.eviction must be 'flood' or 'flush'")
        if self.estimator_pool not in ESTIMATOR_POOLS:
            raise InvalidConfig(f"pna.estimator_pool must be one of {', '.join(ESTIMATOR_POOLS)}")
        if self.decision_threshold < 0:
            raise InvalidConfig("pna.decision_threshold must be non-negative (0 selects the midpoint)")
        self.greedy.validate()


@dataclass
class ProbeCandidate:
    text: str
    embedding: np.ndarray = field(repr=False, compare=False)
    representativeness: float = 0.0
    template: Optional[SlotTemplate] = None


def make_candidates(templates: Sequence[SlotTemplate], target: Target,
                    dimension: int = DEFAULT_DIMENSION, seed: int = HASH_SEED) -> List[ProbeCandidate]:
    """Instantiate every template with the target attributes and embed it."""
    candidates = []
    for template in templates:
        text = instantiate(template, agenda_bindings(*target))
        candidates.append(ProbeCandidate(text, embed(text, dimension, seed), template=template))
    return candidates


def rank_representative(candidates: Sequence[ProbeCandidate]) -> List[ProbeCandidate]:
    """
    Order candidates by mean L2 distance to all others, closest first.

    Ties break on the text. Sets representativeness on every candidate.

    Raises:
        TooFewCandidates: With fewer than two candidates
    """
    if len(candidates) < 2:
        raise TooFewCandidates(f"Ranking needs at least 2 candidates, got {len(candidates)}")
    matrix = np.stack([c.embedding for c in candidates])
    distances = np.linalg.norm(matrix[:, None, :] - matrix[None, :, :], axis=-1)
    means = distances.sum(axis=1) / (len(candidates) - 1)
    for candidate, mean in zip(candidates, means):
        # rounded so summation order cannot reorder ties
        candidate.representativeness = round(float(mean), 9)
    return sorted(candidates, key=lambda c: (c.representativeness, c.text))


def greedy_select(ranked: Sequence[ProbeCandidate], cfg: GreedyConfig,
                  fpr_estimator: FprEstimator) -> List[ProbeCandidate]:
    """
    Keep the best-ranked candidates that are far from every kept probe.

    Stops when candidates run out, max_probes is reached, or adding the
    next orthogonal candidate would push the estimated cumulative FPR over
    sigma_budget.

    Args:
        ranked: Candidates, most representative first
        cfg: Greedy configuration
        fpr_estimator: Marginal FPR a candidate adds to the selected set

    Returns:
        Selected probes in selection order (possibly empty)
    """
    selected: List[ProbeCandidate] = []
    cumulative = 0.0
    for candidate in ranked:
        if len(selected) >= cfg.max_probes:
            break
        if any(np.linalg.norm(candidate.embedding - s.embedding) < cfg.orthogonality_min_distance
               for s in selected):
            continue
        added = fpr_estimator(candidate, selected)
        if cumulative + added > cfg.sigma_budget:
            logger.info("FPR budget %.3f reached after %d probes", cfg.sigma_budget, len(selected))
            break
        cumulative += added
        selected.append(candidate)
    logger.info("Selected %d probes (estimated FPR %.4f)", len(selected), cumulative)
    return selected


def union_fpr_estimator(pool_texts: Sequence[str], threshold: float,
                        dimension: int = DEFAULT_DIMENSION, seed: int = HASH_SEED) -> FprEstimator:
    """
    Held-out FPR estimator.

    A pool request counts as a false positive for a probe set when any
    probe reaches the cache similarity threshold against it. The estimator
    returns the increase in that fraction a candidate causes, so the
    marginals of a selection sum to its union FPR.
    """
    if not pool_texts:
        raise InvalidConfig("FPR estimation needs a non-empty held-out pool")
    pool = np.stack([embed(t, dimension, seed) for t in pool_texts])

    def covered(probes: Sequence[ProbeCandidate]) -> np.ndarray:
        mask = np.zeros(len(pool), dtype=bool)
        for probe in probes:
            mask |= (pool @ probe.embedding) >= threshold
        return mask

    def estimate(candidate: ProbeCandidate, selected: List[ProbeCandidate]) -> float:
        before = covered(selected)
        after = before | ((pool @ candidate.embedding) >= threshold)
        return float(after.mean() - before.mean())

    return estimate


def other_names(target: Target) -> List[str]:
    return [n for n in seed_data.NAMES if n != target[0]]


def other_conditions(target: Target) -> List[str]:
    return [c for c in seed_data.CONDITIONS if c != target[1]]


def estimator_pool(family: ParaphraseFamily, target: Target, pool: str = 'unrelated') -> List[str]:
    """
    Held-out requests that should not trigger the probes.

    'unrelated' uses every paraphrase with both attributes changed plus the
    unrelated requests; 'mixed' adds one-attribute changes so that changed
    name, changed condition and both-changed appear 1:1:2.
    """
    variants = family.variants()
    both = [instantiate(v, agenda_bindings(n, c))
            for v in variants for n in other_names(target)[:3] for c in other_conditions(target)[:3]]
    texts = both + list(seed_data.UNRELATED_REQUESTS)
    if pool == 'mixed':
        per_kind = len(texts) // 2
        cond_changed = [instantiate(v, agenda_bindings(target[0], c))
                        for v in variants for c in other_conditions(target)]
        name_changed = [instantiate(v, agenda_bindings(n, target[1]))
                        for v in variants for n in other_names(target)]
        texts += cond_changed[:per_kind] + name_changed[:per_kind]
    return texts


def select_probes(cfg: PnaConfig, cache_threshold: float, family: Optional[ParaphraseFamily] = None,
                  reference: Optional[Target] = None, dimension: int = DEFAULT_DIMENSION,
                  seed: int = HASH_SEED) -> List[SlotTemplate]:
    """
    Choose probe templates offline against a reference target.

    Returns:
        Templates of the selected probes, to be filled per round
    """
    family = family or agenda_family()
    reference = reference or (seed_data.NAMES[0], seed_data.CONDITIONS[0])
    ranked = rank_representative(make_candidates(family.variants(), reference, dimension, seed))
    estimator = union_fpr_estimator(estimator_pool(family, reference, cfg.estimator_pool),
                                    cache_threshold, dimension, seed)
    return [c.template for c in greedy_select(ranked, cfg.greedy, estimator)]


@dataclass
class VictimMix:
    """One round of victim requests: Type-1, Type-2, Type-3 and two Type-4."""

    types: Tuple[int, ...] = (1, 2, 3, 4, 4)

    def validate(self) -> None:
        if len(self.types) != 5 or any(t not in VICTIM_TYPES for t in self.types):
            raise InvalidConfig("A victim round has exactly 5 requests of types 1-4")

    def requests(self, rng: SeededRNG, target: Target,
                 family: ParaphraseFamily) -> List[Tuple[int, str]]:
        """
        Victim request texts for one round, each a random paraphrase.

        Type-2 keeps the name, Type-3 keeps the condition, Type-4 alternates
        between both attributes changed and an unrelated request.
        """
        variants = family.variants()
        result = []
        type4_seen = 0
        for vtype in self.types:
            if vtype == 1:
                bindings = agenda_bindings(*target)
            elif vtype == 2:
                bindings = agenda_bindings(target[0], rng.choice(other_conditions(target)))
            elif vtype == 3:
                bindings = agenda_bindings(rng.choice(other_names(target)), target[1])
            else:
                type4_seen += 1
                if type4_seen % 2 == 0:
                    result.append((vtype, rng.choice(seed_data.UNRELATED_REQUESTS)))
                    continue
                bindings = agenda_bindings(rng.choice(other_names(target)), rng.choice(other_conditions(target)))
            result.append((vtype, instantiate(rng.choice(variants), bindings)))
        return result


def make_flood_evictor(client: EngineClient, count: int, rng: SeededRNG, words_each: int = 8) -> Callable[[], None]:
    """Evictor sending `count` distinct filler requests that overwrite the semantic cache."""
    pool = filler_words()

    def flood() -> None:
        for _ in range(count):
            client.direct_ttft(' '.join(rng.sample(pool, words_each)))

    return flood


def make_flush_evictor(client: EngineClient) -> Callable[[], None]:
    def flush() -> None:
        client.flush('semantic')
    return flush


@dataclass
class PnaStats:
    max_probes: int
    hits: Dict[int, List[int]] = field(default_factory=dict)
    totals: Dict[int, int] = field(default_factory=dict)
    discarded_rounds: int = 0

    def __post_init__(self):
        for vtype in VICTIM_TYPES:
            self.hits.setdefault(vtype, [0] * self.max_probes)
            self.totals.setdefault(vtype, 0)

    def record(self, vtype: int, decisions: Sequence[bool]) -> None:
        self.totals[vtype] += 1
        for m, decision in enumerate(decisions):
            if decision:
                self.hits[vtype][m] += 1

    def rate(self, vtype: int, probe_count: int) -> float:
        if probe_count == 0 or not self.totals[vtype]:
            return 0.0
        return self.hits[vtype][probe_count - 1] / self.totals[vtype]

    def tpr(self, probe_count: int) -> float:
        return self.rate(1, probe_count)

    def summary_rows(self) -> List[Dict]:
        return [{
            'probe_count': m,
            'tpr': f"{self.tpr(m):.4f}",
            'fpr_type2': f"{self.rate(2, m):.4f}",
            'fpr_type3': f"{self.rate(3, m):.4f}",
            'fpr_type4': f"{self.rate(4, m):.4f}",
        } for m in range(1, self.max_probes + 1)]


def probe_decisions(client: EngineClient, probes: Sequence[SlotTemplate], target: Target,
                    threshold: float, lookup_only: bool = True) -> List[bool]:
    """
    Send every probe once; entry m is True when any of the first m+1 probes read fast.
    """
    decisions = []
    seen_hit = False
    for template in probes:
        ttft = client.direct_ttft(instantiate(template, agenda_bindings(*target)), lookup_only=lookup_only)
        seen_hit = seen_hit or ttft < threshold
        decisions.append(seen_hit)
    return decisions


def run_rounds(client: EngineClient, victim: EngineClient, victim_mix: VictimMix, probes: Sequence[SlotTemplate],
               rounds: int, evictor: Callable[[], None], threshold: float, rng: SeededRNG,
               lookup_only: bool = True, family: Optional[ParaphraseFamily] = None,
               row_sink: Optional[Callable[[Dict], None]] = None) -> PnaStats:
    """
    Attack every victim request of every round.

    Each round picks a random (name, condition) target. For each victim
    request the cache is evicted, the victim sends its request, and the
    attacker sends its probes.

    Args:
        client: Attacker client
        victim: Victim client (its own session)
        victim_mix: Request types per round
        probes: Probe templates in selection order
        rounds: Number of rounds
        evictor: Clears the semantic cache
        threshold: TTFT below which a probe reads as a hit
        rng: Stream for targets and victim paraphrases
        lookup_only: Probes do not insert their own entries
        family: Paraphrase family (defaults to the agenda family)
        row_sink: Receives per-request CSV rows of completed rounds

    Returns:
        PnaStats over the completed rounds
    """
    victim_mix.validate()
    family = family or agenda_family()
    stats = PnaStats(max_probes=len(probes))
    for round_idx in range(rounds):
        target = (rng.choice(seed_data.NAMES), rng.choice(seed_data.CONDITIONS))
        requests = victim_mix.requests(rng, target, family)
        outcomes = []
        try:
            for vtype, text in requests:
                evictor()
                victim.direct_ttft(text)
                outcomes.append((vtype, probe_decisions(client, probes, target, threshold, lookup_only)))
        except TransportError as e:
            logger.warning("Round %d discarded: %s", round_idx, e)
            stats.discarded_rounds += 1
            continue
        for vtype, decisions in outcomes:
            stats.record(vtype, decisions)
            if row_sink is not None:
                for m, decision in enumerate(decisions, start=1):
                    row_sink({'round': round_idx, 'victim_type': vtype, 'probe_count': m,
                              'decision': HIT if decision else MISS, 'truth': int(vtype == 1)})
    return stats


def attribute_advantage(stats: PnaStats, probe_count: int) -> float:
    """TPR minus the larger one-attribute FPR; near zero when the attributes cannot be told apart."""
    return stats.tpr(probe_count) - max(stats.rate(2, probe_count), stats.rate(3, probe_count))


##### Document inference #####


@dataclass
class DocConfig:
    """[doc] section."""

    lengths: List[int] = field(default_factory=lambda: [12000, 18000, 24000])
    interested: int = 200
    uploads: int = 100
    repetitions: int = 5
    threshold: float = field(default=2.0, metadata={'unit': 's'})
    kv_capacity_tokens: int = 8_000_000

    def validate(self) -> None:
        if not self.lengths or any(n < 1 for n in self.lengths):
            raise InvalidConfig("doc.lengths must be positive")
        if not 0 < self.uploads <= self.interested:
            raise InvalidConfig("doc.uploads must be between 1 and doc.interested")
        if self.repetitions < 1:
            raise InvalidConfig("doc.repetitions must be at least 1")
        if self.threshold <= 0:
            raise InvalidConfig("doc.threshold must be positive")


def document_prompt(doc: Sequence[str]) -> Tuple[str, str]:
    """(system, user) texts of a summarization request."""
    return seed_data.SUMMARIZE_INSTRUCTION, ' '.join(doc)


def document_probe(client: EngineClient, doc: Sequence[str], threshold: float) -> str:
    """Submit a document for summarization; hit when the first token arrives before `threshold`."""
    ttft = client.synthesized_ttft(*document_prompt(doc))
    return HIT if ttft < threshold else MISS


@dataclass
class DocStats:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def record(self, decision: str, truth: bool) -> None:
        if decision == HIT:
            if truth:
                self.tp += 1
            else:
                self.fp += 1
        elif truth:
            self.fn += 1
        else:
            self.tn += 1

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def fpr(self) -> float:
        negatives = self.fp + self.tn
        return self.fp / negatives if negatives else 0.0

    @property
    def tpr(self) -> float:
        positives = self.tp + self.fn
        return self.tp / positives if positives else 0.0


def run_document_inference(attacker: EngineClient, victim: EngineClient, cfg: DocConfig, rng: SeededRNG,
                           expire: Callable[[], None],
                           row_sink: Optional[Callable[[Dict], None]] = None) -> DocStats:
    """
    Infer which documents of interest the victim uploaded.

    Each repetition has two phases separated by cache expiry: the victim
    uploads a random half of the interested documents and the attacker
    probes all of them; then the victim uploads documents outside the set
    and the attacker probes the whole set again.

    Args:
        attacker: Attacker client
        victim: Victim client
        cfg: Protocol configuration
        rng: Stream for documents and upload choices
        expire: Drops all cached state between phases
        row_sink: Receives one CSV row per probe

    Returns:
        DocStats over all probes
    """
    cfg.validate()
    docs = [make_document(rng, cfg.lengths[i % len(cfg.lengths)]) for i in range(cfg.interested)]
    stats = DocStats()

    def probe_all(repetition: int, phase: str, uploaded: set) -> None:
        for doc_id, doc in enumerate(docs):
            system_text, user_text = document_prompt(doc)
            ttft = attacker.synthesized_ttft(system_text, user_text)
            decision = HIT if ttft < cfg.threshold else MISS
            truth = doc_id in uploaded
            stats.record(decision, truth)
            if row_sink is not None:
                row_sink({'repetition': repetition, 'phase': phase, 'doc_id': doc_id,
                          'doc_tokens': len(doc), 'ttft_s': f"{ttft:.6f}",
                          'decision': decision, 'truth': int(truth)})

    for repetition in range(cfg.repetitions):
        expire()
        uploaded = set(rng.sample(range(cfg.interested), cfg.uploads))
        for doc_id in sorted(uploaded):
            victim.synthesized_ttft(*document_prompt(docs[doc_id]))
        probe_all(repetition, 'interested', uploaded)

        expire()
        for i in range(cfg.uploads):
            outside = make_document(rng, cfg.lengths[i % len(cfg.lengths)])
            victim.synthesized_ttft(*document_prompt(outside))
        probe_all(repetition, 'outside', set())
        logger.info("Document repetition %d: accuracy so far %.3f", repetition, stats.accuracy)
    return stats


##### Semantic leakage characterization #####


@dataclass
class LeakageSamples:
    """Max-similarity scores against a reference set; label 1 for same-attribute requests."""

    scores: List[float]
    labels: List[int]


def semantic_leakage_samples(rng: SeededRNG, variant: str = 'both', targets: int = 10,
                             reference_fraction: float = 0.2, family: Optional[ParaphraseFamily] = None,
                             dimension: int = DEFAULT_DIMENSION, seed: int = HASH_SEED) -> LeakageSamples:
    """
    Similarity scores for the semantic-cache ROC.

    Per target, the paraphrases carrying the target attributes are split
    into a reference part and an evaluation part (positives). Negatives are
    the base template filled with other attributes: both attributes changed
    ('both') or exactly one changed ('one'). A request's score is its
    maximum cosine similarity to the reference set.
    """
    if variant not in ('both', 'one'):
        raise InvalidConfig("Leakage variant must be 'both' or 'one'")
    family = family or agenda_family()
    variants = family.variants()
    base = variants[0]
    scores: List[float] = []
    labels: List[int] = []
    for _ in range(targets):
        target = (rng.choice(seed_data.NAMES), rng.choice(seed_data.CONDITIONS))
        positives = [instantiate(v, agenda_bindings(*target)) for v in variants]
        rng.shuffle(positives)
        n_ref = max(1, int(round(len(positives) * reference_fraction)))
        reference = np.stack([embed(t, dimension, seed) for t in positives[:n_ref]])

        if variant == 'both':
            negatives = [instantiate(base, agenda_bindings(n, c))
                         for n in other_names(target) for c in other_conditions(target)]
        else:
            negatives = ([instantiate(base, agenda_bindings(target[0], c)) for c in other_conditions(target)]
                         + [instantiate(base, agenda_bindings(n, target[1])) for n in other_names(target)])

        for text, label in [(t, 1) for t in positives[n_ref:]] + [(t, 0) for t in negatives]:
            scores.append(float(np.max(reference @ embed(text, dimension, seed))))
            labels.append(label)
    return LeakageSamples(scores, labels)
