"""
Minimum shared-prefix granularity sweep

For every K in the sweep:
1. Starts a fresh engine whose prefix cache shares only whole K-token blocks
2. Re-runs prompt stealing with a predictor that proposes K tokens at a time
3. Shrinks the vote as K grows, since a K-token gap is K times wider
4. Reports recovery rate, accuracy and query cost per K
Classifier outcomes can come from timing (live) or from per-K oracle
rates (simulate).
"""

import logging
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .client import InProcessClient
from .corpus import PromptCorpus
from .engine import ServingEngine
from .errors import InvalidConfig
from .latency import LatencyParams
from .prefix_cache import PrefixCacheConfig
from .probe import VoteConfig
from .psa import (AttackTrace, NGramPredictor, OracleJudge, PenaltyState, PromptStealer, PsaConfig,
                  TimingJudge, make_victim_trigger, predictor_proposer, sample_next)
from .rng import SeededRNG, derive_seed

logger = logging.getLogger(__name__)

KSWEEP_FIELDS = ['K', 'recovery_rate', 'accuracy', 'queries_per_recovered_token', 'queries_per_token']

# Draws before rejection sampling settles for the least penalized tuple seen.
MAX_REJECTION_DRAWS = 256
GREEDY_BEAM_WIDTH = 8


@dataclass
class KSweepConfig:
    """[ksweep] section."""

    k_values: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    simulate: bool = True
    victims: int = 100
    max_guesses_per_position: int = 80
    vote_n: List[int] = field(default_factory=list)

    def validate(self) -> None:
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise InvalidConfig("ksweep.k_values must be a non-empty list of positive integers")
        if self.vote_n and len(self.vote_n) != len(self.k_values):
            raise InvalidConfig("ksweep.vote_n must be empty or list one sample count per K")
        if self.victims < 1:
            raise InvalidConfig("ksweep.victims must be at least 1")

    def samples_for(self, k: int) -> int:
        if self.vote_n:
            return self.vote_n[self.k_values.index(k)]
        return default_samples(k)


def default_samples(k: int) -> int:
    """Vote size for granularity k: 10, 8, 6, 4, then 2 from k=5 on."""
    return max(2, 10 - 2 * (k - 1))


def vote_for(k: int, n: int, gap: float) -> VoteConfig:
    """Majority vote with theta halfway across a k-token gap."""
    return VoteConfig(n=n, k=max(1, n // 2), theta=-k * gap / 2.0)


def oracle_rates(k: int, gap: float, sigma: float) -> Tuple[float, float]:
    """
    Single-sample (p_hit, p_fp) of the timing classifier at granularity k.

    A hit shifts the target-minus-reference difference by -k*gap; the
    difference has spread sigma*sqrt(2); theta sits halfway.
    """
    spread = sigma * math.sqrt(2.0)
    if spread == 0:
        return 1.0, 0.0
    z = k * gap / (2.0 * spread)
    unit = NormalDist()
    return unit.cdf(z), unit.cdf(-z)


def predict_next_k(predictor: NGramPredictor, context: Sequence[int], k: int, temperature: float,
                   penalty: Optional[PenaltyState], rng: np.random.Generator, position: int = 0) -> Tuple[int, ...]:
    """
    Propose the next k tokens.

    Tokens are chain-sampled from tempered conditionals. The penalty of the
    whole tuple enters through rejection: a draw is kept with probability
    penalty ** (1 / temperature). At temperature 0 the tuple is the best
    penalized candidate of a small beam over greedy continuations.

    Args:
        predictor: Next-token model
        context: Tokens recovered so far
        k: Block size (k=1 is exactly sample_next)
        temperature: Sampling temperature
        penalty: Per-position tuple multipliers
        rng: Sampling stream
        position: Position the block starts at (penalty lookup)

    Returns:
        Tuple of k token ids
    """
    if k < 1:
        raise InvalidConfig("Block size must be at least 1")
    if k == 1:
        return (sample_next(predictor, context, temperature, penalty, rng, position=position),)
    if temperature <= 0:
        return _greedy_block(predictor, context, k, penalty, position)

    best: Optional[Tuple[int, ...]] = None
    best_mult = -1.0
    for _ in range(MAX_REJECTION_DRAWS):
        ctx = list(context)
        block = []
        for _ in range(k):
            token = predictor.sample(ctx, temperature, rng)
            block.append(token)
            ctx.append(token)
        candidate = tuple(block)
        mult = penalty.multiplier(position, candidate) if penalty is not None else 1.0
        if mult >= 1.0 or rng.random() < mult ** (1.0 / temperature):
            return candidate
        if mult > best_mult:
            best, best_mult = candidate, mult
    return best


def _greedy_block(predictor: NGramPredictor, context: Sequence[int], k: int,
                  penalty: Optional[PenaltyState], position: int) -> Tuple[int, ...]:
    beams: List[Tuple[float, Tuple[int, ...]]] = [(0.0, ())]
    for _ in range(k):
        expanded = []
        for logp, block in beams:
            probs = predictor.distribution(list(context) + list(block))
            top = np.argsort(-probs, kind='stable')[:GREEDY_BEAM_WIDTH]
            expanded.extend((logp + math.log(probs[t]), block + (int(t),)) for t in top)
        expanded.sort(key=lambda item: (-item[0], item[1]))
        beams = expanded[:GREEDY_BEAM_WIDTH]

    def score(item):
        logp, block = item
        mult = penalty.multiplier(position, block) if penalty is not None else 1.0
        return (-(logp + math.log(mult)), block)

    return min(beams, key=score)[1]


def tuple_probability(predictor: NGramPredictor, context: Sequence[int], block: Sequence[int]) -> float:
    """Probability of a block as the product of its chained conditionals."""
    ctx = list(context)
    prob = 1.0
    for token in block:
        prob *= predictor.probability(ctx, token)
        ctx.append(token)
    return prob


@dataclass
class KSweepRow:
    k: int
    traces: List[AttackTrace]

    @property
    def recovered(self) -> int:
        return sum(t.correct_tokens for t in self.traces)

    @property
    def committed(self) -> int:
        return sum(t.tokens_recovered for t in self.traces)

    @property
    def target_tokens(self) -> int:
        return sum(t.target_length for t in self.traces)

    @property
    def queries(self) -> int:
        return sum(t.total_queries for t in self.traces)

    @property
    def recovery_rate(self) -> float:
        return self.recovered / self.target_tokens if self.target_tokens else 0.0

    @property
    def accuracy(self) -> float:
        return self.recovered / self.committed if self.committed else 0.0

    @property
    def queries_per_recovered_token(self) -> float:
        return self.queries / self.recovered if self.recovered else math.inf

    @property
    def queries_per_token(self) -> float:
        return self.queries / self.target_tokens if self.target_tokens else 0.0

    def to_row(self) -> Dict:
        qpr = self.queries_per_recovered_token
        return {
            'K': self.k,
            'recovery_rate': f"{self.recovery_rate:.4f}",
            'accuracy': f"{self.accuracy:.4f}",
            'queries_per_recovered_token': 'inf' if math.isinf(qpr) else f"{qpr:.2f}",
            'queries_per_token': f"{self.queries_per_token:.2f}",
        }


def run_ksweep(cfg: KSweepConfig, corpus: PromptCorpus, predictor: NGramPredictor, psa_cfg: PsaConfig,
               latency: LatencyParams, kv_config: PrefixCacheConfig, seed: int,
               debug: bool = False) -> List[KSweepRow]:
    """
    Run prompt stealing once per granularity.

    In simulate mode every position is attempted (a failed block is skipped
    over using the true tokens) and votes come from oracle_rates; in live
    mode a fresh engine per K is attacked through timing.

    Args:
        cfg: Sweep configuration
        corpus: Prompt corpus (victims are taken from its victim split)
        predictor: Next-token model trained on the attacker split
        psa_cfg: Base attack configuration (guess budget, eviction, sampling)
        latency: Latency parameters (noise level and token gap)
        kv_config: Prefix cache configuration; granularity is replaced per K
        seed: Global seed
        debug: Enable debug logging in the attack loop

    Returns:
        One KSweepRow per K, in sweep order
    """
    cfg.validate()
    victims = corpus.victim_split[:cfg.victims]
    gap = latency.token_gap
    rows = []
    for k in cfg.k_values:
        k_psa = PsaConfig(**{**psa_cfg.__dict__,
                             'max_guesses_per_position': cfg.max_guesses_per_position,
                             'vote': vote_for(k, cfg.samples_for(k), gap)})
        k_psa.validate()
        base = SeededRNG(derive_seed(seed, f"ksweep:{k}"))
        sampler = np.random.default_rng(base.fork('sampler').seed)
        proposer = predictor_proposer(predictor, k_psa.temperature, sampler)

        engine = None
        if not cfg.simulate:
            engine = ServingEngine(latency=latency,
                                   kv_config=PrefixCacheConfig(granularity=k,
                                                               capacity_tokens=kv_config.capacity_tokens),
                                   vocab=corpus.vocab)
        p_hit, p_fp = oracle_rates(k, gap, latency.noise_sigma)
        logger.info("K=%d: vote n=%d k=%d, oracle single-sample rates hit=%.4f fp=%.4f",
                    k, k_psa.vote.n, k_psa.vote.k, p_hit, p_fp)

        traces = []
        for prompt_id in victims:
            secret = corpus.text(prompt_id).split()
            if cfg.simulate:
                judge = OracleJudge(secret, p_hit, p_fp, k_psa, base.fork(f"oracle:{prompt_id}"))
            else:
                engine.admin_flush('both')
                attacker = InProcessClient(engine, session='attacker', debug=debug)
                victim = attacker.with_session('victim')
                judge = TimingJudge(attacker, make_victim_trigger(victim, corpus.text(prompt_id), psa_cfg.trigger_text),
                                    k_psa, base.fork(f"fillers:{prompt_id}"), granularity=k)
            stealer = PromptStealer(judge, proposer, corpus.vocab, k_psa, granularity=k,
                                    skip_failed_positions=cfg.simulate, debug=debug)
            traces.append(stealer.recover(prompt_id, secret=secret))
        row = KSweepRow(k, traces)
        logger.info("K=%d: recovery %.3f accuracy %.3f", k, row.recovery_rate, row.accuracy)
        rows.append(row)
    return rows

