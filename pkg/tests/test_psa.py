import numpy as np
import pytest

from cacheleak.client import InProcessClient
from cacheleak.corpus import SYSTEM_TAG, document_words, encode
from cacheleak.engine import ServingEngine
from cacheleak.errors import EmptyCorpus, EvictionIncomplete, InvalidConfig
from cacheleak.latency import LatencyParams
from cacheleak.prefix_cache import PrefixCacheConfig
from cacheleak.probe import HIT, MISS, VoteConfig
from cacheleak.psa import (NGramPredictor, OracleJudge, PenaltyState, PromptStealer, PsaConfig, evict_kv,
                           make_victim_trigger, recover_prompt, sample_next, train_predictor)
from cacheleak.rng import SeededRNG

SECRET = document_words()[:12]


def small_cfg(**kwargs):
    defaults = dict(eviction_count=4, eviction_tokens=100, temperature=0.0, max_guesses_per_position=5,
                    vote=VoteConfig(n=3, k=2, theta=-0.2e-3))
    defaults.update(kwargs)
    return PsaConfig(**defaults)


def scripted(guesses):
    """Proposer returning the given token ids in order, one per call."""
    queue = list(guesses)

    def propose(context, size, penalty, position):
        return (queue.pop(0),)

    return propose


def test_predictor_backs_off_to_shorter_context():
    predictor = NGramPredictor(vocab_size=5, order=3, alpha=0.01).fit([[1, 2, 3], [1, 2, 4]])
    dist = predictor.distribution([1, 2])
    assert dist.sum() == pytest.approx(1.0)
    assert dist[3] == pytest.approx(1.01 / 2.05)
    assert predictor.backoff_context([0, 2]) == (2,)
    assert np.allclose(predictor.distribution([0]), 0.2)


def test_training_needs_a_bigram():
    with pytest.raises(EmptyCorpus):
        train_predictor([[1], []], vocab_size=5)


def test_penalty_halves_sampling_weight():
    predictor = NGramPredictor(vocab_size=2, order=2, alpha=0.0)
    penalty = PenaltyState()
    assert penalty.penalize(0, (0,)) == 0.5
    rng = np.random.default_rng(11)
    draws = [sample_next(predictor, [], 1.0, penalty, rng) for _ in range(6000)]
    assert draws.count(1) / len(draws) == pytest.approx(2 / 3, abs=0.03)


def test_sampling_is_seeded():
    predictor = NGramPredictor(vocab_size=50, order=2).fit([[1, 2, 3, 4, 5, 1, 3]])
    a = [sample_next(predictor, [1], 0.4, None, np.random.default_rng(3)) for _ in range(5)]
    b = [sample_next(predictor, [1], 0.4, None, np.random.default_rng(3)) for _ in range(5)]
    assert a == b


def test_zero_temperature_is_argmax():
    predictor = NGramPredictor(vocab_size=6, order=2).fit([[1, 4], [1, 4], [1, 2]])
    assert sample_next(predictor, [1], 0.0, None, np.random.default_rng(0)) == 4
    penalty = PenaltyState()
    penalty.penalize(0, (4,))
    penalty.penalize(0, (4,))
    assert sample_next(predictor, [1], 0.0, penalty, np.random.default_rng(0)) == 2


def test_evict_kv_clears_the_victim(client):
    victim = "You are a helpful assistant"
    client.direct_ttft(victim)
    assert evict_kv(client, 4, 100, SeededRNG(0), verify=(victim, -0.2e-3)) == 4


def test_evict_kv_reports_incomplete_eviction(client):
    victim = "You are a helpful assistant"
    client.direct_ttft(victim)
    with pytest.raises(EvictionIncomplete):
        evict_kv(client, 0, 100, SeededRNG(0), verify=(victim, -0.2e-3))


def test_recovers_secret_without_noise(vocab):
    engine = ServingEngine(latency=LatencyParams(noise_sigma=0.0),
                           kv_config=PrefixCacheConfig(capacity_tokens=256), vocab=vocab)
    attacker = InProcessClient(engine)
    victim = attacker.with_session('victim')
    predictor = train_predictor([encode(' '.join([SYSTEM_TAG] + SECRET), vocab)], len(vocab))
    cfg = small_cfg()
    trigger = make_victim_trigger(victim, ' '.join(SECRET))

    trace = recover_prompt(attacker, trigger, predictor, cfg, vocab, secret=SECRET, seed=1)

    assert trace.correct_tokens == len(SECRET)
    assert trace.false_accepts == 0
    assert trace.accuracy == 1.0
    # one guess per position: 2n vote queries plus 3 per cross-verification sample
    assert trace.total_queries == len(SECRET) * (2 * 3 + 3 * 3)
    assert len(trace.jsonl_records()) == len(SECRET)


def test_rejected_guess_is_penalized_then_replaced(vocab):
    secret = SECRET[:2]
    wrong, right, second = vocab.id_of['d0100'], vocab.id_of[secret[0]], vocab.id_of[secret[1]]
    cfg = small_cfg()
    judge = OracleJudge(secret, p_hit=1.0, p_fp=0.0, cfg=cfg, rng=SeededRNG(0))
    stealer = PromptStealer(judge, scripted([wrong, right, second]), vocab, cfg)
    trace = stealer.recover(0, secret=secret)

    first = trace.positions[0]
    assert [g.decision for g in first.guesses] == [MISS, HIT]
    assert first.recovered == [secret[0]]
    assert trace.correct_tokens == 2


def test_query_budget_stops_the_attack(vocab):
    cfg = small_cfg(max_queries=1)
    judge = OracleJudge(SECRET, p_hit=1.0, p_fp=0.0, cfg=cfg, rng=SeededRNG(0))
    wrong = vocab.id_of['d0100']
    trace = PromptStealer(judge, scripted([wrong] * 10), vocab, cfg).recover(0, secret=SECRET)
    assert trace.total_guesses == 1
    assert trace.tokens_recovered == 0


def test_skip_failed_positions_visits_every_position(vocab):
    cfg = small_cfg(max_guesses_per_position=2)
    judge = OracleJudge(SECRET, p_hit=1.0, p_fp=0.0, cfg=cfg, rng=SeededRNG(0))
    wrong = vocab.id_of['d0100']
    stealer = PromptStealer(judge, scripted([wrong] * 100), vocab, cfg, skip_failed_positions=True)
    trace = stealer.recover(0, secret=SECRET)
    assert len(trace.positions) == len(SECRET)
    assert trace.recovery_rate == 0.0
    assert trace.summary_row()['queries_per_recovered_token'] == 'inf'


def test_psa_config_validation():
    with pytest.raises(InvalidConfig):
        PsaConfig(max_guesses_per_position=0).validate()
    with pytest.raises(InvalidConfig):
        PsaConfig(vote=VoteConfig(n=2, k=3)).validate()
