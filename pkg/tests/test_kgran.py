import numpy as np
import pytest

from cacheleak.corpus import CorpusConfig, Vocab, build_corpus
from cacheleak.errors import InvalidConfig
from cacheleak.kgran import (KSweepConfig, default_samples, oracle_rates, predict_next_k, run_ksweep,
                             tuple_probability, vote_for)
from cacheleak.latency import LatencyParams
from cacheleak.prefix_cache import PrefixCacheConfig
from cacheleak.psa import (JudgeResult, NGramPredictor, PenaltyState, PromptStealer, PsaConfig, sample_next,
                           train_predictor)


@pytest.fixture
def toy_predictor():
    return NGramPredictor(vocab_size=8, order=3).fit([[1, 2, 3, 4, 5], [1, 2, 6, 7], [1, 2, 3, 4, 5]])


def test_k1_matches_single_token_sampling(toy_predictor):
    a = predict_next_k(toy_predictor, [1], 1, 0.7, None, np.random.default_rng(5))
    b = sample_next(toy_predictor, [1], 0.7, None, np.random.default_rng(5))
    assert a == (b,)


def test_greedy_block_follows_the_likeliest_chain(toy_predictor):
    assert predict_next_k(toy_predictor, [1], 3, 0.0, None, np.random.default_rng(0)) == (2, 3, 4)


def test_greedy_block_respects_tuple_penalty(toy_predictor):
    penalty = PenaltyState()
    for _ in range(4):
        penalty.penalize(0, (2, 3))
    assert predict_next_k(toy_predictor, [1], 2, 0.0, penalty, np.random.default_rng(0)) != (2, 3)


def test_sampled_block_has_k_tokens(toy_predictor):
    block = predict_next_k(toy_predictor, [1], 4, 0.5, PenaltyState(), np.random.default_rng(1))
    assert len(block) == 4
    assert all(0 <= t < 8 for t in block)


def test_block_size_must_be_positive(toy_predictor):
    with pytest.raises(InvalidConfig):
        predict_next_k(toy_predictor, [1], 0, 0.5, None, np.random.default_rng(0))


def test_tuple_probability_is_a_chained_product(toy_predictor):
    p = tuple_probability(toy_predictor, [1], [2, 3])
    expected = toy_predictor.probability([1], 2) * toy_predictor.probability([1, 2], 3)
    assert p == pytest.approx(expected)


def test_vote_shrinks_with_k():
    assert [default_samples(k) for k in (1, 2, 3, 4, 5, 8)] == [10, 8, 6, 4, 2, 2]
    cfg = vote_for(2, 8, gap=0.45e-3)
    assert cfg.k == 4
    assert cfg.theta == pytest.approx(-0.45e-3)


def test_oracle_rates_widen_with_k():
    gap, sigma = 0.45e-3, 0.13e-3
    rates = [oracle_rates(k, gap, sigma) for k in (1, 2, 3)]
    assert rates[0][0] < rates[1][0] < rates[2][0]
    assert rates[0][1] > rates[1][1] > rates[2][1]
    assert rates[0][0] + rates[0][1] == pytest.approx(1.0)
    assert oracle_rates(1, gap, 0.0) == (1.0, 0.0)


def test_sweep_config_validation():
    with pytest.raises(InvalidConfig):
        KSweepConfig(k_values=[]).validate()
    with pytest.raises(InvalidConfig):
        KSweepConfig(k_values=[1, 2], vote_n=[4]).validate()
    assert KSweepConfig(k_values=[1, 2], vote_n=[6, 3]).samples_for(2) == 3


def sweep_inputs():
    corpus = build_corpus(CorpusConfig(n_prompts=40, victim_fraction=0.1, min_length=8, max_length=16), seed=0)
    system_id = corpus.vocab.id_of['<|system|>']
    predictor = train_predictor([[system_id] + p for p in corpus.attacker_prompts()], len(corpus.vocab))
    psa_cfg = PsaConfig(eviction_count=3, eviction_tokens=100)
    return corpus, predictor, psa_cfg


def test_simulated_sweep_is_deterministic_and_scores_every_k():
    corpus, predictor, psa_cfg = sweep_inputs()
    cfg = KSweepConfig(k_values=[1, 2], victims=2, max_guesses_per_position=10)
    latency = LatencyParams(noise_sigma=0.13e-3)
    rows = run_ksweep(cfg, corpus, predictor, psa_cfg, latency, PrefixCacheConfig(), seed=3)
    again = run_ksweep(cfg, corpus, predictor, psa_cfg, latency, PrefixCacheConfig(), seed=3)
    assert [r.to_row() for r in rows] == [r.to_row() for r in again]
    assert [r.k for r in rows] == [1, 2]
    for row in rows:
        assert 0.0 <= row.recovery_rate <= 1.0
        assert row.queries > 0


def test_live_sweep_without_noise_commits_only_true_blocks():
    corpus, predictor, psa_cfg = sweep_inputs()
    cfg = KSweepConfig(k_values=[2], victims=1, max_guesses_per_position=3, simulate=False)
    rows = run_ksweep(cfg, corpus, predictor, psa_cfg, LatencyParams(noise_sigma=0.0),
                      PrefixCacheConfig(capacity_tokens=256), seed=1)
    trace = rows[0].traces[0]
    assert trace.false_accepts == 0
    # the system tag fills the first slot, so the first block is one token short
    recovered = [p for p in trace.positions if p.recovered is not None]
    assert recovered and recovered[0].position == 0 and len(recovered[0].recovered) == 1
    assert all(len(p.recovered) == 2 - (p.position + 1) % 2 for p in recovered)


class AlwaysMiss:
    def judge(self, known, chunk, position):
        return JudgeResult(hit=False, hits=0, queries=1, references=0, fillers=0)


def test_guess_budget_scales_with_block_size():
    vocab = Vocab.from_tokens(['<|system|>', 'alpha', 'beta', 'gamma', 'delta'])
    cfg = PsaConfig(max_guesses_per_position=5)
    stealer = PromptStealer(AlwaysMiss(), lambda ctx, size, penalty, pos: tuple([vocab.id_of['alpha']] * size),
                            vocab, cfg, granularity=3, skip_failed_positions=True)
    trace = stealer.recover(0, secret=['alpha', 'beta', 'gamma', 'delta', 'alpha'])
    assert [len(p.guesses) for p in trace.positions] == [10, 15]


def test_sparse_sampler_stays_on_seen_successors_when_cold():
    predictor = NGramPredictor(vocab_size=50, order=3).fit([[1, 2, 3], [1, 2, 4], [1, 2, 4]])
    rng = np.random.default_rng(0)
    draws = [predictor.sample([1, 2], 0.1, rng) for _ in range(200)]
    assert set(draws) <= {3, 4}
    assert draws.count(4) > draws.count(3)


def test_sparse_sampler_reaches_unseen_tokens_at_high_temperature():
    predictor = NGramPredictor(vocab_size=50, order=3).fit([[1, 2, 3]])
    rng = np.random.default_rng(0)
    draws = {predictor.sample([1, 2], 50.0, rng) for _ in range(200)}
    assert len(draws) > 10


def test_sampler_is_uniform_for_unknown_context():
    predictor = NGramPredictor(vocab_size=6, order=3).fit([[1, 2, 3]])
    rng = np.random.default_rng(2)
    draws = {predictor.sample([5], 0.5, rng) for _ in range(300)}
    assert draws == set(range(6))
