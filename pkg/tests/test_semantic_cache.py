import numpy as np
import pytest

from cacheleak.errors import InvalidConfig
from cacheleak.semantic_cache import SemanticCache, SemanticCacheConfig, cosine, embed


def make_cache(**kwargs):
    return SemanticCache(SemanticCacheConfig(enabled=True, **kwargs))


def test_embedding_is_deterministic_and_normalized():
    a = embed("compose agenda for Ada with flu")
    b = embed("compose agenda for Ada with flu")
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert not embed("").any()


def test_embedding_ignores_case():
    assert np.array_equal(embed("Hello World"), embed("hello world"))


def test_cosine_of_zero_vector_is_zero():
    assert cosine(np.zeros(4), np.ones(4)) == 0.0


def test_exact_repeat_hits():
    cache = make_cache()
    cache.insert("what is the weather in rome", "sunny")
    found = cache.lookup("what is the weather in rome")
    assert found is not None
    assert found[0] == "sunny"
    assert found[1] == pytest.approx(1.0)


def test_unrelated_request_misses():
    cache = make_cache()
    cache.insert("what is the weather in rome", "sunny")
    assert cache.lookup("recommend a board game for a family of four") is None


def test_lookup_does_not_change_state():
    cache = make_cache()
    cache.insert("a b c", "x")
    before = cache.to_dict()
    cache.lookup("a b c")
    cache.lookup("d e f")
    assert cache.to_dict() == before


def test_fifo_eviction():
    cache = make_cache(capacity_entries=2)
    cache.insert("first request text", "1")
    cache.insert("second request text", "2")
    cache.insert("third request text", "3")
    assert len(cache) == 2
    assert [e.request_text for e in cache.entries()] == ["second request text", "third request text"]


def test_flood_clears_earlier_entries():
    cache = make_cache(capacity_entries=50)
    victims = [f"victim question number {i}" for i in range(5)]
    for text in victims:
        cache.insert(text, "answer")
    for i in range(50):
        cache.insert(f"f{i:03d} filler", "")
    assert all(e.request_text not in victims for e in cache.entries())


def test_flush():
    cache = make_cache()
    cache.insert("a b c", "x")
    cache.flush()
    assert len(cache) == 0
    assert cache.lookup("a b c") is None


def test_invalid_threshold():
    with pytest.raises(InvalidConfig):
        SemanticCacheConfig(threshold=1.0).validate()
