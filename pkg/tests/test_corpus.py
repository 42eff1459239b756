import pytest
from hypothesis import given
from hypothesis import strategies as st

from cacheleak import seed_data
from cacheleak.corpus import (RARE, SYSTEM_TAG, CorpusConfig, MarkovChain, PromptCorpus, SlotTemplate, agenda_bindings,
                              agenda_family, build_corpus, decode, encode, encode_lenient, identifier_token,
                              instantiate, make_document, split_unigram_distance)
from cacheleak.errors import InvalidConfig, MissingSlot, UnknownToken
from cacheleak.rng import SeededRNG

SMALL = CorpusConfig(n_prompts=20, victim_fraction=0.2, min_length=5, max_length=30)


def test_vocab_is_stable_and_reserves_tags(vocab):
    from cacheleak.corpus import build_vocab

    assert build_vocab().tokens == vocab.tokens
    assert vocab.tokens[1] == RARE
    assert SYSTEM_TAG in vocab
    assert identifier_token('name', 1) in vocab


def test_encode_rejects_unknown_words(vocab):
    with pytest.raises(UnknownToken):
        encode("You are zzzz-not-a-word", vocab)


def test_encode_lenient_maps_unknown_to_unk(vocab):
    ids = encode_lenient("You zzzz", vocab)
    assert ids[1] == vocab.unk_id
    assert ids[0] == vocab.id_of['You']


@given(st.lists(st.integers(min_value=0, max_value=4000), max_size=40))
def test_decode_then_encode_restores_ids(vocab, ids):
    ids = [i % len(vocab) for i in ids]
    assert encode(decode(ids, vocab), vocab) == ids


def test_corpus_is_deterministic():
    a = build_corpus(SMALL, seed=3)
    b = build_corpus(SMALL, seed=3)
    assert a.system_prompts == b.system_prompts
    assert a.victim_split == b.victim_split


def test_corpus_split_is_disjoint_and_covering():
    corpus = build_corpus(SMALL, seed=1)
    assert len(corpus.victim_split) == 4
    assert not set(corpus.victim_split) & set(corpus.attacker_split)
    assert sorted(corpus.victim_split + corpus.attacker_split) == list(range(20))


def test_corpus_prompts_are_distinct_and_in_range():
    corpus = build_corpus(SMALL, seed=2)
    texts = [corpus.text(i) for i in range(20)]
    assert len(set(texts)) == 20
    assert all(5 <= len(p) <= 30 for p in corpus.system_prompts)
    assert 0.0 <= split_unigram_distance(corpus) <= 1.0


def test_corpus_json_round_trip():
    corpus = build_corpus(SMALL, seed=4)
    restored = PromptCorpus.from_json(corpus.to_json())
    assert restored.system_prompts == corpus.system_prompts
    assert restored.vocab.tokens == corpus.vocab.tokens


def test_corpus_config_rejects_empty_split():
    with pytest.raises(InvalidConfig):
        CorpusConfig(n_prompts=20, victim_fraction=0.01).validate()
    with pytest.raises(InvalidConfig):
        CorpusConfig(min_length=10, max_length=5).validate()


def test_every_body_slot_offers_four_words():
    for body in seed_data.PROMPT_BODIES:
        for slot in body:
            assert len(set(slot.split())) == 4


def test_chain_branches_at_least_four_ways():
    chain = MarkovChain(seed_data.PREAMBLES, seed_data.PROMPT_BODIES)
    assert all(len(set(successors)) >= 4 for successors in chain.table.values())


@given(st.integers(min_value=0, max_value=2**32))
def test_chain_runs_past_the_last_body(seed):
    chain = MarkovChain(seed_data.PREAMBLES, seed_data.PROMPT_BODIES)
    slot_words = {w for body in seed_data.PROMPT_BODIES for slot in body for w in slot.split()}
    words = chain.generate(SeededRNG(seed), 200)
    assert len(words) == 200
    assert set(words[5:]) <= slot_words


def test_chain_rejects_one_word_preamble():
    with pytest.raises(InvalidConfig):
        MarkovChain(["Hello"], seed_data.PROMPT_BODIES)


def test_instantiate_fills_slots_verbatim():
    template = SlotTemplate.parse("hello [name] about [condition]")
    assert template.slots == ('name', 'condition')
    text = instantiate(template, {'name': 'Ada Lovelace', 'condition': 'flu'})
    assert text == "hello Ada Lovelace about flu"


def test_instantiate_missing_slot():
    with pytest.raises(MissingSlot):
        instantiate(SlotTemplate.parse("hello [name]"), {})


def test_duplicate_slot_is_rejected():
    with pytest.raises(InvalidConfig):
        SlotTemplate.parse("[name] and [name]")


def test_agenda_family_enumerates_every_swap():
    variants = agenda_family().variants()
    assert len(variants) == 2 ** len(seed_data.AGENDA_SWAPS)
    assert variants[0].text == seed_data.AGENDA_TEMPLATE
    assert len({v.text for v in variants}) == len(variants)
    filled = instantiate(variants[-1], agenda_bindings(seed_data.NAMES[0], seed_data.CONDITIONS[0]))
    assert seed_data.NAMES[0] in filled


def test_make_document_draws_from_document_pool(vocab):
    doc = make_document(SeededRNG(5), 50)
    assert len(doc) == 50
    assert all(w.startswith('d') and w in vocab for w in doc)
