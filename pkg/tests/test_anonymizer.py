from hypothesis import given
from hypothesis import strategies as st

from cacheleak.anonymizer import (SENTENCE_TEMPLATES, Anonymizer, RestoreMap, anonymize, detect_pii,
                                  pii_sentences, pii_values, restore)
from cacheleak.rng import SeededRNG


def test_detects_each_kind():
    text = "Alice J. W. Brown wrote from 10.0.0.7 to bob@example.org, call 555-123-4567, card 4111 1111 1111 1111"
    kinds = [s.kind for s in detect_pii(text)]
    assert kinds == ['name', 'ip_address', 'email', 'phone', 'credit_card']


def test_repeated_value_reuses_identifier():
    text, mapping = anonymize("Alice J. W. Brown met Bruno K. X. Silva and Alice J. W. Brown again")
    assert text == "⟨NAME_1⟩ met ⟨NAME_2⟩ and ⟨NAME_1⟩ again"
    assert mapping.mapping == {'⟨NAME_1⟩': 'Alice J. W. Brown', '⟨NAME_2⟩': 'Bruno K. X. Silva'}


def test_text_without_pii_is_unchanged():
    text, mapping = anonymize("explain why the sky looks blue")
    assert text == "explain why the sky looks blue"
    assert len(mapping) == 0


def test_unknown_identifiers_are_left_and_reported():
    result = restore("hello ⟨NAME_1⟩ and ⟨EMAIL_3⟩", RestoreMap({'⟨NAME_1⟩': 'Grace Q. H. Okafor'}))
    assert result.text == "hello Grace Q. H. Okafor and ⟨EMAIL_3⟩"
    assert result.unknown_identifiers == ['⟨EMAIL_3⟩']


@given(st.integers(min_value=0, max_value=2 ** 32))
def test_generated_sentences_round_trip_exactly(seed):
    for sentence in pii_sentences(SeededRNG(seed), 5):
        text, mapping = anonymize(sentence)
        assert restore(text, mapping).text == sentence


def test_same_template_different_values_anonymize_alike():
    rng = SeededRNG(4)
    template = SENTENCE_TEMPLATES[0]
    a = pii_values(rng)
    b = pii_values(rng)
    b['condition'] = a['condition']
    assert anonymize(template.format(**a))[0] == anonymize(template.format(**b))[0]


def test_custom_gazetteer():
    anonymizer = Anonymizer(gazetteer=['Zed'])
    text, _ = anonymizer.anonymize("ask Zed and Alice")
    assert text == "ask ⟨NAME_1⟩ and Alice"
