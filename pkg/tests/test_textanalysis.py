from hypothesis import given
from hypothesis import strategies as st

from convgain.textanalysis import (
    RuleBasedAnalyzer,
    content_lemmas,
    extract_entities,
    lemmatize,
    split_sentences,
    tokenize,
)


def test_tokenize_keeps_punctuation_separate():
    assert tokenize("Don't stop, now!") == ["Don't", "stop", ",", "now", "!"]


def test_lemmatize_suffixes():
    assert lemmatize("buses") == "buse"
    assert lemmatize("lanes") == "lane"
    assert lemmatize("policies") == "policy"
    assert lemmatize("running") == "runn"
    assert lemmatize("is") == "is"  # stem would be too short


def test_content_lemmas_drop_stopwords_and_punctuation():
    assert content_lemmas("The buses are not on time!") == ["buse", "time"]


def test_split_sentences():
    text = "First point. Second point! Third?"
    assert split_sentences(text) == ["First point.", "Second point!", "Third?"]


def test_extract_entities_skips_sentence_initial_loner():
    assert extract_entities("Transit serves Oakdale well.") == ["oakdale"]
    # a lone sentence-initial capitalized word is ordinary casing
    assert extract_entities("Transit serves the city well.") == []
    assert extract_entities("I crossed Harrison Avenue today.") == ["harrison avenue"]


def test_extract_entities_multiset():
    assert extract_entities("We love Oakdale. We defend Oakdale.") == [
        "oakdale",
        "oakdale",
    ]


@given(st.text(max_size=200))
def test_analyzer_deterministic(text):
    analyzer = RuleBasedAnalyzer()
    assert analyzer.analyze(text) == analyzer.analyze(text)


@given(st.text(max_size=200))
def test_content_lemmas_subset_of_tokens(text):
    lemma_count = len(content_lemmas(text))
    assert lemma_count <= len(tokenize(text))
