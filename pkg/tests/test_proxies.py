import math

import pytest

from convgain.memory import Action, Claim, MemoryUpdate, Relation
from convgain.proxies import (
    EpisodeVocabState,
    FEATURE_COLUMNS,
    ProxyFeatureVector,
    compute_lexical_features,
    compute_memory_dynamics,
    compute_surprisal_features,
    fit_episode_tfidf,
    normalize_surprisal,
    read_feature_csv,
    write_feature_csv,
)
from convgain.textanalysis import content_lemmas
from convgain.transcripts import Episode, Role, Speaker, Utterance


def tiny_episode():
    texts = [
        "Transit fares rose downtown.",
        "Transit fares fund downtown buses.",
        "Libraries fund reading programs.",
    ]
    utterances = tuple(
        Utterance(i, "s1", text, 4, "discussion") for i, text in enumerate(texts)
    )
    speakers = {"s1": Speaker("s1", "Sam", Role.PARTICIPANT)}
    return Episode("tiny", "funding", "demo", speakers, utterances)


def test_tiny_episode_content_lemmas_are_as_designed():
    episode = tiny_episode()
    expected = [
        ["transit", "fare", "rose", "downtown"],
        ["transit", "fare", "fund", "downtown", "buse"],
        ["library", "fund", "read", "program"],
    ]
    for utt, lemmas in zip(episode.utterances, expected):
        assert content_lemmas(utt.text) == lemmas


def test_three_utterance_lexical_oracle():
    """Hand-computed TF-IDF / specificity / novelty on a three-document episode.

    Retained vocabulary (df >= 2 of 3 docs): transit, fare, downtown, fund,
    each with idf = ln(4/3) + 1. Singleton terms are pruned.
    """
    episode = tiny_episode()
    model = fit_episode_tfidf(episode)
    idf = math.log(4.0 / 3.0) + 1.0
    assert set(model.idf) == {"transit", "fare", "downtown", "fund"}
    for value in model.idf.values():
        assert value == pytest.approx(idf, abs=1e-9)

    state = EpisodeVocabState()
    vecs = [compute_lexical_features(episode, i, model, state) for i in range(3)]

    # utterance 0: three retained terms, one occurrence each
    assert vecs[0].n_tok == 5
    assert vecs[0].n_cont == 4
    assert vecs[0].tfidf_sum == pytest.approx(3 * idf, abs=1e-9)
    assert vecs[0].tfidf_max == pytest.approx(idf, abs=1e-9)
    assert vecs[0].tfidf_mean == pytest.approx(idf, abs=1e-9)
    assert vecs[0].specificity_mean_idf == pytest.approx(idf, abs=1e-9)
    assert vecs[0].specificity_median_idf == pytest.approx(idf, abs=1e-9)
    assert vecs[0].novel_word_count == 4
    assert vecs[0].novel_word_density == pytest.approx(1.0, abs=1e-9)

    # utterance 1: four retained terms; novel lemmas are fund and buse
    assert vecs[1].tfidf_sum == pytest.approx(4 * idf, abs=1e-9)
    assert vecs[1].novel_word_count == 2
    assert vecs[1].novel_word_density == pytest.approx(2.0 / 5.0, abs=1e-9)

    # utterance 2: only fund is retained; three novel lemmas
    assert vecs[2].tfidf_sum == pytest.approx(idf, abs=1e-9)
    assert vecs[2].tfidf_max == pytest.approx(idf, abs=1e-9)
    assert vecs[2].novel_word_count == 3
    assert vecs[2].novel_word_density == pytest.approx(3.0 / 4.0, abs=1e-9)

    for vec in vecs:
        assert vec.entity_count == 0
        assert vec.novel_entity_ratio == 0.0


def test_tfidf_empty_model_when_all_terms_pruned():
    utterances = tuple(
        Utterance(i, "s1", text, 2, "discussion")
        for i, text in enumerate(["Alpha beta.", "Gamma delta."])
    )
    episode = Episode(
        "x", "t", "demo", {"s1": Speaker("s1", "S", Role.PARTICIPANT)}, utterances
    )
    model = fit_episode_tfidf(episode)
    assert model.idf == {}
    assert model.doc_weights == ({}, {})
    state = EpisodeVocabState()
    vec = compute_lexical_features(episode, 0, model, state)
    assert vec.tfidf_sum == 0.0 and vec.specificity_mean_idf == 0.0


def test_tfidf_requires_two_utterances():
    episode = tiny_episode()
    single = Episode(
        "x", "t", "demo", episode.speakers, episode.utterances[:1]
    )
    with pytest.raises(ValueError):
        fit_episode_tfidf(single)


def test_entity_novelty_counts_repeats():
    texts = ["We toured Oakdale. We praised Oakdale.", "We thanked Oakdale warmly."]
    utterances = tuple(
        Utterance(i, "s1", t, 5, "discussion") for i, t in enumerate(texts)
    )
    episode = Episode(
        "x", "t", "demo", {"s1": Speaker("s1", "S", Role.PARTICIPANT)}, utterances
    )
    model = fit_episode_tfidf(episode)
    state = EpisodeVocabState()
    first = compute_lexical_features(episode, 0, model, state)
    assert first.entity_count == 2
    assert first.novel_entity_count == 2  # both mentions of a first-seen entity
    assert first.novel_entity_ratio == 1.0
    second = compute_lexical_features(episode, 1, model, state)
    assert second.entity_count == 1
    assert second.novel_entity_count == 0
    assert second.novel_entity_ratio == 0.0


def test_surprisal_identities():
    vec = ProxyFeatureVector(utterance_index=0)
    trace = [(f"t{i}", lp) for i, lp in enumerate([-1.0, -2.0, -3.0, -4.0, -5.0])]
    compute_surprisal_features(vec, trace)
    assert vec.sent_avg_h == pytest.approx(3.0, abs=1e-9)
    assert vec.sum_h == pytest.approx(15.0, abs=1e-9)
    assert vec.sum_h == pytest.approx(len(trace) * vec.sent_avg_h, abs=1e-9)
    # quartile size ceil(5/4)=2 over the largest logprobs
    assert vec.top_quartile_avg_logprob == pytest.approx(-1.5, abs=1e-9)


def test_surprisal_null_trace_stays_null():
    vec = ProxyFeatureVector(utterance_index=0)
    compute_surprisal_features(vec, None)
    assert vec.sent_avg_h is None and vec.sum_h is None
    assert vec.top_quartile_avg_logprob is None


def test_normalize_surprisal_same_length_batches():
    a = ProxyFeatureVector(utterance_index=0, sent_avg_h=2.0)
    b = ProxyFeatureVector(utterance_index=1, sent_avg_h=4.0)
    c = ProxyFeatureVector(utterance_index=2, sent_avg_h=5.0)
    d = ProxyFeatureVector(utterance_index=3)  # no trace
    normalize_surprisal([a, b, c, d], {0: 7, 1: 7, 2: 9, 3: 9})
    assert a.norm_sent_avg_h == pytest.approx(2.0 / 3.0)
    assert b.norm_sent_avg_h == pytest.approx(4.0 / 3.0)
    assert c.norm_sent_avg_h == pytest.approx(1.0)  # singleton bucket
    assert d.norm_sent_avg_h is None


def _update(action):
    return MemoryUpdate(
        action=action,
        logical_relation=Relation.NEUTRAL,
        source=Claim("s1", "s1", "x", 0),
    )


def test_memory_dynamics_gating_and_boundary():
    updates = [_update(Action.ADD), _update(Action.NONE), _update(Action.UPDATE)]
    vec = compute_memory_dynamics(
        ProxyFeatureVector(utterance_index=0),
        updates,
        {"info": 3.0, "novo": 2.0, "relv": 2.5, "imsc": 1.0},
    )
    assert vec.claim_count == 3
    assert vec.mem_delta == 2
    # strict > 2: a prediction of exactly 2 closes the gate
    assert vec.mem_delta_gated == {"info": 2, "novo": 0, "relv": 2, "imsc": 0}
    assert vec.mem_delta_triad == 0
    open_all = compute_memory_dynamics(
        ProxyFeatureVector(utterance_index=1), updates,
        {"info": 4.0, "novo": 3.0, "relv": 3.0, "imsc": 2.1},
    )
    assert open_all.mem_delta_triad == 2


def test_memory_dynamics_null_without_predictions():
    vec = compute_memory_dynamics(
        ProxyFeatureVector(utterance_index=0), [_update(Action.ADD)], None
    )
    assert vec.claim_count == 1 and vec.mem_delta == 1
    assert all(v is None for v in vec.mem_delta_gated.values())
    assert vec.mem_delta_triad is None


def test_feature_csv_round_trip(tmp_path):
    a = ProxyFeatureVector(utterance_index=0, n_tok=5, tfidf_sum=1.25)
    b = ProxyFeatureVector(utterance_index=1, sent_avg_h=3.5, sum_h=7.0)
    path = tmp_path / "features.csv"
    write_feature_csv(path, [b, a])  # order normalized on write
    rows = read_feature_csv(path)
    assert [r["utterance_index"] for r in rows] == [0.0, 1.0]
    assert rows[0]["tfidf_sum"] == 1.25
    assert rows[0]["sent_avg_h"] is None
    assert rows[1]["sum_h"] == 7.0
    header = path.read_text().splitlines()[0]
    assert header == ",".join(("utterance_index",) + FEATURE_COLUMNS)


def test_lexical_invariants_on_fixture(fora_episode):
    model = fit_episode_tfidf(fora_episode)
    state = EpisodeVocabState()
    for i in range(len(fora_episode.utterances)):
        vec = compute_lexical_features(fora_episode, i, model, state)
        assert 0 <= vec.novel_word_count <= vec.n_cont
        assert 0 <= vec.novel_entity_count <= vec.entity_count
        assert 0.0 <= vec.novel_entity_ratio <= 1.0
        assert vec.tfidf_max <= vec.tfidf_sum + 1e-12
