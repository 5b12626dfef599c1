"""End-to-end acceptance checks for the analysis pipeline.

Each test covers one externally agreed behavior: policy totality, event
sourcing, segmentation voting, proxy arithmetic, the statistics toolbox,
score aggregation, pipeline determinism, and the memory-dynamics signal.
"""

import json
import math
import random
import time

import numpy as np
import pytest
import yaml

from convgain.config import load_config
from convgain.gateway import Gateway
from convgain.memory import (
    Action,
    Claim,
    MemoryConfig,
    MemoryItem,
    Relation,
    classify_relation,
    consolidate_episode,
    decide_action,
    replay_timeline,
    select_target,
)
from convgain.ordinal import fit_ordinal
from convgain.pipeline import run_pipeline
from convgain.proxies import (
    EpisodeVocabState,
    compute_lexical_features,
    fit_episode_tfidf,
)
from convgain.providers import HashEmbedder, ScriptedChatProvider
from convgain.rating import ClaimRating, aggregate_claims, combine_aspects, run_aggregation_grid
from convgain.segmentation import SegmentationConfig, segments_from_breakpoints, vote_breakpoints
from convgain.stats import human_loo_mae, krippendorff_alpha_ordinal, pearson, qwk

from conftest import FIXTURES
from test_proxies import tiny_episode
from test_segmentation import brute_force_votes, random_proposals
from test_stats import longdouble_pearson


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    """The full pipeline run twice from the same config into fresh out dirs."""
    base = tmp_path_factory.mktemp("acceptance")
    data = {
        "episodes": [
            str(FIXTURES / "episodes" / "fora_demo.jsonl"),
            str(FIXTURES / "episodes" / "insq_demo.jsonl"),
        ],
        "seed": 0,
    }
    config_path = base / "config.yaml"
    config_path.write_text(yaml.safe_dump(data))
    started = time.monotonic()
    outs = []
    for name in ("run_a", "run_b"):
        out = base / name
        run_pipeline(load_config(config_path, out_dir=out))
        outs.append(out)
    elapsed = time.monotonic() - started
    return outs[0], outs[1], elapsed


def scripted_nli(ab, ba):
    payload = json.dumps({"a_entails_b": ab, "b_entails_a": ba})
    return Gateway(
        chat_providers={"chat": ScriptedChatProvider([payload])},
        embedder=HashEmbedder(),
    )


def item_from(text, speaker="s1", item_id="mem_0000"):
    return MemoryItem(
        id=item_id,
        speaker_id=speaker,
        target_speaker=speaker,
        claim_text=text,
        turn_id=0,
        embedding=HashEmbedder().embed([text])[0],
        created_turn=0,
        last_updated_turn=0,
    )


def test_consolidation_policy_is_total_with_worked_examples():
    started = time.monotonic()
    config = MemoryConfig()

    # every (speaker match, relation) combination maps to exactly one action
    new = Claim("s1", "s1", "x", 3)
    for speaker in ("s1", "s2"):
        for relation in Relation:
            if relation is Relation.NEUTRAL:
                continue
            update = decide_action(new, (item_from("y", speaker=speaker), relation))
            assert update.action in (Action.ADD, Action.UPDATE, Action.NONE)
    assert decide_action(new, None).action is Action.ADD

    # worked examples, verbatim: same speaker throughout
    cases = [
        # new claim, existing claim, directed verdicts, expected action
        ("I have a cat", "My pet is a cat", ("entailment", "entailment"), Action.NONE),
        ("I have a black cat.", "I have a cat.", ("entailment", "neutral"), Action.UPDATE),
        ("I have a cat.", "I have a black cat.", ("neutral", "entailment"), Action.NONE),
        ("I have a black cat.", "I have a white cat.",
         ("contradiction", "contradiction"), Action.UPDATE),
    ]
    for a_text, b_text, (ab, ba), expected in cases:
        claim = Claim("s1", "s1", a_text, 5)
        existing = item_from(b_text)
        judgment = classify_relation(claim, existing, scripted_nli(ab, ba), config)
        selected = select_target(claim, [(existing, 0.9, judgment.relation)])
        assert decide_action(claim, selected).action is expected, a_text
    # no related memory: plain ADD
    lone = Claim("s1", "s1", "Decision deadline is next Monday.", 5)
    assert decide_action(lone, None).action is Action.ADD
    assert time.monotonic() - started < 1.0


def test_event_sourced_store_replays_byte_identically(fora_episode, gateway):
    store = consolidate_episode(fora_episode, gateway, MemoryConfig())
    replayed = replay_timeline(store.timeline, gateway)
    assert replayed.snapshot_json().encode() == store.snapshot_json().encode()
    adds = sum(1 for u in store.timeline if u.action is Action.ADD)
    updates = sum(1 for u in store.timeline if u.action is Action.UPDATE)
    nones = sum(1 for u in store.timeline if u.action is Action.NONE)
    # ADD grows the store by one; UPDATE and NONE leave the count unchanged
    assert len(store.items) == adds
    assert adds + updates + nones == len(store.timeline)
    assert updates > 0 and nones > 0  # the fixture exercises every action


def test_vote_counting_matches_oracle_on_1000_random_episodes():
    started = time.monotonic()
    rng = random.Random(2024)
    config = SegmentationConfig()
    for _ in range(1000):
        d0 = rng.randint(0, 8)
        d1 = d0 + rng.randint(3, 50)
        proposals = random_proposals(rng, d0, d1)
        profile = vote_breakpoints(proposals, config, (d0, d1))
        assert profile.votes == brute_force_votes(proposals, (d0, d1))
        for idx, votes in profile.votes.items():
            assert profile.normalized_confidence[idx] == pytest.approx(
                votes / len(proposals)
            )
        # any resulting segmentation tiles the discussion exactly
        cuts = sorted(
            idx for idx, conf in profile.normalized_confidence.items() if conf > 0.4
        )
        segments = segments_from_breakpoints(profile, cuts, proposals)
        assert segments[0].interval[0] == d0
        assert segments[-1].interval[1] == d1
        for a, b in zip(segments, segments[1:]):
            assert b.interval[0] == a.interval[1] + 1
    assert time.monotonic() - started < 10.0


def test_lexical_proxies_match_hand_computation():
    episode = tiny_episode()
    model = fit_episode_tfidf(episode)
    idf = math.log(4.0 / 3.0) + 1.0
    state = EpisodeVocabState()
    vecs = [compute_lexical_features(episode, i, model, state) for i in range(3)]
    expected = [
        # (tfidf_sum, tfidf_max, specificity_mean, novel_words, novel_density)
        (3 * idf, idf, idf, 4, 1.0),
        (4 * idf, idf, idf, 2, 0.4),
        (1 * idf, idf, idf, 3, 0.75),
    ]
    for vec, (t_sum, t_max, spec, novel, density) in zip(vecs, expected):
        assert vec.tfidf_sum == pytest.approx(t_sum, abs=1e-9)
        assert vec.tfidf_max == pytest.approx(t_max, abs=1e-9)
        assert vec.specificity_mean_idf == pytest.approx(spec, abs=1e-9)
        assert vec.novel_word_count == novel
        assert vec.novel_word_density == pytest.approx(density, abs=1e-9)


def test_statistics_toolbox_oracles():
    started = time.monotonic()

    rng = random.Random(99)
    x = [rng.uniform(-5, 5) for _ in range(400)]
    y = [0.7 * v + rng.gauss(0, 1) for v in x]
    assert pearson(x, y) == pytest.approx(longdouble_pearson(x, y), abs=1e-12)

    perfect = {"a": {"i1": 1, "i2": 4, "i3": 2}, "b": {"i1": 1, "i2": 4, "i3": 2}}
    assert krippendorff_alpha_ordinal(perfect) == 1.0
    sim = {
        "a": {f"i{i}": rng.randint(1, 4) for i in range(10_000)},
        "b": {f"i{i}": rng.randint(1, 4) for i in range(10_000)},
    }
    assert abs(krippendorff_alpha_ordinal(sim)) < 0.05

    assert qwk([1, 2, 3, 4], [1, 2, 3, 4]) == pytest.approx(1.0)
    assert qwk([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert qwk([1, 1, 2, 2], [1, 2, 2, 2]) == pytest.approx(0.5)

    per, mean, _ = human_loo_mae(
        {"a": {"i1": 1, "i2": 3}, "b": {"i1": 3, "i2": 3}}
    )
    assert per == {"a": pytest.approx(1.0), "b": pytest.approx(1.0)}
    assert mean == pytest.approx(1.0)

    labels = [1] * 15 + [2] * 25 + [3] * 35 + [4] * 25
    fit = fit_ordinal(labels, {}, "intercept")
    n = len(labels)
    loglik = sum(labels.count(c) * math.log(labels.count(c) / n) for c in (1, 2, 3, 4))
    assert fit.aic == pytest.approx(6 - 2 * loglik, abs=1e-6)

    beta = 1.5
    sim_rng = np.random.default_rng(314)
    xs = sim_rng.standard_normal(5000)
    sim_labels = []
    for xi in xs:
        u = sim_rng.random()
        cum = [1.0 / (1.0 + math.exp(-(t - beta * xi))) for t in (-1.2, 0.3, 1.6)]
        sim_labels.append(1 + sum(u > c for c in cum))
    slope = fit_ordinal(sim_labels, {"x": list(xs)}, "slope")
    assert slope.converged and slope.gradient_norm < 1e-8
    assert slope.coefficients["x"] == pytest.approx(1.5, abs=0.15)

    assert time.monotonic() - started < 60.0


def test_aggregation_grid_recovers_generating_rule():
    rng = random.Random(17)
    ratings = {}
    labels = {}
    for idx in range(8):
        rows = [
            ClaimRating(
                f"{idx}:{j}",
                {
                    "informativeness": rng.randint(1, 4),
                    "novelty": rng.randint(1, 4),
                    "relevance": rng.randint(1, 4),
                    "implication_scope": rng.randint(1, 4),
                },
            )
            for j in range(rng.randint(4, 6))
        ]
        ratings[idx] = rows
        agg = {
            aspect: aggregate_claims([r.scores[aspect] for r in rows], "top2_mean")
            for aspect in ("novelty", "relevance", "implication_scope")
        }
        labels[idx] = min(agg.values())
    result = run_aggregation_grid(ratings, labels)
    winning = result.mae[("top2_mean", "min")]
    assert winning == pytest.approx(0.0, abs=1e-12)
    for cell, value in result.mae.items():
        if cell != ("top2_mean", "min"):
            assert value > 1e-9, cell  # the generating rule is the strict minimum

    for _ in range(1000):
        triple = [rng.uniform(1, 4) for _ in range(3)]
        low = combine_aspects(*triple, "min")
        mid = combine_aspects(*triple, "mean")
        high = combine_aspects(*triple, "max")
        assert low <= mid + 1e-12 <= high + 2e-12


def test_pipeline_is_deterministic_end_to_end(pipeline_runs):
    out_a, out_b, elapsed = pipeline_runs
    assert elapsed < 120.0
    compared = 0
    for path_a in sorted(out_a.rglob("*")):
        rel = path_a.relative_to(out_a)
        if not path_a.is_file():
            continue
        # cache entries carry latency; the manifest carries wall times
        if rel.parts[0] == "cache" or rel.name == "manifest.json":
            continue
        path_b = out_b / rel
        assert path_b.is_file(), rel
        assert path_a.read_bytes() == path_b.read_bytes(), rel
        compared += 1
    assert compared > 20


def test_memory_delta_outcorrelates_entity_count(pipeline_runs):
    out_a, _, _ = pipeline_runs
    stats = json.loads((out_a / "stats" / "stats.json").read_text())
    correlations = stats["correlations"]
    assert correlations["mem_delta"]["abs_r"] > correlations["entity_count"]["abs_r"]
