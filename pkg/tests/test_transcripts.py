import json

import pytest

from convgain.transcripts import (
    Episode,
    Segment,
    SkipReason,
    TranscriptError,
    apply_fragment_rule,
    apply_skip_rules,
    descriptive_stats,
    gini,
    load_episode,
    word_count,
    write_episode,
)

from conftest import FIXTURES


def test_word_count_ignores_punctuation_tokens():
    assert word_count("I want to-.") == 3
    assert word_count("Hello, world!") == 2
    assert word_count("...") == 0


def test_load_episode_round_trip(tmp_path, fora_episode):
    path = tmp_path / "copy.jsonl"
    write_episode(fora_episode, path)
    again = load_episode(path)
    assert again == fora_episode


def test_load_episode_reports_malformed_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x", "topic": "t"}\nnot json\n')
    with pytest.raises(TranscriptError, match="bad.jsonl:2"):
        load_episode(path)


def test_load_episode_rejects_duplicate_and_gap(tmp_path):
    header = {"id": "x", "topic": "t"}
    row = {
        "index": 0, "speaker_id": "a", "role": "participant",
        "text": "Hello there everyone today.", "phase": "discussion",
    }
    dup = dict(row)
    path = tmp_path / "dup.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in (header, row, dup)))
    with pytest.raises(TranscriptError, match="duplicate index"):
        load_episode(path)
    gap = dict(row, index=2)
    path.write_text("\n".join(json.dumps(r) for r in (header, row, gap)))
    with pytest.raises(TranscriptError, match="non-contiguous"):
        load_episode(path)


def test_load_episode_rejects_role_change(tmp_path):
    header = {"id": "x", "topic": "t"}
    a = {"index": 0, "speaker_id": "a", "role": "participant",
         "text": "Opening statement with plenty of words.", "phase": "discussion"}
    b = {"index": 1, "speaker_id": "a", "role": "moderator",
         "text": "Now I moderate this conversation instead.", "phase": "discussion"}
    path = tmp_path / "role.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in (header, a, b)))
    with pytest.raises(TranscriptError, match="changes role"):
        load_episode(path)


def test_skip_rules(fora_episode):
    by_index = {u.index: u for u in fora_episode.utterances}
    # moderator and audience turns are excluded from analysis
    assert by_index[0].skipped and by_index[0].skip_reason is SkipReason.MODERATOR
    assert by_index[14].skipped and by_index[14].skip_reason is SkipReason.MODERATOR
    # "I want to-." has three words
    assert by_index[7].skipped and by_index[7].skip_reason is SkipReason.TOO_SHORT
    assert not by_index[5].skipped


def test_skip_rules_idempotent_and_unskips(fora_episode):
    once = apply_skip_rules(fora_episode)
    twice = apply_skip_rules(once)
    assert once == twice


def test_fragment_rule_only_adds_skips(insq_episode):
    with_fragments = apply_fragment_rule(insq_episode)
    for before, after in zip(insq_episode.utterances, with_fragments.utterances):
        if before.skipped:
            assert after.skipped
    # "Okay." is a single word: too_short already; a 5-word line without
    # terminal punctuation is a fragment only in selection mode
    assert not insq_episode.utterances[10].skipped
    assert not with_fragments.utterances[10].skipped


def test_gini_extremes():
    assert gini([3.0, 3.0, 3.0]) == 0.0
    # one speaker holds everything among n speakers: (n-1)/n
    assert gini([0.0, 0.0, 12.0]) == pytest.approx(2.0 / 3.0)


def test_descriptive_stats(fora_episode):
    segments = [Segment(0, (4, 10), "a", 1.0), Segment(1, (11, 18), "b", 0.8)]
    report = descriptive_stats(fora_episode, segments)
    assert report.utterance_count == 21
    assert report.segment_utterance_counts == (7, 8)
    assert report.speaker_count == 5
    assert 0.0 <= report.speaker_gini <= 1.0
    assert 0.0 < report.skipped_token_pct < 100.0
