"""Sub-topic segmentation: repeated proposals, weighted voting, peak selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .gateway import Gateway, GatewayResponseError, PromptRequest
from .transcripts import Episode, Segment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentationConfig:
    runs: int = 5
    neighbor_weight: float = 0.5
    peak_threshold: float = 0.4  # of normalized confidence; unstated upstream
    min_len: int = 1
    max_len: int = 20
    target_words: tuple[int, int] = (450, 750)
    max_turns: int = 20
    min_surviving_runs: int = 3
    provider_id: str = "chat"
    model_id: str = "mock"

    def __post_init__(self):
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")
        low, high = self.target_words
        if low >= high:
            raise ValueError("target_words must be an increasing range")


@dataclass(frozen=True)
class SegmentProposal:
    run_index: int
    intervals: tuple[Segment, ...]


@dataclass(frozen=True)
class BreakpointProfile:
    discussion: tuple[int, int]
    votes: dict[int, float]
    normalized_confidence: dict[int, float]


class SegmentationError(RuntimeError):
    pass


def _segment_prompt(episode: Episode, d0: int, d1: int) -> str:
    lines = [
        f"Topic/Goal: {episode.topic}",
        "Segment the discussion into coherent subtopic segments of 450-700 words "
        "or <=20 speaker turns each. Return only valid JSON matching the registered schema.",
    ]
    for utt in episode.utterances[d0 : d1 + 1]:
        name = episode.speakers[utt.speaker_id].display_name
        lines.append(f"{utt.index}\t{name}: {utt.text}")
    return "\n".join(lines)


def propose_segments(
    episode: Episode, config: SegmentationConfig, gateway: Gateway
) -> list[SegmentProposal]:
    """Run the segmenter `config.runs` times with diversified decoding params."""
    d0, d1 = episode.discussion_range
    prompt = _segment_prompt(episode, d0, d1)
    proposals: list[SegmentProposal] = []
    for run in range(config.runs):
        request = PromptRequest.make(
            config.provider_id,
            config.model_id,
            prompt,
            params={"temperature": 0.3 + 0.2 * run, "seed": run},
            schema_id="segment_proposal",
            context={
                "task": "segment",
                "discussion": [d0, d1],
                "run": run,
            },
        )
        try:
            payload = gateway.complete(request)
        except GatewayResponseError as exc:
            logger.warning("segmentation run %d discarded: schema error (%s)", run, exc)
            continue
        intervals = []
        valid = True
        prev_end = d0 - 1
        for item in payload:
            lo, hi = item["utterances_interval"]
            if lo < d0 or hi > d1 or lo > hi or lo != prev_end + 1:
                valid = False
                break
            prev_end = hi
            intervals.append(
                Segment(
                    segment_index=item["segment_index"],
                    interval=(lo, hi),
                    subtopic=item["segment_subtopic"],
                    boundary_confidence=1.0,
                )
            )
        if not valid or prev_end != d1:
            logger.warning("segmentation run %d discarded: intervals outside/not tiling", run)
            continue
        proposals.append(SegmentProposal(run_index=run, intervals=tuple(intervals)))
    if len(proposals) < config.min_surviving_runs:
        raise SegmentationError(
            f"only {len(proposals)} of {config.runs} segmentation runs survived "
            f"(minimum {config.min_surviving_runs})"
        )
    return proposals


def vote_breakpoints(
    proposals: list[SegmentProposal], config: SegmentationConfig, discussion: tuple[int, int]
) -> BreakpointProfile:
    """Weighted majority voting: 1.0 to each proposed start, 0.5 to neighbors."""
    if not proposals:
        raise ValueError("at least one proposal required")
    d0, d1 = discussion
    votes: dict[int, float] = {}

    def add(idx: int, weight: float) -> None:
        if d0 <= idx <= d1:
            votes[idx] = votes.get(idx, 0.0) + weight

    for proposal in proposals:
        for segment in proposal.intervals:
            b = segment.interval[0]
            if b == d0:
                continue  # the discussion start is not a candidate cut
            add(b, 1.0)
            add(b - 1, config.neighbor_weight)
            add(b + 1, config.neighbor_weight)
    p = len(proposals)
    normalized = {idx: v / p for idx, v in votes.items()}
    return BreakpointProfile(discussion=(d0, d1), votes=votes, normalized_confidence=normalized)


def _local_peaks(profile: BreakpointProfile, threshold: float) -> list[int]:
    d0, d1 = profile.discussion
    conf = profile.normalized_confidence

    def val(i: int) -> float:
        return conf.get(i, 0.0)

    peaks = []
    for b in range(d0 + 1, d1 + 1):  # a cut at d0 would create an empty segment
        v = val(b)
        if v <= threshold:
            continue
        left, right = val(b - 1), val(b + 1)
        # plateau ties resolve to the lowest index: require a strict rise on
        # the left unless b is the first candidate position
        if v >= right and (v > left or b == d0 + 1):
            peaks.append(b)
    return peaks


def select_breakpoints(profile: BreakpointProfile, config: SegmentationConfig) -> list[int]:
    """Local peaks above threshold, constrained to min/max segment lengths.

    Over-long segments get a fallback cut at their highest-scoring interior
    index (ties to the lowest index).
    """
    d0, d1 = profile.discussion
    conf = profile.normalized_confidence
    cuts: list[int] = []
    prev = d0
    for b in _local_peaks(profile, config.peak_threshold):
        if b - prev >= config.min_len and (d1 - b + 1) >= config.min_len:
            cuts.append(b)
            prev = b
    # enforce max_len with fallback cuts
    changed = True
    while changed:
        changed = False
        bounds = [d0] + cuts + [d1 + 1]
        for i in range(len(bounds) - 1):
            start, stop = bounds[i], bounds[i + 1]
            if stop - start > config.max_len:
                candidates = range(start + config.min_len, min(stop, start + config.max_len) + 1)
                candidates = [b for b in candidates if stop - b >= config.min_len and b < stop]
                if not candidates:
                    break
                best = max(candidates, key=lambda b: (conf.get(b, 0.0), -b))
                cuts = sorted(cuts + [best])
                changed = True
                break
    return cuts


def segments_from_breakpoints(
    profile: BreakpointProfile,
    breakpoints: list[int],
    proposals: list[SegmentProposal] | None = None,
) -> list[Segment]:
    """Materialize segments from cuts; subtopics come from the closest proposal start."""
    d0, d1 = profile.discussion
    bounds = [d0] + sorted(breakpoints) + [d1 + 1]
    proposal_starts: list[tuple[int, str]] = []
    for proposal in proposals or []:
        for segment in proposal.intervals:
            proposal_starts.append((segment.interval[0], segment.subtopic))
    segments = []
    for i in range(len(bounds) - 1):
        start, stop = bounds[i], bounds[i + 1]
        subtopic = f"segment {i + 1}"
        if proposal_starts:
            subtopic = min(proposal_starts, key=lambda t: (abs(t[0] - start), t[0]))[1]
        confidence = 1.0 if start == d0 else profile.normalized_confidence.get(start, 0.0)
        segments.append(
            Segment(
                segment_index=i,
                interval=(start, stop - 1),
                subtopic=subtopic,
                boundary_confidence=min(1.0, confidence),
            )
        )
    return segments


def word_deviation(words: int, target: tuple[int, int]) -> int:
    low, high = target
    return max(low - words, 0) + max(words - high, 0)


def _segment_words(episode: Episode, segment: Segment) -> int:
    return sum(episode.utterances[i].token_count for i in segment.indices())


def merge_segments(
    segments: list[Segment], episode: Episode, config: SegmentationConfig
) -> list[Segment]:
    """Greedy left-to-right merge of adjacent segments when the merged
    word-count deviation is strictly smaller than the sum of the parts'."""
    merged: list[Segment] = []
    for segment in segments:
        if merged:
            prev = merged[-1]
            joint = Segment(
                segment_index=prev.segment_index,
                interval=(prev.interval[0], segment.interval[1]),
                subtopic=prev.subtopic
                if prev.subtopic == segment.subtopic
                else f"{prev.subtopic} / {segment.subtopic}",
                boundary_confidence=prev.boundary_confidence,
            )
            turns = joint.interval[1] - joint.interval[0] + 1
            dev_joint = word_deviation(_segment_words(episode, joint), config.target_words)
            dev_parts = word_deviation(
                _segment_words(episode, prev), config.target_words
            ) + word_deviation(_segment_words(episode, segment), config.target_words)
            if dev_joint < dev_parts and turns <= config.max_turns:
                merged[-1] = joint
                continue
        merged.append(segment)
    return [
        Segment(i, seg.interval, seg.subtopic, seg.boundary_confidence)
        for i, seg in enumerate(merged)
    ]


@dataclass(frozen=True)
class SelectionConfig:
    target_nonskipped: int = 8
    reading_budget_minutes: float = 10.0
    words_per_minute: float = 200.0
    summary_words: int = 250
    preceding_turns: int = 5


def _zscore(xs: list[float]) -> list[float]:
    arr = np.asarray(xs, dtype=float)
    std = arr.std()
    if std == 0.0:
        return [0.0] * len(xs)
    return list((arr - arr.mean()) / std)


def select_annotation_segments(
    episode: Episode,
    segments: list[Segment],
    k: int,
    context_benefit: dict[int, float],
    selection: SelectionConfig | None = None,
) -> list[Segment]:
    """Top-k segments by an equal-weight score over z-scored quality features.

    Features: closeness to a target non-skipped utterance count, closeness to
    the reading-time budget (segment + summary + up to 5 preceding turns),
    mean boundary confidence, and an externally supplied context benefit.
    """
    if k > len(segments):
        raise ValueError(f"k={k} exceeds available segments ({len(segments)})")
    sel = selection or SelectionConfig()
    feat_count, feat_read, feat_conf, feat_benefit = [], [], [], []
    for segment in segments:
        utts = [episode.utterances[i] for i in segment.indices()]
        nonskipped = sum(1 for u in utts if not u.skipped)
        feat_count.append(-abs(nonskipped - sel.target_nonskipped))
        preceding = episode.utterances[
            max(0, segment.interval[0] - sel.preceding_turns) : segment.interval[0]
        ]
        words = (
            sum(u.token_count for u in utts)
            + sel.summary_words
            + sum(u.token_count for u in preceding)
        )
        minutes = words / sel.words_per_minute
        feat_read.append(-abs(minutes - sel.reading_budget_minutes))
        feat_conf.append(segment.boundary_confidence)
        feat_benefit.append(context_benefit.get(segment.segment_index, 0.0))
    scores = [
        sum(cols) / 4.0
        for cols in zip(
            _zscore(feat_count), _zscore(feat_read), _zscore(feat_conf), _zscore(feat_benefit)
        )
    ]
    ranked = sorted(
        range(len(segments)), key=lambda i: (-scores[i], segments[i].segment_index)
    )
    return [segments[i] for i in ranked[:k]]
