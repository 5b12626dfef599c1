"""Multi-party transcript model: loading, skip rules, descriptive statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path


class Role(str, Enum):
    PARTICIPANT = "participant"
    MODERATOR = "moderator"
    AUDIENCE = "audience"


class SkipReason(str, Enum):
    MODERATOR = "moderator"
    TOO_SHORT = "too_short"
    FRAGMENT = "fragment"


PHASES = ("introduction", "discussion", "conclusion")
MODERATOR_ACTS = ("probing", "confronting", "interpretation", "supplementing", "utilities")

TERMINAL_PUNCTUATION = (".", "!", "?")


class TranscriptError(ValueError):
    """Raised for malformed or inconsistent transcript files."""


def word_count(text: str) -> int:
    """Whitespace-separated tokens, excluding punctuation-only tokens."""
    return sum(1 for tok in text.split() if any(ch.isalnum() for ch in tok))


@dataclass(frozen=True)
class Speaker:
    id: str
    display_name: str
    role: Role
    stance: str | None = None  # "for" | "against" | "neutral"


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker_id: str
    text: str
    token_count: int
    phase: str
    skipped: bool = False
    skip_reason: SkipReason | None = None


@dataclass(frozen=True)
class Episode:
    id: str
    topic: str
    corpus_tag: str
    speakers: dict[str, Speaker]
    utterances: tuple[Utterance, ...]
    moderator_acts: dict[int, str] = field(default_factory=dict)

    @property
    def phase_boundaries(self) -> dict[str, tuple[int, int]]:
        bounds: dict[str, tuple[int, int]] = {}
        for utt in self.utterances:
            if utt.phase in bounds:
                lo, hi = bounds[utt.phase]
                bounds[utt.phase] = (lo, utt.index)
            else:
                bounds[utt.phase] = (utt.index, utt.index)
        return bounds

    @property
    def discussion_range(self) -> tuple[int, int]:
        try:
            return self.phase_boundaries["discussion"]
        except KeyError:
            raise TranscriptError(f"episode {self.id}: discussion phase is empty")

    def role_of(self, utt: Utterance) -> Role:
        return self.speakers[utt.speaker_id].role


@dataclass(frozen=True)
class Segment:
    segment_index: int
    interval: tuple[int, int]  # inclusive utterance index range
    subtopic: str
    boundary_confidence: float

    def indices(self) -> range:
        return range(self.interval[0], self.interval[1] + 1)


def _validate_phases(utterances: list[Utterance], episode_id: str) -> None:
    seen: list[str] = []
    for utt in utterances:
        if utt.phase not in PHASES:
            raise TranscriptError(f"episode {episode_id}: unknown phase {utt.phase!r}")
        if not seen or seen[-1] != utt.phase:
            seen.append(utt.phase)
    order = [p for p in PHASES if p in seen]
    if seen != order:
        raise TranscriptError(f"episode {episode_id}: phases out of order: {seen}")
    if "discussion" not in seen:
        raise TranscriptError(f"episode {episode_id}: discussion phase is empty")


def load_episode(path: str | Path) -> Episode:
    """Load a line-delimited episode file (header line, then one utterance per line)."""
    path = Path(path)
    header = None
    utterances: list[Utterance] = []
    speakers: dict[str, Speaker] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TranscriptError(f"{path.name}:{lineno}: malformed line: {exc}") from exc
            if header is None:
                header = record
                if "topic" not in header or not header["topic"]:
                    raise TranscriptError(f"{path.name}:{lineno}: missing topic in header")
                continue
            try:
                index = int(record["index"])
                speaker_id = record["speaker_id"]
                text = record["text"]
                role = Role(record["role"])
                phase = record["phase"]
            except (KeyError, ValueError) as exc:
                raise TranscriptError(f"{path.name}:{lineno}: malformed line: {exc}") from exc
            expected = len(utterances)
            if index < expected:
                raise TranscriptError(f"{path.name}:{lineno}: duplicate index {index}")
            if index > expected:
                raise TranscriptError(f"{path.name}:{lineno}: non-contiguous index at line {lineno}")
            if speaker_id in speakers and speakers[speaker_id].role != role:
                raise TranscriptError(
                    f"{path.name}:{lineno}: speaker {speaker_id} changes role mid-episode"
                )
            speakers.setdefault(
                speaker_id,
                Speaker(
                    id=speaker_id,
                    display_name=record.get("speaker_name", speaker_id),
                    role=role,
                    stance=record.get("stance"),
                ),
            )
            skip_reason = record.get("skip_reason")
            utterances.append(
                Utterance(
                    index=index,
                    speaker_id=speaker_id,
                    text=text,
                    token_count=word_count(text),
                    phase=phase,
                    skipped=bool(record.get("skipped", False)),
                    skip_reason=SkipReason(skip_reason) if skip_reason else None,
                )
            )
    if header is None:
        raise TranscriptError(f"{path.name}: empty file")
    _validate_phases(utterances, header.get("id", path.stem))
    acts = {int(k): v for k, v in (header.get("moderator_acts") or {}).items()}
    for act in acts.values():
        if act not in MODERATOR_ACTS:
            raise TranscriptError(f"{path.name}: unknown moderator act {act!r}")
    return Episode(
        id=header["id"],
        topic=header["topic"],
        corpus_tag=header.get("corpus_tag", ""),
        speakers=speakers,
        utterances=tuple(utterances),
        moderator_acts=acts,
    )


def write_episode(episode: Episode, path: str | Path) -> None:
    """Write an episode in the same line-delimited format `load_episode` reads."""
    path = Path(path)
    lines = [
        json.dumps(
            {
                "id": episode.id,
                "topic": episode.topic,
                "corpus_tag": episode.corpus_tag,
                "moderator_acts": {str(k): v for k, v in sorted(episode.moderator_acts.items())},
            },
            sort_keys=True,
        )
    ]
    for utt in episode.utterances:
        speaker = episode.speakers[utt.speaker_id]
        record = {
            "index": utt.index,
            "speaker_id": utt.speaker_id,
            "speaker_name": speaker.display_name,
            "role": speaker.role.value,
            "text": utt.text,
            "phase": utt.phase,
        }
        if speaker.stance is not None:
            record["stance"] = speaker.stance
        if utt.skipped:
            record["skipped"] = True
            record["skip_reason"] = utt.skip_reason.value
        lines.append(json.dumps(record, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def apply_skip_rules(episode: Episode) -> Episode:
    """Mark moderator/audience turns and short utterances (<5 words) as skipped.

    Idempotent; every other utterance is explicitly unskipped.
    """
    updated = []
    for utt in episode.utterances:
        role = episode.role_of(utt)
        if role in (Role.MODERATOR, Role.AUDIENCE):
            updated.append(replace(utt, skipped=True, skip_reason=SkipReason.MODERATOR))
        elif utt.token_count < 5:
            updated.append(replace(utt, skipped=True, skip_reason=SkipReason.TOO_SHORT))
        else:
            updated.append(replace(utt, skipped=False, skip_reason=None))
    return replace(episode, utterances=tuple(updated))


def apply_fragment_rule(episode: Episode) -> Episode:
    """Extra skip rule used in segment-selection mode only.

    Skips utterances of <=5 words without terminal punctuation, or <=3 words.
    Existing skip flags are preserved.
    """
    updated = []
    for utt in episode.utterances:
        if utt.skipped:
            updated.append(utt)
            continue
        stripped = utt.text.rstrip()
        fragment = (
            utt.token_count <= 3
            or (utt.token_count <= 5 and not stripped.endswith(TERMINAL_PUNCTUATION))
        )
        if fragment:
            updated.append(replace(utt, skipped=True, skip_reason=SkipReason.FRAGMENT))
        else:
            updated.append(utt)
    return replace(episode, utterances=tuple(updated))


def gini(values: list[float]) -> float:
    """Gini coefficient: sum_ij |x_i - x_j| / (2 n^2 mu)."""
    n = len(values)
    if n == 0:
        return 0.0
    total = sum(values)
    if total == 0:
        return 0.0
    mu = total / n
    diff_sum = sum(abs(a - b) for a in values for b in values)
    return diff_sum / (2 * n * n * mu)


@dataclass(frozen=True)
class StatsReport:
    episode_id: str
    utterance_count: int
    words_per_utterance: float
    speaker_count: int
    segment_utterance_counts: tuple[int, ...]
    segment_speaker_counts: tuple[int, ...]
    words_per_nonskipped_utterance: float
    speaker_gini: float
    skipped_token_pct: float

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("episode_id", self.episode_id),
            ("utterances_per_session", str(self.utterance_count)),
            ("words_per_utterance", f"{self.words_per_utterance:.4f}"),
            ("speakers_per_session", str(self.speaker_count)),
            ("segment_utterance_counts", "|".join(map(str, self.segment_utterance_counts))),
            ("segment_speaker_counts", "|".join(map(str, self.segment_speaker_counts))),
            ("words_per_nonskipped_utterance", f"{self.words_per_nonskipped_utterance:.4f}"),
            ("speaker_gini", f"{self.speaker_gini:.4f}"),
            ("skipped_token_pct", f"{self.skipped_token_pct:.4f}"),
        ]


def descriptive_stats(episode: Episode, segments: list[Segment]) -> StatsReport:
    """Descriptive statistics over an episode and its segments.

    The speaker-participation Gini and words/non-skipped-utterance are computed
    over non-skipped utterances only; skipped-token % is relative to all tokens.
    """
    utts = episode.utterances
    total_tokens = sum(u.token_count for u in utts)
    nonskipped = [u for u in utts if not u.skipped]
    skipped_tokens = total_tokens - sum(u.token_count for u in nonskipped)
    per_speaker: dict[str, int] = {}
    for u in nonskipped:
        per_speaker[u.speaker_id] = per_speaker.get(u.speaker_id, 0) + u.token_count
    seg_utt_counts = tuple(seg.interval[1] - seg.interval[0] + 1 for seg in segments)
    seg_speaker_counts = tuple(
        len({utts[i].speaker_id for i in seg.indices()}) for seg in segments
    )
    return StatsReport(
        episode_id=episode.id,
        utterance_count=len(utts),
        words_per_utterance=total_tokens / len(utts) if utts else 0.0,
        speaker_count=len(episode.speakers),
        segment_utterance_counts=seg_utt_counts,
        segment_speaker_counts=seg_speaker_counts,
        words_per_nonskipped_utterance=(
            sum(u.token_count for u in nonskipped) / len(nonskipped) if nonskipped else 0.0
        ),
        speaker_gini=gini(sorted(per_speaker.values())),
        skipped_token_pct=100.0 * skipped_tokens / total_tokens if total_tokens else 0.0,
    )
