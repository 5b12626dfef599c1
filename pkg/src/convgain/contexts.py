"""Knowledge-context construction for rating under five controlled conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gateway import Gateway, GatewayResponseError, PromptRequest
from .memory import MemoryItem, MemoryStore
from .transcripts import Episode, Segment, Utterance


class Condition(str, Enum):
    FULL = "full"
    MEMORY = "memory"
    MEMORY_SUMMARY = "memory_summary"
    SHORT_PRIOR = "short_prior"
    NO_KNOWLEDGE = "no_knowledge"


class SummaryVariant(str, Enum):
    DIRECT = "direct"
    RECURSIVE = "recursive"
    THEME_AWARE = "theme_aware"
    MEMORY_BASED = "memory_based"


SUMMARY_PREFIX = "The prior conversation"
SUMMARY_WORD_BOUNDS = (180, 320)


class SummaryValidationError(RuntimeError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class PriorSummary:
    text: str
    variant: SummaryVariant
    word_count: int


@dataclass(frozen=True)
class ContextBundle:
    topic: str
    condition: Condition
    prior_block: dict  # shape determined by condition; see build_context
    short_window: tuple[dict, ...]  # {"index", "speaker", "text"}; empty when subsumed
    targets: tuple[dict, ...]
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "condition": self.condition.value,
            "prior_block": self.prior_block,
            "short_window": list(self.short_window),
            "targets": list(self.targets),
            "flags": list(self.flags),
        }


def _utt_dict(episode: Episode, utt: Utterance) -> dict:
    speaker = episode.speakers[utt.speaker_id]
    return {
        "index": utt.index,
        "speaker": speaker.display_name,
        "stance": speaker.stance,
        "text": utt.text,
        "skipped": utt.skipped,
    }


def retrieve_for_segment(
    segment: Segment, episode: Episode, store: MemoryStore, k: int, gateway: Gateway
) -> list[MemoryItem]:
    """Top-k memory items by similarity to the segment's non-skipped text."""
    if not store.items:
        return []
    text = " ".join(
        episode.utterances[i].text for i in segment.indices() if not episode.utterances[i].skipped
    )
    if not text:
        text = " ".join(episode.utterances[i].text for i in segment.indices())
    query = gateway.embed([text])[0]
    scored = [
        (float(np.dot(query, item.embedding)), item) for item in store.items.values()
    ]
    scored.sort(key=lambda t: (-t[0], t[1].id))
    return [item for _, item in scored[:k]]


def _format_memory_items(items: list[MemoryItem]) -> list[dict]:
    return [
        {"id": item.id, "speaker": item.speaker_id, "claim": item.claim_text}
        for item in items
    ]


def summarise_memory(
    topic: str,
    source,
    variant: SummaryVariant,
    gateway: Gateway,
    provider_id: str = "chat",
    model_id: str = "mock",
    word_bounds: tuple[int, int] = SUMMARY_WORD_BOUNDS,
) -> PriorSummary:
    """Produce a prior-context summary; prefix and length are machine-validated.

    `source` is a list of memory items for the memory_based variant, or prior
    text for the transcript-based variants. Faithfulness is the provider's
    obligation and is not machine-checked.
    """
    if variant is not SummaryVariant.RECURSIVE and not source:
        raise ValueError(f"variant {variant.value} requires non-empty input")
    if variant is SummaryVariant.MEMORY_BASED:
        items = [item.claim_text for item in source]
    elif isinstance(source, str):
        items = [source]
    else:
        items = list(source or [])
    prompt = (
        f"Summarise the prior context for topic {topic!r} in plain prose (~250 words), "
        f'beginning with "The prior conversation". Variant: {variant.value}.'
    )
    last_raw = ""
    for attempt in range(2):  # one corrective retry on prefix/length violation
        request = PromptRequest.make(
            provider_id,
            model_id,
            prompt if attempt == 0 else prompt + " (corrective retry)",
            schema_id="summary",
            context={"task": "summarise", "topic": topic, "items": items,
                     "variant": variant.value, "attempt": attempt},
        )
        payload = gateway.complete(request)
        text = payload["summary"]
        last_raw = text
        words = len(text.split())
        if text.startswith(SUMMARY_PREFIX) and word_bounds[0] <= words <= word_bounds[1]:
            return PriorSummary(text=text, variant=variant, word_count=words)
    raise SummaryValidationError(
        f"summary failed prefix/length validation after retry "
        f"(bounds {word_bounds}, got {len(last_raw.split())} words)",
        raw=last_raw,
    )


def build_context(
    episode: Episode,
    segment: Segment,
    store: MemoryStore,
    condition: Condition,
    gateway: Gateway,
    retrieval_k: int = 20,
    provider_id: str = "chat",
    model_id: str = "mock",
) -> ContextBundle:
    """Assemble the knowledge context shown to a rater for one segment.

    The store must be consolidated only up to the segment start for the
    memory conditions (enforced by the caller; see `store_at_turn`).
    """
    start = segment.interval[0]
    preceding = episode.utterances[:start]
    targets = tuple(_utt_dict(episode, episode.utterances[i]) for i in segment.indices())
    flags: list[str] = []

    short_window: tuple[dict, ...] = ()
    if condition in (Condition.MEMORY, Condition.MEMORY_SUMMARY):
        short_window = tuple(_utt_dict(episode, u) for u in preceding[-3:])

    if condition is Condition.FULL:
        prior_block = {
            "kind": "transcript",
            "utterances": [_utt_dict(episode, u) for u in preceding],
        }
    elif condition is Condition.SHORT_PRIOR:
        prior_block = {
            "kind": "short_window",
            "utterances": [_utt_dict(episode, u) for u in preceding[-3:]],
        }
    elif condition is Condition.NO_KNOWLEDGE:
        prior_block = {"kind": "empty"}
    else:
        items = retrieve_for_segment(segment, episode, store, retrieval_k, gateway)
        if not items:
            flags.append("empty_memory")
            prior_block = {"kind": "empty"}
        elif condition is Condition.MEMORY:
            prior_block = {"kind": "memory_items", "items": _format_memory_items(items)}
        else:  # MEMORY_SUMMARY
            summary = summarise_memory(
                episode.topic, items, SummaryVariant.MEMORY_BASED, gateway,
                provider_id=provider_id, model_id=model_id,
            )
            prior_block = {
                "kind": "summary",
                "text": summary.text,
                "variant": summary.variant.value,
                "word_count": summary.word_count,
            }
    return ContextBundle(
        topic=episode.topic,
        condition=condition,
        prior_block=prior_block,
        short_window=short_window,
        targets=targets,
        flags=tuple(flags),
    )
