"""Claim extraction, retrieval, bidirectional NLI, and the ADD/UPDATE/NONE policy.

The consolidation policy is enforced in code; providers are consulted only for
claim extraction, the two directed NLI judgments, and merge text.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .gateway import Gateway, GatewayProviderError, GatewayResponseError, PromptRequest
from .transcripts import Episode, Utterance

logger = logging.getLogger(__name__)


class Relation(str, Enum):
    EQUIVALENT = "equivalent"
    FORWARD_ENTAIL = "forward_entail"
    BACKWARD_ENTAIL = "backward_entail"
    CONTRADICTION = "contradiction"
    NEUTRAL = "neutral"


class Action(str, Enum):
    ADD = "ADD"
    UPDATE = "UPDATE"
    NONE = "NONE"


@dataclass(frozen=True)
class Claim:
    speaker_id: str
    target_speaker: str
    claim_text: str
    turn_id: int

    def __post_init__(self):
        if not self.claim_text:
            raise ValueError("claim_text must be non-empty")


@dataclass(frozen=True)
class MemoryItem:
    id: str
    speaker_id: str
    target_speaker: str
    claim_text: str
    turn_id: int
    embedding: np.ndarray
    created_turn: int
    last_updated_turn: int
    supersedes: str | None = None


@dataclass(frozen=True)
class MemoryUpdate:
    action: Action
    logical_relation: Relation
    source: Claim
    target_id: str | None = None
    resulting_text: str | None = None
    item_id: str | None = None  # the item created/updated (None for NONE)
    degraded_judgment: bool = False
    degraded_merge: bool = False

    def to_dict(self) -> dict:
        return {
            "action": self.action.value,
            "logical_relation": self.logical_relation.value,
            "source": {
                "speaker": self.source.speaker_id,
                "target_speaker": self.source.target_speaker,
                "claim": self.source.claim_text,
                "turn_id": self.source.turn_id,
            },
            "target": self.target_id,
            "resulting_text": self.resulting_text,
            "item_id": self.item_id,
            "degraded_judgment": self.degraded_judgment,
            "degraded_merge": self.degraded_merge,
        }

    @staticmethod
    def from_dict(d: dict) -> "MemoryUpdate":
        src = d["source"]
        return MemoryUpdate(
            action=Action(d["action"]),
            logical_relation=Relation(d["logical_relation"]),
            source=Claim(src["speaker"], src["target_speaker"], src["claim"], src["turn_id"]),
            target_id=d.get("target"),
            resulting_text=d.get("resulting_text"),
            item_id=d.get("item_id"),
            degraded_judgment=d.get("degraded_judgment", False),
            degraded_merge=d.get("degraded_merge", False),
        )


@dataclass
class MemoryStore:
    items: dict[str, MemoryItem] = field(default_factory=dict)
    timeline: list[MemoryUpdate] = field(default_factory=list)
    _counter: int = 0

    def next_id(self) -> str:
        item_id = f"mem_{self._counter:04d}"
        self._counter += 1
        return item_id

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "items": [
                {
                    "id": item.id,
                    "speaker": item.speaker_id,
                    "target_speaker": item.target_speaker,
                    "claim": item.claim_text,
                    "turn_id": item.turn_id,
                    "created_turn": item.created_turn,
                    "last_updated_turn": item.last_updated_turn,
                    "supersedes": item.supersedes,
                }
                for item in sorted(self.items.values(), key=lambda i: i.id)
            ],
            "timeline": [u.to_dict() for u in self.timeline],
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class MemoryConfig:
    retrieval_k: int = 5
    similarity_floor: float = 0.0
    max_claims: int = 30
    provider_id: str = "chat"
    model_id: str = "mock"


@dataclass(frozen=True)
class RelationJudgment:
    relation: Relation
    degraded: bool = False


@dataclass(frozen=True)
class ExtractionResult:
    claims: tuple[Claim, ...]
    failed: bool = False
    truncated: bool = False


def extract_claims(
    utterance: Utterance,
    speaker_name: str,
    local_context: str,
    gateway: Gateway,
    config: MemoryConfig,
) -> ExtractionResult:
    """Decompose an utterance into atomic, self-contained claims (max 30)."""
    prompt = (
        "Extract atomic, self-contained, semantically distinct claims from the "
        f"target utterance only.\nContext:\n{local_context}\n"
        f"Target utterance:\n{utterance.index}. {speaker_name}: {utterance.text}"
    )
    request = PromptRequest.make(
        config.provider_id,
        config.model_id,
        prompt,
        schema_id="claim_extraction",
        context={"task": "extract", "speaker": speaker_name, "turn_id": utterance.index,
                 "text": utterance.text},
    )
    try:
        payload = gateway.complete(request)
    except (GatewayResponseError, GatewayProviderError) as exc:
        logger.warning("claim extraction failed for utterance %d: %s", utterance.index, exc)
        return ExtractionResult(claims=(), failed=True)
    rows = payload["memories"]
    truncated = len(rows) > config.max_claims
    if truncated:
        logger.warning(
            "utterance %d: %d claims returned, truncating to %d",
            utterance.index, len(rows), config.max_claims,
        )
        rows = rows[: config.max_claims]
    claims = tuple(
        Claim(
            speaker_id=utterance.speaker_id,
            target_speaker=row["target_speaker"],
            claim_text=row["claim"],
            turn_id=utterance.index,
        )
        for row in rows
    )
    return ExtractionResult(claims=claims, truncated=truncated)


def retrieve_candidates(
    embedding: np.ndarray, store: MemoryStore, k: int, floor: float = 0.0
) -> list[tuple[MemoryItem, float]]:
    """Top-k memory items by cosine similarity, descending."""
    scored = []
    for item in store.items.values():
        sim = float(np.dot(embedding, item.embedding))
        if sim >= floor:
            scored.append((item, sim))
    scored.sort(key=lambda t: (-t[1], t[0].id))
    return scored[:k]


def classify_relation(
    a: Claim, b: MemoryItem, gateway: Gateway, config: MemoryConfig
) -> RelationJudgment:
    """Map two directed NLI judgments (A=>B, B=>A) to a single relation.

    Contradiction in either direction takes precedence over entailment.
    """
    prompt = (
        "Classify the logical relation between A (new) and B (existing) in both "
        f"directions.\nA: {a.claim_text}\nB: {b.claim_text}"
    )
    request = PromptRequest.make(
        config.provider_id,
        config.model_id,
        prompt,
        schema_id="nli_bidirectional",
        context={"task": "nli", "a": a.claim_text, "b": b.claim_text},
    )
    try:
        payload = gateway.complete(request)
    except (GatewayResponseError, GatewayProviderError) as exc:
        logger.warning("NLI judgment degraded to neutral: %s", exc)
        return RelationJudgment(Relation.NEUTRAL, degraded=True)
    ab, ba = payload["a_entails_b"], payload["b_entails_a"]
    if "contradiction" in (ab, ba):
        relation = Relation.CONTRADICTION
    elif ab == "entailment" and ba == "entailment":
        relation = Relation.EQUIVALENT
    elif ab == "entailment":
        relation = Relation.FORWARD_ENTAIL
    elif ba == "entailment":
        relation = Relation.BACKWARD_ENTAIL
    else:
        relation = Relation.NEUTRAL
    return RelationJudgment(relation)


_RUNG_SAME = {
    Relation.EQUIVALENT: 1,
    Relation.BACKWARD_ENTAIL: 2,
    Relation.CONTRADICTION: 3,
    Relation.FORWARD_ENTAIL: 3,
}


def select_target(
    a: Claim, candidates: list[tuple[MemoryItem, float, Relation]]
) -> tuple[MemoryItem, Relation] | None:
    """Priority ladder over (speaker match, relation); exactly one target or none.

    1) same speaker & equivalent; 2) same speaker & backward_entail;
    3) same speaker & (contradiction | forward_entail);
    4) different speaker & any non-neutral. Ties: highest similarity, then
    oldest item id.
    """
    best: tuple[int, float, str] | None = None
    chosen: tuple[MemoryItem, Relation] | None = None
    for item, sim, relation in candidates:
        if relation is Relation.NEUTRAL:
            continue
        if item.speaker_id == a.speaker_id:
            rung = _RUNG_SAME[relation]
        else:
            rung = 4
        key = (rung, -sim, item.id)
        if best is None or key < best:
            best = key
            chosen = (item, relation)
    return chosen


def decide_action(
    a: Claim, selected: tuple[MemoryItem, Relation] | None
) -> MemoryUpdate:
    """Speaker-aware action policy for a new claim against its selected target."""
    if selected is None:
        return MemoryUpdate(
            action=Action.ADD,
            logical_relation=Relation.NEUTRAL,
            source=a,
            resulting_text=a.claim_text,
        )
    item, relation = selected
    if item.speaker_id == a.speaker_id:
        if relation in (Relation.EQUIVALENT, Relation.BACKWARD_ENTAIL):
            return MemoryUpdate(
                action=Action.NONE, logical_relation=relation, source=a, target_id=item.id
            )
        # forward_entail or contradiction: revise the selected item
        return MemoryUpdate(
            action=Action.UPDATE, logical_relation=relation, source=a, target_id=item.id
        )
    # different speaker: always ADD, relation kept for provenance
    return MemoryUpdate(
        action=Action.ADD, logical_relation=relation, source=a,
        target_id=item.id, resulting_text=a.claim_text,
    )


def _merge_text(a: Claim, b: MemoryItem, gateway: Gateway, config: MemoryConfig) -> tuple[str, bool]:
    prompt = f"Merge A with B into a single more specific claim.\nA: {a.claim_text}\nB: {b.claim_text}"
    request = PromptRequest.make(
        config.provider_id,
        config.model_id,
        prompt,
        schema_id="merge_claim",
        context={"task": "merge", "a": a.claim_text, "b": b.claim_text},
    )
    try:
        payload = gateway.complete(request)
        return payload["claim"], False
    except (GatewayResponseError, GatewayProviderError) as exc:
        logger.warning("merge provider failed, replacing with the new claim: %s", exc)
        return a.claim_text, True


def apply_update(
    store: MemoryStore, update: MemoryUpdate, gateway: Gateway, config: MemoryConfig
) -> MemoryStore:
    """Apply one decided action to the store and append it to the timeline."""
    a = update.source
    if update.action is Action.NONE:
        store.timeline.append(update)
        return store
    if update.action is Action.ADD:
        item_id = store.next_id()
        embedding = gateway.embed([a.claim_text])[0]
        store.items[item_id] = MemoryItem(
            id=item_id,
            speaker_id=a.speaker_id,
            target_speaker=a.target_speaker,
            claim_text=a.claim_text,
            turn_id=a.turn_id,
            embedding=embedding,
            created_turn=a.turn_id,
            last_updated_turn=a.turn_id,
        )
        store.timeline.append(replace(update, resulting_text=a.claim_text, item_id=item_id))
        return store
    # UPDATE: the revised claim gets a fresh id and supersedes the target
    target = store.items[update.target_id]
    degraded_merge = False
    if update.logical_relation is Relation.FORWARD_ENTAIL:
        new_text, degraded_merge = _merge_text(a, target, gateway, config)
    else:  # contradiction: replace outright
        new_text = a.claim_text
    embedding = gateway.embed([new_text])[0]
    item_id = store.next_id()
    del store.items[target.id]
    store.items[item_id] = MemoryItem(
        id=item_id,
        speaker_id=target.speaker_id,
        target_speaker=target.target_speaker,
        claim_text=new_text,
        turn_id=a.turn_id,
        embedding=embedding,
        created_turn=target.created_turn,
        last_updated_turn=a.turn_id,
        supersedes=target.id,
    )
    store.timeline.append(
        replace(update, resulting_text=new_text, item_id=item_id, degraded_merge=degraded_merge)
    )
    return store


def consolidate_claim(
    claim: Claim, store: MemoryStore, gateway: Gateway, config: MemoryConfig
) -> MemoryUpdate:
    """Retrieve -> classify -> select -> decide -> apply for one claim."""
    embedding = gateway.embed([claim.claim_text])[0]
    candidates = retrieve_candidates(embedding, store, config.retrieval_k, config.similarity_floor)
    judged = []
    degraded = False
    for item, sim in candidates:
        judgment = classify_relation(claim, item, gateway, config)
        degraded = degraded or judgment.degraded
        judged.append((item, sim, judgment.relation))
    selected = select_target(claim, judged)
    update = decide_action(claim, selected)
    if degraded:
        update = replace(update, degraded_judgment=True)
    apply_update(store, update, gateway, config)
    return store.timeline[-1]


def consolidate_utterance(
    utterance: Utterance,
    speaker_name: str,
    local_context: str,
    store: MemoryStore,
    gateway: Gateway,
    config: MemoryConfig,
) -> list[MemoryUpdate]:
    """Extract claims and consolidate them in order against the evolving store."""
    if utterance.skipped:
        return []
    extraction = extract_claims(utterance, speaker_name, local_context, gateway, config)
    updates = []
    for claim in extraction.claims:
        updates.append(consolidate_claim(claim, store, gateway, config))
    return updates


def consolidate_episode(
    episode: Episode, gateway: Gateway, config: MemoryConfig
) -> MemoryStore:
    """Consolidate introduction then discussion utterances into a fresh store.

    Introduction turns seed the initial knowledge; the conclusion is discarded.
    """
    store = MemoryStore()
    for utt in episode.utterances:
        if utt.phase == "conclusion":
            continue
        speaker = episode.speakers[utt.speaker_id]
        context_lines = [
            f"{u.index}. {episode.speakers[u.speaker_id].display_name}: {u.text}"
            for u in episode.utterances[max(0, utt.index - 3) : utt.index]
        ]
        consolidate_utterance(
            utt, speaker.display_name, "\n".join(context_lines), store, gateway, config
        )
    return store


def replay_timeline(updates: list[MemoryUpdate], gateway: Gateway) -> MemoryStore:
    """Rebuild a store purely from its timeline (event-sourcing property)."""
    store = MemoryStore()
    for update in updates:
        if update.action is Action.NONE:
            store.timeline.append(update)
            continue
        text = update.resulting_text
        embedding = gateway.embed([text])[0]
        if update.action is Action.ADD:
            item_id = store.next_id()
            a = update.source
            store.items[item_id] = MemoryItem(
                id=item_id,
                speaker_id=a.speaker_id,
                target_speaker=a.target_speaker,
                claim_text=text,
                turn_id=a.turn_id,
                embedding=embedding,
                created_turn=a.turn_id,
                last_updated_turn=a.turn_id,
            )
            store.timeline.append(update)
        else:
            target = store.items[update.target_id]
            item_id = store.next_id()
            del store.items[target.id]
            store.items[item_id] = MemoryItem(
                id=item_id,
                speaker_id=target.speaker_id,
                target_speaker=target.target_speaker,
                claim_text=text,
                turn_id=update.source.turn_id,
                embedding=embedding,
                created_turn=target.created_turn,
                last_updated_turn=update.source.turn_id,
                supersedes=target.id,
            )
            store.timeline.append(update)
    return store


def store_at_turn(store: MemoryStore, turn: int, gateway: Gateway) -> MemoryStore:
    """Store state as of just before the given utterance index (replay prefix)."""
    prefix = [u for u in store.timeline if u.source.turn_id < turn]
    return replay_timeline(prefix, gateway)
