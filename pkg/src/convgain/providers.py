"""Provider implementations behind the gateway.

Real chat/embedding/logprob endpoints are out of scope; the deterministic
mocks below make the full pipeline reproducible, while `ScriptedChatProvider`
supports per-call scripting in tests. All mocks key their behaviour off the
structured `request.context` payload (which real providers ignore) rather than
parsing prompt prose.
"""

from __future__ import annotations

import hashlib
import json
from typing import Protocol, Sequence

import numpy as np

from .textanalysis import content_lemmas, split_sentences, tokenize

NEGATION_MARKERS = {"not", "no", "never", "n't", "cannot"}

HEDGE_PREFIXES = (
    "i think that ",
    "i think ",
    "i feel that ",
    "i feel ",
    "i guess ",
    "maybe ",
    "perhaps ",
    "kind of ",
)


def stable_hash(*parts: str) -> int:
    digest = hashlib.blake2b("\x1f".join(parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class ProviderCallError(RuntimeError):
    """Raised by a provider when a call fails (network, exhaustion, ...)."""


class ChatProvider(Protocol):
    def complete(self, request) -> str: ...


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class LogprobProvider(Protocol):
    def logprobs(self, text: str) -> list[tuple[str, float]]: ...


class ScriptedChatProvider:
    """Returns pre-scripted raw responses in order; raises when exhausted."""

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.call_count = 0

    def complete(self, request) -> str:
        if self.call_count >= len(self.responses):
            raise ProviderCallError("scripted provider exhausted")
        response = self.responses[self.call_count]
        self.call_count += 1
        if isinstance(response, Exception):
            raise response
        return response


class HashEmbedder:
    """Deterministic embedder: content-word multiset hashed into a fixed dim.

    Only cosine similarity is consumed downstream, so any stable dimension
    works; 256 keeps collisions rare on fixture-scale vocabularies.
    """

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            vec = np.zeros(self.dimension, dtype=np.float64)
            for lemma in content_lemmas(text):
                h = stable_hash("emb", lemma)
                idx = h % self.dimension
                sign = 1.0 if (h >> 17) % 2 == 0 else -1.0
                vec[idx] += sign
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                vec[stable_hash("emb-empty", text) % self.dimension] = 1.0
                norm = 1.0
            out.append(vec / norm)
        return out


class HashLogprobProvider:
    """Deterministic pseudo log-probabilities (base-2) per token."""

    def logprobs(self, text: str) -> list[tuple[str, float]]:
        trace = []
        prev = "<s>"
        for tok in tokenize(text):
            h = stable_hash("lp", prev, tok)
            logprob = -(1.0 + (h % 700) / 100.0)  # in [-8, -1] bits
            trace.append((tok, logprob))
            prev = tok
        return trace


def _strip_hedges(sentence: str) -> str:
    lowered = sentence.lower()
    for prefix in HEDGE_PREFIXES:
        if lowered.startswith(prefix):
            rest = sentence[len(prefix) :].strip()
            if rest:
                return rest[0].upper() + rest[1:]
    return sentence


def _has_negation(text: str) -> bool:
    toks = {t.lower() for t in tokenize(text)}
    return bool(toks & NEGATION_MARKERS) or any(t.lower().endswith("n't") for t in toks)


def _nli_judgement(a: str, b: str) -> dict:
    set_a, set_b = set(content_lemmas(a)), set(content_lemmas(b))
    neg_a, neg_b = _has_negation(a), _has_negation(b)
    if set_a and set_a == set_b:
        if neg_a == neg_b:
            return {"a_entails_b": "entailment", "b_entails_a": "entailment"}
        return {"a_entails_b": "contradiction", "b_entails_a": "contradiction"}
    if set_b and set_b < set_a:
        if neg_a == neg_b:
            return {"a_entails_b": "entailment", "b_entails_a": "neutral"}
        return {"a_entails_b": "contradiction", "b_entails_a": "neutral"}
    if set_a and set_a < set_b:
        if neg_a == neg_b:
            return {"a_entails_b": "neutral", "b_entails_a": "entailment"}
        return {"a_entails_b": "neutral", "b_entails_a": "contradiction"}
    return {"a_entails_b": "neutral", "b_entails_a": "neutral"}


def _level(h: int) -> int:
    return 1 + h % 4


def _score(kind: str, text: str, condition: str, run: str) -> int:
    base = _level(stable_hash("score", kind, text))
    jitter_h = stable_hash("jitter", kind, text, condition, run)
    if jitter_h % 5 == 0:
        base += 1 if jitter_h % 2 == 0 else -1
    return max(1, min(4, base))


FILLER_SENTENCE = (
    "Participants continue to weigh these considerations against each other "
    "as the discussion develops."
)


def _build_summary(topic: str, items: Sequence[str], low: int = 180, high: int = 320) -> str:
    body = " ".join(items)
    text = f"The prior conversation about {topic} has established several points. {body}".strip()
    words = text.split()
    while len(words) < low:
        words.extend(FILLER_SENTENCE.split())
    if len(words) > high:
        words = words[: high - 20]
        if not words[-1].endswith("."):
            words[-1] = words[-1].rstrip(",;") + "."
    return " ".join(words)


class DeterministicChatProvider:
    """Rule-based mock covering every structured task in the pipeline."""

    def __init__(self):
        self.call_count = 0

    def complete(self, request) -> str:
        self.call_count += 1
        ctx = dict(request.context or {})
        task = ctx.get("task")
        if task == "segment":
            return self._segment(ctx)
        if task == "extract":
            return self._extract(ctx)
        if task == "nli":
            return json.dumps(_nli_judgement(ctx["a"], ctx["b"]))
        if task == "merge":
            a, b = ctx["a"], ctx["b"]
            merged = a if len(content_lemmas(a)) >= len(content_lemmas(b)) else b
            return json.dumps({"claim": merged})
        if task == "summarise":
            return json.dumps({"summary": _build_summary(ctx["topic"], ctx.get("items", []))})
        if task == "rate_info":
            cond, run = ctx.get("condition", ""), str(ctx.get("run", 0))
            rows = [
                {
                    "utterance_index": t["index"],
                    "informativeness": _score("info", t["text"], cond, run),
                    "context_type": "INFO",
                }
                for t in ctx["targets"]
            ]
            return json.dumps(rows)
        if task == "rate_mix":
            cond, run = ctx.get("condition", ""), str(ctx.get("run", 0))
            rows = [
                {
                    "utterance_index": t["index"],
                    "novelty": _score("novo", t["text"], cond, run),
                    "relevance": _score("relv", t["text"], cond, run),
                    "implication_scope": _score("imsc", t["text"], cond, run),
                    "context_type": "MIX",
                }
                for t in ctx["targets"]
            ]
            return json.dumps(rows)
        if task == "rate_claims":
            rows = [
                {
                    "id": c["id"],
                    "informativeness": _score("c-info", c["text"], "", ""),
                    "novelty": _score("c-novo", c["text"], "", ""),
                    "relevance": _score("c-relv", c["text"], "", ""),
                    "implication_scope": _score("c-imsc", c["text"], "", ""),
                }
                for c in ctx["claims"]
            ]
            return json.dumps(rows)
        raise ProviderCallError(f"deterministic provider: unknown task {task!r}")

    def _segment(self, ctx: dict) -> str:
        d0, d1 = ctx["discussion"]
        run = int(ctx.get("run", 0))
        proposals = []
        start = d0
        seg_idx = 0
        while start <= d1:
            size = 6 + ((run + seg_idx) % 3) - 1  # 5..7 utterances, varies per run
            end = min(d1, start + size - 1)
            if d1 - end < 3:  # avoid trailing slivers
                end = d1
            proposals.append(
                {
                    "segment_index": seg_idx,
                    "utterances_interval": [start, end],
                    "segment_subtopic": f"subtopic {seg_idx + 1}",
                }
            )
            start = end + 1
            seg_idx += 1
        return json.dumps(proposals)

    def _extract(self, ctx: dict) -> str:
        claims = []
        for sentence in split_sentences(ctx["text"]):
            stripped = _strip_hedges(sentence)
            if not content_lemmas(stripped):
                continue  # filler-only sentence, nothing propositional
            claims.append(
                {
                    "speaker": ctx["speaker"],
                    "target_speaker": "Everyone",
                    "claim": stripped,
                    "turn_id": str(ctx["turn_id"]),
                }
            )
        return json.dumps({"memories": claims})
