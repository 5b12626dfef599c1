"""Ordinal rating of utterances and claims, plus score aggregation operators."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .contexts import Condition, ContextBundle
from .gateway import Gateway, PromptRequest

ASPECTS = ("novelty", "relevance", "implication_scope")

CLAIM_OPS = ("mean", "max", "top2_mean", "top_quartile_mean", "softmax_weighted", "median")
ASPECT_OPS = ("min", "mean", "max", "softmax", "product_root")


class RatingIndexError(ValueError):
    """Response indices do not match the bundle's target indices."""

    def __init__(self, missing, extra, duplicates):
        self.missing = sorted(missing)
        self.extra = sorted(extra)
        self.duplicates = sorted(duplicates)
        super().__init__(
            f"index mismatch: missing={self.missing} extra={self.extra} "
            f"duplicates={self.duplicates}"
        )


@dataclass(frozen=True)
class RatingRecord:
    utterance_index: int
    source_id: str
    condition: str  # a Condition value or "human"
    scores: dict[str, int]  # {"cig": n} or the three aspect scores

    def to_json(self) -> str:
        return json.dumps(
            {
                "utterance_index": self.utterance_index,
                "source_id": self.source_id,
                "condition": self.condition,
                "scores": dict(sorted(self.scores.items())),
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "RatingRecord":
        d = json.loads(line)
        return RatingRecord(
            utterance_index=d["utterance_index"],
            source_id=d["source_id"],
            condition=d["condition"],
            scores=d["scores"],
        )


@dataclass(frozen=True)
class ClaimRating:
    claim_id: str
    scores: dict[str, int]  # informativeness, novelty, relevance, implication_scope


def _check_indices(rows: list[dict], expected: list[int]) -> None:
    got = [row["utterance_index"] for row in rows]
    duplicates = {i for i in got if got.count(i) > 1}
    missing = set(expected) - set(got)
    extra = set(got) - set(expected)
    if missing or extra or duplicates:
        raise RatingIndexError(missing, extra, duplicates)


def _bundle_prompt(bundle: ContextBundle, dimensions: str) -> str:
    return (
        f"Rate each TARGET utterance on {dimensions} (1-4).\n"
        f"Topic/Goal: {bundle.topic}\n"
        f"Condition: {bundle.condition.value}\n"
        f"Prior block: {json.dumps(bundle.prior_block, sort_keys=True)}\n"
        f"Short window: {json.dumps(list(bundle.short_window), sort_keys=True)}\n"
        f"Targets: {json.dumps(list(bundle.targets), sort_keys=True)}"
    )


def rate_segment_info(
    bundle: ContextBundle,
    gateway: Gateway,
    source_id: str = "model-run-0",
    provider_id: str = "chat",
    model_id: str = "mock",
    run: int = 0,
) -> list[RatingRecord]:
    """One overall information-gain score (1-4) per target utterance."""
    if not bundle.targets:
        raise ValueError("bundle has no target utterances")
    expected = [t["index"] for t in bundle.targets]
    request = PromptRequest.make(
        provider_id,
        model_id,
        _bundle_prompt(bundle, "Informativeness"),
        params={"run": run},
        schema_id="rating_info",
        context={
            "task": "rate_info",
            "condition": bundle.condition.value,
            "run": run,
            "targets": [{"index": t["index"], "text": t["text"]} for t in bundle.targets],
        },
    )
    rows = gateway.complete(request)
    _check_indices(rows, expected)
    return [
        RatingRecord(
            utterance_index=row["utterance_index"],
            source_id=source_id,
            condition=bundle.condition.value,
            scores={"cig": row["informativeness"]},
        )
        for row in sorted(rows, key=lambda r: r["utterance_index"])
    ]


def rate_segment_aspects(
    bundle: ContextBundle,
    gateway: Gateway,
    source_id: str = "model-run-0",
    provider_id: str = "chat",
    model_id: str = "mock",
    run: int = 0,
) -> list[RatingRecord]:
    """Novelty/relevance/implication-scope scores (1-4 each) per target utterance."""
    if not bundle.targets:
        raise ValueError("bundle has no target utterances")
    expected = [t["index"] for t in bundle.targets]
    request = PromptRequest.make(
        provider_id,
        model_id,
        _bundle_prompt(bundle, "Novelty, Relevance, and Implication Scope"),
        params={"run": run},
        schema_id="rating_mix",
        context={
            "task": "rate_mix",
            "condition": bundle.condition.value,
            "run": run,
            "targets": [{"index": t["index"], "text": t["text"]} for t in bundle.targets],
        },
    )
    rows = gateway.complete(request)
    _check_indices(rows, expected)
    return [
        RatingRecord(
            utterance_index=row["utterance_index"],
            source_id=source_id,
            condition=bundle.condition.value,
            scores={aspect: row[aspect] for aspect in ASPECTS},
        )
        for row in sorted(rows, key=lambda r: r["utterance_index"])
    ]


def rate_claims(
    claims: list[dict],  # {"id", "text"}
    existing_memories: list[str],
    topic: str,
    gateway: Gateway,
    provider_id: str = "chat",
    model_id: str = "mock",
) -> list[ClaimRating]:
    """Four-aspect ratings per claim, against the existing-memory baseline."""
    if not claims:
        raise ValueError("claims must be non-empty")
    request = PromptRequest.make(
        provider_id,
        model_id,
        (
            f"Rate each TARGET claim (1-4 on four dimensions).\nTopic: {topic}\n"
            f"Existing memories: {json.dumps(existing_memories, sort_keys=True)}\n"
            f"Claims: {json.dumps(claims, sort_keys=True)}"
        ),
        schema_id="claim_rating",
        context={"task": "rate_claims", "claims": claims},
    )
    rows = gateway.complete(request)
    known = {str(c["id"]) for c in claims}
    out = []
    for row in rows:
        claim_id = str(row["id"])
        if claim_id not in known:
            raise ValueError(f"unknown claim id in response: {claim_id}")
        out.append(
            ClaimRating(
                claim_id=claim_id,
                scores={
                    "informativeness": row["informativeness"],
                    "novelty": row["novelty"],
                    "relevance": row["relevance"],
                    "implication_scope": row["implication_scope"],
                },
            )
        )
    missing = known - {r.claim_id for r in out}
    if missing:
        raise ValueError(f"claims missing from response: {sorted(missing)}")
    return out


def aggregate_claims(scores: list[float], claim_op: str, tau: float = 1.0) -> float:
    """Pool per-claim scores for one aspect into a single value."""
    if not scores:
        raise ValueError("at least one claim score required")
    xs = sorted(scores, reverse=True)
    n = len(xs)
    if claim_op == "mean":
        return sum(xs) / n
    if claim_op == "max":
        return xs[0]
    if claim_op == "median":
        mid = n // 2
        return xs[mid] if n % 2 else (xs[mid - 1] + xs[mid]) / 2.0
    if claim_op == "top2_mean":
        top = xs[: min(2, n)]
        return sum(top) / len(top)
    if claim_op == "top_quartile_mean":
        size = max(1, math.ceil(n / 4))
        return sum(xs[:size]) / size
    if claim_op == "softmax_weighted":
        weights = [math.exp(x / tau) for x in xs]
        total = sum(weights)
        return sum(w * x for w, x in zip(weights, xs)) / total
    raise ValueError(f"unknown claim_op {claim_op!r}")


def combine_aspects(
    novelty: float, relevance: float, scope: float, aspect_op: str, tau: float = 1.0
) -> float:
    """Combine the three aspect scores into one information-gain estimate."""
    vals = (novelty, relevance, scope)
    if aspect_op == "min":
        return min(vals)
    if aspect_op == "mean":
        return sum(vals) / 3.0
    if aspect_op == "max":
        return max(vals)
    if aspect_op == "softmax":
        weights = [math.exp(v / tau) for v in vals]
        total = sum(weights)
        return sum(w * v for w, v in zip(weights, vals)) / total
    if aspect_op == "product_root":
        return (novelty * relevance * scope) ** (1.0 / 3.0)
    raise ValueError(f"unknown aspect_op {aspect_op!r}")


@dataclass(frozen=True)
class GridResult:
    mae: dict[tuple[str, str], float]  # (claim_op, aspect_op) -> MAE
    used_utterances: int
    excluded_utterances: tuple[int, ...]  # utterances with zero rated claims

    def rows(self) -> list[tuple[str, str, float]]:
        return [(c, a, self.mae[(c, a)]) for c, a in sorted(self.mae)]


def run_aggregation_grid(
    claim_ratings_per_utterance: dict[int, list[ClaimRating]],
    soft_labels: dict[int, float],
    claim_ops: tuple[str, ...] = CLAIM_OPS,
    aspect_ops: tuple[str, ...] = ASPECT_OPS,
    tau: float = 1.0,
) -> GridResult:
    """MAE of min/mean/... estimates against human soft labels, per operator pair."""
    usable = []
    excluded = []
    for idx, label in sorted(soft_labels.items()):
        ratings = claim_ratings_per_utterance.get(idx, [])
        if ratings:
            usable.append((idx, label, ratings))
        else:
            excluded.append(idx)
    if not usable:
        raise ValueError("no utterance has both claims and a soft label")
    mae: dict[tuple[str, str], float] = {}
    for claim_op in claim_ops:
        per_aspect = []
        for _, label, ratings in usable:
            agg = {
                aspect: aggregate_claims([r.scores[aspect] for r in ratings], claim_op, tau)
                for aspect in ASPECTS
            }
            per_aspect.append((label, agg))
        for aspect_op in aspect_ops:
            errors = [
                abs(
                    combine_aspects(
                        agg["novelty"], agg["relevance"], agg["implication_scope"],
                        aspect_op, tau,
                    )
                    - label
                )
                for label, agg in per_aspect
            ]
            mae[(claim_op, aspect_op)] = sum(errors) / len(errors)
    return GridResult(mae=mae, used_utterances=len(usable), excluded_utterances=tuple(excluded))
