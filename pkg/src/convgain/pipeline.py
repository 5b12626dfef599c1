"""Stage orchestration: preprocess through report over a fixed artifact layout.

All artifacts are deterministic under mock providers and a fixed seed; wall
times and latency data live only in the run manifest and the prompt cache.
"""

from __future__ import annotations

import csv
import json
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import contexts, memory, proxies, rating, segmentation, stats
from .config import PipelineConfig, RunManifest, file_digest
from .contexts import Condition, SummaryVariant
from .gateway import Gateway
from .ordinal import OrdinalModelFit, compare_models, fit_ordinal
from .providers import DeterministicChatProvider, HashEmbedder, HashLogprobProvider
from .transcripts import (
    Episode,
    apply_fragment_rule,
    apply_skip_rules,
    descriptive_stats,
    load_episode,
    write_episode,
)

STAGES = (
    "preprocess",
    "segment",
    "consolidate",
    "summarise",
    "rate",
    "features",
    "stats",
    "report",
)

STAGE_DEPS = {
    "preprocess": (),
    "segment": ("preprocess",),
    "consolidate": ("preprocess",),
    "summarise": ("segment", "consolidate"),
    "rate": ("segment", "consolidate"),
    "features": ("consolidate", "rate"),
    "stats": ("segment", "consolidate", "rate", "features"),
    "report": ("stats",),
}

MODEL_ASPECT_KEYS = {
    "novelty": "novo",
    "relevance": "relv",
    "implication_scope": "imsc",
}


class MissingArtifactError(RuntimeError):
    def __init__(self, stage: str, needed_by: str):
        self.stage = stage
        super().__init__(
            f"stage {needed_by!r} needs outputs of stage {stage!r}; run it first"
        )


def build_gateway(config: PipelineConfig) -> Gateway:
    chat_spec = config.providers.get("chat")
    if chat_spec is None or chat_spec.kind == "none":
        raise ValueError("a chat provider is required")
    embed_spec = config.providers.get("embedding")
    logprob_spec = config.providers.get("logprob")
    cache_dir = (
        config.out_dir / "cache" if config.cache_policy != "off" else None
    )
    return Gateway(
        chat_providers={"chat": DeterministicChatProvider()},
        embedder=HashEmbedder() if embed_spec and embed_spec.kind == "mock" else None,
        logprob_provider=(
            HashLogprobProvider()
            if logprob_spec and logprob_spec.kind == "mock"
            else None
        ),
        cache_dir=cache_dir,
        cache_policy=config.cache_policy if config.cache_policy != "off" else "off",
    )


def _stage_dir(config: PipelineConfig, stage: str) -> Path:
    return config.out_dir / stage


def _marker(config: PipelineConfig, stage: str) -> Path:
    return _stage_dir(config, stage) / ".complete"


def _check_deps(config: PipelineConfig, stage: str) -> None:
    for dep in STAGE_DEPS[stage]:
        if not _marker(config, dep).exists():
            raise MissingArtifactError(dep, stage)


def _episode_ids(config: PipelineConfig) -> list[str]:
    return [p.stem for p in config.episodes]


def _load_stage_episode(config: PipelineConfig, episode_id: str) -> Episode:
    return load_episode(_stage_dir(config, "preprocess") / f"{episode_id}.jsonl")


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run_preprocess(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    out = _stage_dir(config, "preprocess")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for src in config.episodes:
        episode = apply_skip_rules(load_episode(src))
        dst = out / f"{src.stem}.jsonl"
        write_episode(episode, dst)
        outputs[dst.name] = file_digest(dst)
    _marker(config, "preprocess").touch()
    return outputs


def run_segment(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "segment")
    out = _stage_dir(config, "segment")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    stats_rows = []
    for episode_id in _episode_ids(config):
        episode = _load_stage_episode(config, episode_id)
        proposals = segmentation.propose_segments(episode, config.segmentation, gateway)
        profile = segmentation.vote_breakpoints(
            proposals, config.segmentation, episode.discussion_range
        )
        cuts = segmentation.select_breakpoints(profile, config.segmentation)
        segments = segmentation.segments_from_breakpoints(profile, cuts, proposals)
        segments = segmentation.merge_segments(segments, episode, config.segmentation)
        selectable = apply_fragment_rule(episode)
        k = min(2, len(segments))
        selected = segmentation.select_annotation_segments(
            selectable, segments, k, context_benefit={}
        )
        selected_ids = sorted(s.segment_index for s in selected)
        payload = {
            "episode_id": episode_id,
            "discussion": list(episode.discussion_range),
            "segments": [
                {
                    "segment_index": s.segment_index,
                    "interval": list(s.interval),
                    "subtopic": s.subtopic,
                    "boundary_confidence": s.boundary_confidence,
                }
                for s in segments
            ],
            "selected_for_annotation": selected_ids,
        }
        dst = out / f"{episode_id}.segments.json"
        _write_json(dst, payload)
        outputs[dst.name] = file_digest(dst)
        report = descriptive_stats(
            episode,
            [
                segmentation.Segment(
                    s.segment_index, tuple(s.interval), s.subtopic, s.boundary_confidence
                )
                for s in segments
            ],
        )
        stats_rows.append(report)
    stats_path = out / "descriptive_stats.csv"
    with open(stats_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode_id", "metric", "value"])
        for report in stats_rows:
            for metric, value in report.rows():
                if metric == "episode_id":
                    continue
                writer.writerow([report.episode_id, metric, value])
    outputs[stats_path.name] = file_digest(stats_path)
    _marker(config, "segment").touch()
    return outputs


def _load_segments(config: PipelineConfig, episode_id: str) -> dict:
    path = _stage_dir(config, "segment") / f"{episode_id}.segments.json"
    return json.loads(path.read_text(encoding="utf-8"))


def run_consolidate(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "consolidate")
    out = _stage_dir(config, "consolidate")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for episode_id in _episode_ids(config):
        episode = _load_stage_episode(config, episode_id)
        store = memory.consolidate_episode(episode, gateway, config.memory)
        snap = out / f"{episode_id}.store.json"
        snap.write_text(store.snapshot_json(), encoding="utf-8")
        timeline = out / f"{episode_id}.timeline.jsonl"
        timeline.write_text(
            "".join(
                json.dumps(u.to_dict(), sort_keys=True) + "\n" for u in store.timeline
            ),
            encoding="utf-8",
        )
        outputs[snap.name] = file_digest(snap)
        outputs[timeline.name] = file_digest(timeline)
    _marker(config, "consolidate").touch()
    return outputs


def load_timeline(config: PipelineConfig, episode_id: str) -> list[memory.MemoryUpdate]:
    path = _stage_dir(config, "consolidate") / f"{episode_id}.timeline.jsonl"
    return [
        memory.MemoryUpdate.from_dict(json.loads(line))
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def _selected_segments(config: PipelineConfig, episode_id: str):
    data = _load_segments(config, episode_id)
    by_index = {s["segment_index"]: s for s in data["segments"]}
    return [
        segmentation.Segment(
            segment_index=s["segment_index"],
            interval=tuple(s["interval"]),
            subtopic=s["subtopic"],
            boundary_confidence=s["boundary_confidence"],
        )
        for s in (by_index[i] for i in data["selected_for_annotation"])
    ]


def run_summarise(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "summarise")
    out = _stage_dir(config, "summarise")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for episode_id in _episode_ids(config):
        episode = _load_stage_episode(config, episode_id)
        timeline = load_timeline(config, episode_id)
        full_store = memory.replay_timeline(timeline, gateway)
        per_segment = {}
        for segment in _selected_segments(config, episode_id):
            store = memory.store_at_turn(full_store, segment.interval[0], gateway)
            items = contexts.retrieve_for_segment(
                segment, episode, store, config.memory.retrieval_k * 4, gateway
            )
            if not items:
                per_segment[str(segment.segment_index)] = None
                continue
            summary = contexts.summarise_memory(
                episode.topic, items, SummaryVariant.MEMORY_BASED, gateway
            )
            per_segment[str(segment.segment_index)] = {
                "text": summary.text,
                "variant": summary.variant.value,
                "word_count": summary.word_count,
            }
        final = contexts.summarise_memory(
            episode.topic,
            list(full_store.items.values()),
            SummaryVariant.MEMORY_BASED,
            gateway,
        )
        dst = out / f"{episode_id}.summaries.json"
        _write_json(
            dst,
            {
                "episode_id": episode_id,
                "per_segment": per_segment,
                "final": {
                    "text": final.text,
                    "variant": final.variant.value,
                    "word_count": final.word_count,
                },
            },
        )
        outputs[dst.name] = file_digest(dst)
    _marker(config, "summarise").touch()
    return outputs


def run_rate(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "rate")
    out = _stage_dir(config, "rate")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for episode_id in _episode_ids(config):
        episode = _load_stage_episode(config, episode_id)
        timeline = load_timeline(config, episode_id)
        full_store = memory.replay_timeline(timeline, gateway)
        lines = []
        claim_ratings: dict[str, list[dict]] = {}
        for segment in _selected_segments(config, episode_id):
            store = memory.store_at_turn(full_store, segment.interval[0], gateway)
            for condition_name in config.conditions:
                condition = Condition(condition_name)
                bundle = contexts.build_context(
                    episode, segment, store, condition, gateway,
                    retrieval_k=config.memory.retrieval_k * 4,
                )
                bundle = contexts.ContextBundle(
                    topic=bundle.topic,
                    condition=bundle.condition,
                    prior_block=bundle.prior_block,
                    short_window=bundle.short_window,
                    targets=tuple(
                        t for t in bundle.targets if not t["skipped"]
                    ),
                    flags=bundle.flags,
                )
                if not bundle.targets:
                    continue
                for run in range(config.rating_runs):
                    source = f"model-run-{run}"
                    for record in rating.rate_segment_info(
                        bundle, gateway, source_id=source, run=run
                    ) + rating.rate_segment_aspects(
                        bundle, gateway, source_id=source, run=run
                    ):
                        lines.append(
                            json.dumps(
                                {
                                    "segment_index": segment.segment_index,
                                    "utterance_index": record.utterance_index,
                                    "source_id": record.source_id,
                                    "condition": record.condition,
                                    "scores": dict(sorted(record.scores.items())),
                                },
                                sort_keys=True,
                            )
                        )
            # per-claim ratings for the aggregation grid, one batch per utterance
            for idx in segment.indices():
                utt = episode.utterances[idx]
                if utt.skipped:
                    continue
                updates = [u for u in timeline if u.source.turn_id == idx]
                if not updates:
                    continue
                prior = memory.store_at_turn(full_store, idx, gateway)
                claims = [
                    {"id": f"{idx}:{i}", "text": u.source.claim_text}
                    for i, u in enumerate(updates)
                ]
                rated = rating.rate_claims(
                    claims,
                    [item.claim_text for item in prior.items.values()],
                    episode.topic,
                    gateway,
                )
                claim_ratings[str(idx)] = [
                    {"claim_id": r.claim_id, "scores": dict(sorted(r.scores.items()))}
                    for r in rated
                ]
        ratings_path = out / f"{episode_id}.ratings.jsonl"
        ratings_path.write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8"
        )
        claims_path = out / f"{episode_id}.claim_ratings.json"
        _write_json(claims_path, claim_ratings)
        outputs[ratings_path.name] = file_digest(ratings_path)
        outputs[claims_path.name] = file_digest(claims_path)
    _marker(config, "rate").touch()
    return outputs


def load_ratings(config: PipelineConfig, episode_id: str) -> list[dict]:
    path = _stage_dir(config, "rate") / f"{episode_id}.ratings.jsonl"
    return [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def model_aspect_means(rows: list[dict], condition: str) -> dict[int, dict[str, float]]:
    """Mean model aspect scores per utterance for one condition, info included."""
    sums: dict[int, dict[str, list[float]]] = {}
    for row in rows:
        if row["condition"] != condition:
            continue
        per = sums.setdefault(row["utterance_index"], {})
        for name, value in row["scores"].items():
            key = "info" if name == "cig" else MODEL_ASPECT_KEYS.get(name)
            if key:
                per.setdefault(key, []).append(float(value))
    return {
        idx: {k: sum(v) / len(v) for k, v in per.items()}
        for idx, per in sums.items()
    }


def run_features(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "features")
    out = _stage_dir(config, "features")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for episode_id in _episode_ids(config):
        episode = _load_stage_episode(config, episode_id)
        timeline = load_timeline(config, episode_id)
        predictions = model_aspect_means(
            load_ratings(config, episode_id), Condition.MEMORY_SUMMARY.value
        )
        model = proxies.fit_episode_tfidf(episode)
        state = proxies.EpisodeVocabState()
        vectors = []
        eval_lengths = {}
        for utt in episode.utterances:
            vec = proxies.compute_lexical_features(
                episode, utt.index, model, state
            )
            trace = gateway.logprobs(utt.text)
            proxies.compute_surprisal_features(vec, trace)
            eval_lengths[utt.index] = len(trace) if trace else 0
            updates = [u for u in timeline if u.source.turn_id == utt.index]
            proxies.compute_memory_dynamics(
                vec, updates, predictions.get(utt.index)
            )
            vectors.append(vec)
        proxies.normalize_surprisal(vectors, eval_lengths)
        dst = out / f"{episode_id}.features.csv"
        proxies.write_feature_csv(dst, vectors)
        outputs[dst.name] = file_digest(dst)
    _marker(config, "features").touch()
    return outputs


def synthesize_annotators(
    config: PipelineConfig, episode_id: str, target_indices: list[int],
    timeline: list[memory.MemoryUpdate],
) -> dict[str, dict[int, int]]:
    """Seeded synthetic annotators whose scores track memory-change counts."""
    deltas = {}
    for idx in target_indices:
        updates = [u for u in timeline if u.source.turn_id == idx]
        deltas[idx] = sum(1 for u in updates if u.action is not memory.Action.NONE)
    dmin = min(deltas.values(), default=0)
    dmax = max(deltas.values(), default=0)
    span = max(1, dmax - dmin)
    out: dict[str, dict[int, int]] = {}
    for j in range(config.annotators):
        seed_material = f"{config.seed}:{episode_id}:annotator:{j}".encode("utf-8")
        rng = np.random.default_rng(int.from_bytes(seed_material, "big") % (2**32))
        ratings = {}
        for idx in target_indices:
            # spread the episode's memory-change range over the interior of
            # the 1..4 scale so annotator noise can disagree in both directions
            raw = 1.25 + 2.5 * (deltas[idx] - dmin) / span
            raw += rng.normal(0.0, config.annotator_noise)
            ratings[idx] = int(min(4, max(1, round(raw))))
        out[f"annotator-{j}"] = ratings
    return out


def _rated_indices(config: PipelineConfig, episode_id: str) -> list[int]:
    rows = load_ratings(config, episode_id)
    return sorted({row["utterance_index"] for row in rows})


def run_stats(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "stats")
    out = _stage_dir(config, "stats")
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    all_soft: dict[tuple[str, int], float] = {}
    all_features: dict[tuple[str, int], dict[str, float | None]] = {}
    all_annotators: dict[str, dict[str, dict[int, int]]] = {}
    all_claim_ratings: dict[tuple[str, int], list[rating.ClaimRating]] = {}
    all_aspects: dict[tuple[str, int], dict[str, float]] = {}
    per_episode: dict[str, dict] = {}

    for episode_id in _episode_ids(config):
        episode = _load_stage_episode(config, episode_id)
        timeline = load_timeline(config, episode_id)
        indices = _rated_indices(config, episode_id)
        annotators = synthesize_annotators(config, episode_id, indices, timeline)
        all_annotators[episode_id] = annotators
        soft = {
            idx: sum(annotators[a][idx] for a in annotators) / len(annotators)
            for idx in indices
        }
        for idx, value in soft.items():
            all_soft[(episode_id, idx)] = value
        feature_rows = proxies.read_feature_csv(
            _stage_dir(config, "features") / f"{episode_id}.features.csv"
        )
        for row in feature_rows:
            all_features[(episode_id, int(row["utterance_index"]))] = row
        claims_raw = json.loads(
            (_stage_dir(config, "rate") / f"{episode_id}.claim_ratings.json").read_text(
                encoding="utf-8"
            )
        )
        for idx_str, rated in claims_raw.items():
            all_claim_ratings[(episode_id, int(idx_str))] = [
                rating.ClaimRating(claim_id=r["claim_id"], scores=r["scores"])
                for r in rated
            ]
        rows = load_ratings(config, episode_id)
        for idx, per in model_aspect_means(rows, Condition.MEMORY_SUMMARY.value).items():
            all_aspects[(episode_id, idx)] = per

        # agreement + LOO MAE on the synthetic annotators
        qc_input = {
            a: {str(i): v for i, v in per.items()} for a, per in annotators.items()
        }
        report = stats.quality_control(qc_input)
        loo_per, loo_mean, loo_std = stats.human_loo_mae(qc_input)

        # condition MAE against the memory_summary reference, per run pair
        def run_dicts(condition: str) -> list[dict[tuple[int, str], float]]:
            runs: list[dict[tuple[int, str], float]] = [
                {} for _ in range(config.rating_runs)
            ]
            for row in rows:
                if row["condition"] != condition:
                    continue
                run = int(row["source_id"].rsplit("-", 1)[1])
                for name, value in row["scores"].items():
                    runs[run][(row["utterance_index"], name)] = float(value)
            return runs

        reference = run_dicts(Condition.MEMORY_SUMMARY.value)
        condition_table = {}
        for condition_name in config.conditions:
            if condition_name == Condition.MEMORY_SUMMARY.value:
                continue
            candidate = run_dicts(condition_name)
            if not any(candidate) or not any(reference):
                continue
            try:
                condition_table[condition_name] = {
                    aspect: {"mae": m, "std": s}
                    for aspect, (m, s) in stats.condition_mae(
                        candidate, reference
                    ).items()
                }
            except ValueError:
                continue

        lag = stats.moderator_lag(episode, soft)
        per_episode[episode_id] = {
            "agreement": {
                "krippendorff_alpha": report.krippendorff_alpha,
                "mean_qwk": report.mean_qwk,
                "directive": report.directive,
                "dropped": list(report.dropped),
                "surviving": list(report.surviving),
            },
            "human_loo_mae": {
                "per_annotator": loo_per,
                "mean": loo_mean,
                "std": loo_std,
            },
            "condition_mae": condition_table,
            "moderator_lag": {
                "cells": [
                    {
                        "act": act,
                        "lag": lag_n,
                        "mean_cig": mean,
                        "count": count,
                        "coverage_pct": lag.coverage_pct.get(act, 0.0),
                    }
                    for (act, lag_n, mean, count, _) in lag.rows()
                ],
                "baseline_mean": lag.baseline_mean,
            },
            "annotators": {
                a: {str(i): v for i, v in per.items()}
                for a, per in annotators.items()
            },
        }

    # feature correlations with the soft label, pooled across episodes
    keys = sorted(all_soft)
    soft_series = [all_soft[k] for k in keys]
    correlations = {}
    for column in proxies.FEATURE_COLUMNS:
        series = []
        usable = True
        for k in keys:
            value = all_features.get(k, {}).get(column)
            if value is None:
                usable = False
                break
            series.append(value)
        if not usable or len(series) < 2:
            continue
        try:
            r = stats.pearson(series, soft_series)
        except (ValueError, stats.DegenerateDataError):
            continue
        correlations[column] = {"r": r, "abs_r": abs(r)}

    # aggregation-operator grid against the soft labels
    flat_claims = {
        i: all_claim_ratings[k]
        for i, k in enumerate(keys)
        if k in all_claim_ratings
    }
    flat_soft = {
        i: all_soft[k] for i, k in enumerate(keys) if k in all_claim_ratings
    }
    grid = None
    if flat_claims:
        result = rating.run_aggregation_grid(flat_claims, flat_soft)
        grid = {
            "cells": [
                {"claim_op": c, "aspect_op": a, "mae": m}
                for c, a, m in result.rows()
            ],
            "used_utterances": result.used_utterances,
        }

    # ordinal model comparison over pooled labels
    label_source = []
    for k in keys:
        episode_id = k[0]
        label_source.append(all_annotators[episode_id]["annotator-0"][k[1]])
    ordinal_fits: list[OrdinalModelFit] = []
    if len(keys) >= 20:
        base = [float(all_features[k]["n_tok"]) for k in keys]
        sets: dict[str, dict[str, list[float]]] = {"base": {"n_tok": base}}
        for aspect in ("novo", "relv", "imsc"):
            series = [all_aspects.get(k, {}).get(aspect) for k in keys]
            if any(v is None for v in series):
                continue
            sets[f"base+{aspect}"] = {"n_tok": base, aspect: series}
        if all(f"base+{a}" in sets for a in ("novo", "relv", "imsc")):
            sets["base+3"] = {
                "n_tok": base,
                **{
                    a: sets[f"base+{a}"][a]
                    for a in ("novo", "relv", "imsc")
                },
            }
        for label, predictors in sets.items():
            ordinal_fits.append(fit_ordinal(label_source, predictors, label))
    ordinal_payload = {
        "fits": [
            {
                "label": f.label,
                "thresholds": list(f.thresholds),
                "coefficients": f.coefficients,
                "log_likelihood": f.log_likelihood,
                "aic": f.aic,
                "converged": f.converged,
            }
            for f in ordinal_fits
        ],
        "ranking": [
            {"label": label, "aic": aic, "delta_aic": delta}
            for label, aic, delta in compare_models(ordinal_fits)
        ],
    }

    # normalized label distribution over all synthetic annotations
    counts = {level: 0 for level in stats.LEVELS}
    total = 0
    for per_ann in all_annotators.values():
        for ratings_map in per_ann.values():
            for value in ratings_map.values():
                counts[value] += 1
                total += 1
    distribution = {
        str(level): (counts[level] / total if total else 0.0)
        for level in stats.LEVELS
    }

    payload = {
        "episodes": per_episode,
        "correlations": correlations,
        "aggregation_grid": grid,
        "ordinal": ordinal_payload,
        "label_distribution": distribution,
    }
    dst = out / "stats.json"
    _write_json(dst, payload)
    outputs[dst.name] = file_digest(dst)
    _marker(config, "stats").touch()
    return outputs


def run_report(config: PipelineConfig, gateway: Gateway) -> dict[str, str]:
    _check_deps(config, "report")
    out = _stage_dir(config, "report")
    out.mkdir(parents=True, exist_ok=True)
    data = json.loads(
        (_stage_dir(config, "stats") / "stats.json").read_text(encoding="utf-8")
    )
    outputs = {}

    def emit(name: str, header: list[str], rows: list[list]) -> None:
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        outputs[name] = file_digest(path)

    emit(
        "agreement.csv",
        ["episode_id", "krippendorff_alpha", "directive", "dropped", "surviving"],
        [
            [
                episode_id,
                f"{ep['agreement']['krippendorff_alpha']:.6f}",
                ep["agreement"]["directive"] or "",
                "|".join(ep["agreement"]["dropped"]),
                "|".join(ep["agreement"]["surviving"]),
            ]
            for episode_id, ep in sorted(data["episodes"].items())
        ],
    )
    emit(
        "human_mae.csv",
        ["episode_id", "annotator", "loo_mae"],
        [
            [episode_id, annotator, f"{value:.6f}"]
            for episode_id, ep in sorted(data["episodes"].items())
            for annotator, value in sorted(ep["human_loo_mae"]["per_annotator"].items())
        ],
    )
    emit(
        "condition_mae.csv",
        ["episode_id", "condition", "aspect", "mae", "std"],
        [
            [episode_id, condition, aspect, f"{cell['mae']:.6f}", f"{cell['std']:.6f}"]
            for episode_id, ep in sorted(data["episodes"].items())
            for condition, aspects in sorted(ep["condition_mae"].items())
            for aspect, cell in sorted(aspects.items())
        ],
    )
    emit(
        "correlations.csv",
        ["feature", "r", "abs_r"],
        [
            [feature, f"{cell['r']:.6f}", f"{cell['abs_r']:.6f}"]
            for feature, cell in sorted(
                data["correlations"].items(),
                key=lambda kv: -kv[1]["abs_r"],
            )
        ],
    )
    grid = data.get("aggregation_grid") or {"cells": []}
    emit(
        "heatmap.csv",
        ["claim_op", "aspect_op", "mae"],
        [
            [cell["claim_op"], cell["aspect_op"], f"{cell['mae']:.6f}"]
            for cell in grid["cells"]
        ],
    )
    emit(
        "aic.csv",
        ["label", "aic", "delta_aic"],
        [
            [row["label"], f"{row['aic']:.6f}", f"{row['delta_aic']:.6f}"]
            for row in data["ordinal"]["ranking"]
        ],
    )
    emit(
        "moderator_lag.csv",
        ["episode_id", "act", "lag", "mean_cig", "count", "coverage_pct"],
        [
            [
                episode_id,
                cell["act"],
                cell["lag"],
                f"{cell['mean_cig']:.6f}",
                cell["count"],
                f"{cell['coverage_pct']:.6f}",
            ]
            for episode_id, ep in sorted(data["episodes"].items())
            for cell in ep["moderator_lag"]["cells"]
        ],
    )
    emit(
        "label_distribution.csv",
        ["level", "share"],
        [
            [level, f"{share:.6f}"]
            for level, share in sorted(data["label_distribution"].items())
        ],
    )
    _marker(config, "report").touch()
    return outputs


STAGE_RUNNERS = {
    "preprocess": run_preprocess,
    "segment": run_segment,
    "consolidate": run_consolidate,
    "summarise": run_summarise,
    "rate": run_rate,
    "features": run_features,
    "stats": run_stats,
    "report": run_report,
}


def run_stage(
    stage: str,
    config: PipelineConfig,
    gateway: Gateway,
    manifest: RunManifest,
) -> dict[str, str]:
    calls_before = dict(gateway.provider_calls)
    start = time.perf_counter()
    outputs = STAGE_RUNNERS[stage](config, gateway)
    wall = time.perf_counter() - start
    calls = {
        provider: gateway.provider_calls.get(provider, 0)
        - calls_before.get(provider, 0)
        for provider in gateway.provider_calls
    }
    inputs = {}
    for dep in STAGE_DEPS[stage]:
        entry = manifest.stages.get(dep)
        if entry:
            inputs.update(entry["outputs"])
    manifest.record_stage(stage, inputs, outputs, calls, wall)
    manifest.save(config.out_dir / "manifest.json")
    return outputs


def run_pipeline(
    config: PipelineConfig, stages: tuple[str, ...] = STAGES
) -> RunManifest:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = config.out_dir / "manifest.json"
    if manifest_path.exists():
        manifest = RunManifest.load(manifest_path)
        if manifest.config_digest != config.digest():
            manifest = RunManifest(run_id=uuid.uuid4().hex, config_digest=config.digest())
    else:
        manifest = RunManifest(run_id=uuid.uuid4().hex, config_digest=config.digest())
    gateway = build_gateway(config)
    for stage in stages:
        run_stage(stage, config, gateway, manifest)
    return manifest
