"""Per-utterance informativeness proxies: lexical, novelty, surprisal, memory."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from sklearn.feature_extraction.text import TfidfVectorizer

from .memory import Action, MemoryUpdate
from .textanalysis import RuleBasedAnalyzer, TextAnalyzer
from .transcripts import Episode

ASPECT_KEYS = ("info", "novo", "relv", "imsc")

FEATURE_COLUMNS = (
    "n_tok",
    "n_cont",
    "tfidf_sum",
    "tfidf_max",
    "tfidf_mean",
    "specificity_mean_idf",
    "specificity_median_idf",
    "novel_word_count",
    "novel_word_density",
    "entity_count",
    "novel_entity_count",
    "novel_entity_ratio",
    "novel_entity_density_token",
    "sent_avg_h",
    "sum_h",
    "norm_sent_avg_h",
    "top_quartile_avg_logprob",
    "claim_count",
    "mem_delta",
    "mem_delta_info",
    "mem_delta_novo",
    "mem_delta_relv",
    "mem_delta_imsc",
    "mem_delta_triad",
)


@dataclass
class ProxyFeatureVector:
    utterance_index: int
    n_tok: int = 0
    n_cont: int = 0
    tfidf_sum: float = 0.0
    tfidf_max: float = 0.0
    tfidf_mean: float = 0.0
    specificity_mean_idf: float = 0.0
    specificity_median_idf: float = 0.0
    novel_word_count: int = 0
    novel_word_density: float = 0.0
    entity_count: int = 0
    novel_entity_count: int = 0
    novel_entity_ratio: float = 0.0
    novel_entity_density_token: float = 0.0
    sent_avg_h: float | None = None
    sum_h: float | None = None
    norm_sent_avg_h: float | None = None
    top_quartile_avg_logprob: float | None = None
    claim_count: int = 0
    mem_delta: int = 0
    mem_delta_gated: dict[str, int | None] = field(
        default_factory=lambda: {k: None for k in ASPECT_KEYS}
    )
    mem_delta_triad: int | None = None

    def row(self) -> dict[str, object]:
        out: dict[str, object] = {"utterance_index": self.utterance_index}
        for col in FEATURE_COLUMNS:
            if col.startswith("mem_delta_") and col != "mem_delta_triad":
                out[col] = self.mem_delta_gated[col.removeprefix("mem_delta_")]
            else:
                out[col] = getattr(self, col)
        return out


@dataclass
class EpisodeVocabState:
    seen_lemmas: set[str] = field(default_factory=set)
    seen_entities: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class TfidfModel:
    idf: dict[str, float]  # per retained term
    doc_weights: tuple[dict[str, float], ...]  # per utterance, term -> tf * idf


def fit_episode_tfidf(
    episode: Episode, analyzer: TextAnalyzer | None = None
) -> TfidfModel:
    """Utterance-as-document TF-IDF over content lemmas.

    Smoothed idf(t) = ln((1+N)/(1+df)) + 1; terms with df < 2 or df/N > 0.95
    are excluded; no vector normalization.
    """
    if len(episode.utterances) < 2:
        raise ValueError("TF-IDF fit needs at least 2 utterances")
    analyzer = analyzer or RuleBasedAnalyzer()
    docs = [analyzer.analyze(u.text).content for u in episode.utterances]
    vectorizer = TfidfVectorizer(
        analyzer=lambda doc: doc,
        norm=None,
        min_df=2,
        max_df=0.95,
        lowercase=False,
    )
    try:
        matrix = vectorizer.fit_transform(docs)
    except ValueError:
        # every term pruned: an empty but valid model
        return TfidfModel(idf={}, doc_weights=tuple({} for _ in docs))
    terms = vectorizer.get_feature_names_out()
    idf = {t: float(v) for t, v in zip(terms, vectorizer.idf_)}
    weights = []
    for i in range(matrix.shape[0]):
        row = matrix.getrow(i)
        weights.append(
            {terms[j]: float(v) for j, v in zip(row.indices, row.data) if v != 0.0}
        )
    return TfidfModel(idf=idf, doc_weights=tuple(weights))


def compute_lexical_features(
    episode: Episode,
    utterance_index: int,
    model: TfidfModel,
    state: EpisodeVocabState,
    analyzer: TextAnalyzer | None = None,
) -> ProxyFeatureVector:
    """Length, TF-IDF aggregates, specificity, and cumulative novelty features.

    Mutates `state` after computing features, so call in utterance order.
    """
    analyzer = analyzer or RuleBasedAnalyzer()
    utt = episode.utterances[utterance_index]
    analyzed = analyzer.analyze(utt.text)
    vec = ProxyFeatureVector(utterance_index=utterance_index)
    vec.n_tok = len(analyzed.tokens)
    vec.n_cont = len(analyzed.content)

    weights = model.doc_weights[utterance_index] if model.doc_weights else {}
    nonzero = sorted(weights.values())
    if nonzero:
        vec.tfidf_sum = float(sum(nonzero))
        vec.tfidf_max = float(nonzero[-1])
        vec.tfidf_mean = vec.tfidf_sum / len(nonzero)
    present_idf = sorted(
        model.idf[t] for t in set(analyzed.content) if t in model.idf
    )
    if present_idf:
        vec.specificity_mean_idf = float(sum(present_idf) / len(present_idf))
        mid = len(present_idf) // 2
        vec.specificity_median_idf = float(
            present_idf[mid]
            if len(present_idf) % 2
            else (present_idf[mid - 1] + present_idf[mid]) / 2.0
        )

    lemma_set = set(analyzed.content)
    vec.novel_word_count = len(lemma_set - state.seen_lemmas)
    vec.novel_word_density = vec.novel_word_count / max(1, vec.n_cont)

    entities = analyzed.entities
    entity_set = set(entities)
    vec.entity_count = len(entities)
    novel_set = entity_set - state.seen_entities
    vec.novel_entity_count = sum(1 for e in entities if e in novel_set)
    vec.novel_entity_ratio = (
        vec.novel_entity_count / vec.entity_count if vec.entity_count else 0.0
    )
    vec.novel_entity_density_token = vec.novel_entity_count / max(1, vec.n_tok)

    state.seen_lemmas |= lemma_set
    state.seen_entities |= entity_set
    return vec


def compute_surprisal_features(
    vec: ProxyFeatureVector, trace: list[tuple[str, float]] | None
) -> ProxyFeatureVector:
    """Surprisal aggregates from a per-token base-2 logprob trace.

    s_t = -logprob_t; null trace leaves all four fields null. The batch-level
    norm_sent_avg_h is filled in later by `normalize_surprisal`.
    """
    if trace is None or not trace:
        return vec
    logprobs = [lp for _, lp in trace]
    surprisals = [-lp for lp in logprobs]
    n = len(surprisals)
    vec.sent_avg_h = sum(surprisals) / n
    vec.sum_h = float(sum(surprisals))
    top = sorted(logprobs, reverse=True)[: max(1, math.ceil(n / 4))]
    vec.top_quartile_avg_logprob = sum(top) / len(top)
    return vec


def normalize_surprisal(
    vectors: list[ProxyFeatureVector], eval_lengths: dict[int, int]
) -> None:
    """Set norm_sent_avg_h = s_bar / mean(s_bar over same evaluated length T).

    Length buckets of size 1 self-normalize to 1.0.
    """
    buckets: dict[int, list[float]] = {}
    for vec in vectors:
        if vec.sent_avg_h is None:
            continue
        buckets.setdefault(eval_lengths[vec.utterance_index], []).append(vec.sent_avg_h)
    for vec in vectors:
        if vec.sent_avg_h is None:
            continue
        xs = buckets[eval_lengths[vec.utterance_index]]
        mean = sum(xs) / len(xs)
        vec.norm_sent_avg_h = vec.sent_avg_h / mean if mean != 0.0 else 0.0


def compute_memory_dynamics(
    vec: ProxyFeatureVector,
    updates: list[MemoryUpdate],
    aspect_predictions: dict[str, float] | None,
) -> ProxyFeatureVector:
    """Claim/memory-change counts, gated by predicted aspect scores > 2.

    Gated fields stay null when no predictions are available (the utterance was
    not part of a rated segment).
    """
    vec.claim_count = len(updates)
    vec.mem_delta = sum(1 for u in updates if u.action is not Action.NONE)
    if aspect_predictions is None:
        vec.mem_delta_gated = {k: None for k in ASPECT_KEYS}
        vec.mem_delta_triad = None
        return vec
    for key in ASPECT_KEYS:
        gate = aspect_predictions.get(key, 0.0) > 2
        vec.mem_delta_gated[key] = vec.mem_delta if gate else 0
    triad = all(aspect_predictions.get(k, 0.0) > 2 for k in ("novo", "relv", "imsc"))
    vec.mem_delta_triad = vec.mem_delta if triad else 0
    return vec


def write_feature_csv(path: Path, vectors: list[ProxyFeatureVector]) -> None:
    """One row per utterance, stable column order, nulls as empty cells."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("utterance_index",) + FEATURE_COLUMNS)
        for vec in sorted(vectors, key=lambda v: v.utterance_index):
            row = vec.row()
            writer.writerow(
                "" if row[col] is None else row[col]
                for col in ("utterance_index",) + FEATURE_COLUMNS
            )


def read_feature_csv(path: Path) -> list[dict[str, float | None]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                {k: (None if v == "" else float(v)) for k, v in record.items()}
            )
    return rows
