"""Deterministic rule-based text analysis: tokens, content lemmas, entities.

Ships as the default analyzer so the whole proxy-feature suite runs without
external NLP models. The interface is pluggable: a richer analyzer (e.g. one
backed by a trained tagger restricted to the standard entity label set
PERSON/ORG/GPE/LOC/NORP/EVENT/WORK_OF_ART/LAW/PRODUCT/FAC/LANGUAGE) can be
substituted anywhere a `TextAnalyzer` is accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

_TOKEN_RE = re.compile(r"\w+(?:'\w+)?|[^\w\s]")

# Fixed stopword list; deliberately small and frozen for reproducibility.
STOPWORDS = frozenset(
    """
    a about above after again all also am an and any are as at be because been
    before being below between both but by could did do does doing down during
    each few for from further had has have having he her here hers him his how
    i if in into is it its itself just me more most my no nor not now of off on
    once only or other our ours out over own same she should so some such than
    that the their theirs them then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours would can may might must shall
    """.split()
)

_SUFFIX_RULES = (
    ("sses", "ss"),
    ("ies", "y"),
    ("ing", ""),
    ("edly", ""),
    ("ed", ""),
    ("es", "e"),
    ("s", ""),
)


def tokenize(text: str) -> list[str]:
    """Tokens with punctuation retained, whitespace excluded."""
    return _TOKEN_RE.findall(text)


def lemmatize(word: str) -> str:
    word = word.lower()
    for suffix, repl in _SUFFIX_RULES:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)] + repl
            if len(stem) >= 3:
                return stem
    return word


def content_lemmas(text: str) -> list[str]:
    """Multiset (ordered list) of content lemmas: alphabetic, non-stopword tokens."""
    out = []
    for tok in tokenize(text):
        if tok.isalpha() and tok.lower() not in STOPWORDS:
            out.append(lemmatize(tok))
    return out


_SENT_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENT_SPLIT_RE.split(text.strip()) if s.strip()]


def extract_entities(text: str) -> list[str]:
    """Capitalization-sequence NER heuristic; returns lowercased surface forms.

    A maximal run of capitalized alphabetic tokens counts as one entity mention,
    except a lone capitalized token at sentence start (likely ordinary casing).
    """
    entities: list[str] = []
    for sentence in split_sentences(text):
        tokens = tokenize(sentence)
        run: list[str] = []
        run_start = 0
        for pos, tok in enumerate(tokens + [""]):
            capitalized = bool(tok) and tok[0].isupper() and tok.isalpha()
            if capitalized:
                if not run:
                    run_start = pos
                run.append(tok)
            else:
                if run and not (len(run) == 1 and run_start == 0):
                    entities.append(" ".join(run).lower())
                run = []
    return entities


@dataclass(frozen=True)
class AnalyzedText:
    tokens: tuple[str, ...]
    content: tuple[str, ...]  # content lemmas, multiset order preserved
    entities: tuple[str, ...]  # lowercased surface forms, multiset


class TextAnalyzer(Protocol):
    def analyze(self, text: str) -> AnalyzedText: ...


class RuleBasedAnalyzer:
    """Default deterministic analyzer built from the helpers above."""

    version = "rule-based-1"

    def analyze(self, text: str) -> AnalyzedText:
        return AnalyzedText(
            tokens=tuple(tokenize(text)),
            content=tuple(content_lemmas(text)),
            entities=tuple(extract_entities(text)),
        )
