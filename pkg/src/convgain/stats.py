"""Agreement, reliability, and error statistics over ordinal ratings."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .transcripts import Episode

LEVELS = (1, 2, 3, 4)


class DegenerateDataError(ValueError):
    pass


def pearson(x: list[float], y: list[float]) -> float:
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("pearson needs two equal-length series of >= 2 points")
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateDataError("zero variance: correlation undefined")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / math.sqrt(sxx * syy)


def krippendorff_alpha_ordinal(
    ratings: dict[str, dict[str, int | None]], levels: tuple[int, ...] = LEVELS
) -> float:
    """alpha = 1 - D_o/D_e over the coincidence matrix, ordinal distance metric.

    `ratings` maps source -> item -> level (None/missing allowed). Items with
    fewer than two ratings are excluded.
    """
    items: dict[str, list[int]] = {}
    for per_item in ratings.values():
        for item, level in per_item.items():
            if level is None:
                continue
            items.setdefault(item, []).append(level)
    units = [vals for vals in items.values() if len(vals) >= 2]
    if not units:
        raise DegenerateDataError("no item has two or more ratings")

    # ordinal distance: delta(c,k) = (sum of marginal counts from c to k,
    # counting the endpoints at half weight)^2
    index = {c: i for i, c in enumerate(levels)}
    n_c = [0.0] * len(levels)
    coincidence = [[0.0] * len(levels) for _ in levels]
    for vals in units:
        m = len(vals)
        for i, a in enumerate(vals):
            for j, b in enumerate(vals):
                if i == j:
                    continue
                coincidence[index[a]][index[b]] += 1.0 / (m - 1)
    for i in range(len(levels)):
        n_c[i] = sum(coincidence[i])
    total = sum(n_c)

    def delta(i: int, j: int) -> float:
        if i == j:
            return 0.0
        lo, hi = min(i, j), max(i, j)
        span = n_c[lo] / 2.0 + sum(n_c[lo + 1 : hi]) + n_c[hi] / 2.0
        return span * span

    d_o = sum(
        coincidence[i][j] * delta(i, j)
        for i in range(len(levels))
        for j in range(len(levels))
    )
    d_e = sum(
        n_c[i] * n_c[j] * delta(i, j)
        for i in range(len(levels))
        for j in range(len(levels))
        if i != j
    ) / (total - 1)
    if d_e == 0.0:
        return 1.0  # every pairable value identical
    return 1.0 - d_o / d_e


def qwk(a: list[int], b: list[int], levels: tuple[int, ...] = LEVELS) -> float:
    """Quadratic weighted kappa; degenerate marginals (both disagreement terms
    zero) return 1 by contract."""
    if len(a) != len(b) or not a:
        raise ValueError("qwk needs two equal-length non-empty rating vectors")
    index = {c: i for i, c in enumerate(levels)}
    size = len(levels)
    observed = [[0.0] * size for _ in range(size)]
    for x, y in zip(a, b):
        observed[index[x]][index[y]] += 1.0
    n = float(len(a))
    row = [sum(observed[i]) for i in range(size)]
    col = [sum(observed[i][j] for i in range(size)) for j in range(size)]
    weight = [[(i - j) ** 2 / (size - 1) ** 2 for j in range(size)] for i in range(size)]
    num = sum(weight[i][j] * observed[i][j] for i in range(size) for j in range(size))
    den = sum(
        weight[i][j] * row[i] * col[j] / n for i in range(size) for j in range(size)
    )
    if den == 0.0:
        return 1.0
    return 1.0 - num / den


@dataclass(frozen=True)
class AgreementReport:
    krippendorff_alpha: float
    pairwise_qwk: dict[tuple[str, str], float]
    mean_qwk: dict[str, float]
    dropped: tuple[str, ...]
    directive: str | None  # "recruit_third" | "drop:<id>" | None
    surviving: tuple[str, ...]


def quality_control(
    ratings: dict[str, dict[str, int]], threshold: float = 0.25
) -> AgreementReport:
    """Apply the mean-QWK screening rule to a session's annotators.

    Two annotators below threshold -> recruit a third. With three, the one
    with the lowest mean QWK against the others is dropped; at least two
    annotators always survive.
    """
    annotators = sorted(ratings)
    if len(annotators) < 2:
        raise ValueError("quality control needs at least 2 annotators")
    common = set.intersection(*(set(ratings[a]) for a in annotators))
    items = sorted(common)
    if not items:
        raise DegenerateDataError("annotators share no rated items")
    pairwise: dict[tuple[str, str], float] = {}
    for i, a in enumerate(annotators):
        for b in annotators[i + 1 :]:
            kappa = qwk(
                [ratings[a][it] for it in items], [ratings[b][it] for it in items]
            )
            pairwise[(a, b)] = kappa
    mean_qwk = {
        a: sum(v for pair, v in pairwise.items() if a in pair) / (len(annotators) - 1)
        for a in annotators
    }
    alpha = krippendorff_alpha_ordinal(
        {a: {it: ratings[a][it] for it in items} for a in annotators}
    )
    overall = sum(pairwise.values()) / len(pairwise)

    dropped: tuple[str, ...] = ()
    directive: str | None = None
    surviving = tuple(annotators)
    if len(annotators) == 2:
        if overall < threshold:
            directive = "recruit_third"
    else:
        worst = min(annotators, key=lambda a: (mean_qwk[a], a))
        if len(annotators) - 1 >= 2:
            dropped = (worst,)
            directive = f"drop:{worst}"
            surviving = tuple(a for a in annotators if a != worst)
    return AgreementReport(
        krippendorff_alpha=alpha,
        pairwise_qwk=pairwise,
        mean_qwk=mean_qwk,
        dropped=dropped,
        directive=directive,
        surviving=surviving,
    )


def human_loo_mae(
    ratings: dict[str, dict[str, int]]
) -> tuple[dict[str, float], float, float]:
    """Each annotator's MAE against the mean of the others, plus mean +- std.

    Items rated by a single annotator are excluded for that comparison.
    """
    annotators = sorted(ratings)
    if len(annotators) < 2:
        raise ValueError("needs at least 2 annotators")
    per: dict[str, float] = {}
    for a in annotators:
        errors = []
        for item, value in ratings[a].items():
            others = [
                ratings[b][item] for b in annotators if b != a and item in ratings[b]
            ]
            if not others:
                continue
            errors.append(abs(value - sum(others) / len(others)))
        if errors:
            per[a] = sum(errors) / len(errors)
    values = list(per.values())
    mean = sum(values) / len(values)
    std = (
        math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))
        if len(values) > 1
        else 0.0
    )
    return per, mean, std


def condition_mae(
    runs_a: list[dict[tuple[int, str], float]],
    runs_b: list[dict[tuple[int, str], float]],
) -> dict[str, tuple[float, float]]:
    """Per-aspect MAE between two batches of runs, mean +- std over run pairs.

    Keys are (utterance_index, aspect); each A run is compared with the B run
    of the same position. Includes a cross-aspect "mean" row.
    """
    if len(runs_a) != len(runs_b) or not runs_a:
        raise ValueError("need equal non-empty run batches")
    aspects = sorted({aspect for run in runs_a for (_, aspect) in run})
    per_aspect_runs: dict[str, list[float]] = {a: [] for a in aspects}
    overall_runs: list[float] = []
    for ra, rb in zip(runs_a, runs_b):
        if set(ra) != set(rb):
            missing = sorted(set(ra) ^ set(rb))
            raise ValueError(f"run key misalignment: {missing}")
        all_errors = []
        for aspect in aspects:
            errs = [abs(ra[k] - rb[k]) for k in ra if k[1] == aspect]
            if errs:
                per_aspect_runs[aspect].append(sum(errs) / len(errs))
                all_errors.extend(errs)
        overall_runs.append(sum(all_errors) / len(all_errors))

    def summarize(xs: list[float]) -> tuple[float, float]:
        m = sum(xs) / len(xs)
        s = (
            math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))
            if len(xs) > 1
            else 0.0
        )
        return m, s

    out = {aspect: summarize(xs) for aspect, xs in per_aspect_runs.items() if xs}
    out["mean"] = summarize(overall_runs)
    return out


@dataclass(frozen=True)
class ModeratorLagProfile:
    # (act, lag) -> (mean rating, utterance count)
    cells: dict[tuple[str, int], tuple[float, int]]
    coverage_pct: dict[str, float]  # share of moderator turns per act
    baseline_mean: float | None

    def rows(self) -> list[tuple[str, int, float, int, float]]:
        return [
            (act, lag, self.cells[(act, lag)][0], self.cells[(act, lag)][1],
             self.coverage_pct.get(act, 0.0))
            for act, lag in sorted(self.cells)
        ]


def moderator_lag(
    episode: Episode, ratings: dict[int, float], max_lag: int = 5
) -> ModeratorLagProfile:
    """Mean participant rating grouped by moderator act type and turn lag.

    Each rated participant utterance is aligned to the most recent moderator
    turn; utterances before any moderator turn, or beyond max_lag, are excluded.
    """
    mod_turns = sorted(
        (idx, act) for idx, act in episode.moderator_acts.items() if act
    )
    if not mod_turns:
        baseline = (
            sum(ratings.values()) / len(ratings) if ratings else None
        )
        return ModeratorLagProfile(cells={}, coverage_pct={}, baseline_mean=baseline)
    act_turn_counts: dict[str, int] = {}
    for _, act in mod_turns:
        act_turn_counts[act] = act_turn_counts.get(act, 0) + 1
    total_turns = sum(act_turn_counts.values())

    grouped: dict[tuple[str, int], list[float]] = {}
    mod_indices = [idx for idx, _ in mod_turns]
    acts_at = dict(mod_turns)
    for idx, rating in sorted(ratings.items()):
        prior = [m for m in mod_indices if m < idx]
        if not prior:
            continue
        anchor = prior[-1]
        # lag counts participant turns since the moderator turn
        lag = sum(
            1
            for j in range(anchor + 1, idx + 1)
            if j not in episode.moderator_acts or not episode.moderator_acts[j]
        )
        if lag < 1 or lag > max_lag:
            continue
        grouped.setdefault((acts_at[anchor], lag), []).append(rating)
    cells = {
        key: (sum(vals) / len(vals), len(vals)) for key, vals in grouped.items()
    }
    coverage = {
        act: 100.0 * count / total_turns for act, count in act_turn_counts.items()
    }
    baseline = sum(ratings.values()) / len(ratings) if ratings else None
    return ModeratorLagProfile(
        cells=cells, coverage_pct=coverage, baseline_mean=baseline
    )
