import { OverlapMap } from "./types.js";

export interface SummarySpan {
  position: number;
  text: string;
  /** lemma this word matches in the current target, if any */
  lemma: string | null;
}

/** Whitespace word split; positions must line up with the service's
 * 0-based token positions, which are computed over the same summary. */
export function summaryWords(summary: string): string[] {
  return summary.split(/\s+/).filter((w) => w.length > 0);
}

/** Annotate every summary word with the overlapping lemma it belongs to.
 * All mentions are marked; rendering applies the highlight styling. */
export function buildSpans(summary: string, overlap: OverlapMap): SummarySpan[] {
  const byPosition = new Map<number, string>();
  for (const [lemma, positions] of Object.entries(overlap)) {
    for (const position of positions) {
      byPosition.set(position, lemma);
    }
  }
  return summaryWords(summary).map((text, position) => ({
    position,
    text,
    lemma: byPosition.get(position) ?? null,
  }));
}

/** Position of the first mention for click-to-scroll; null when the term
 * has no overlap (the click is a no-op). */
export function firstMention(overlap: OverlapMap, lemma: string): number | null {
  const positions = overlap[lemma];
  if (!positions || positions.length === 0) return null;
  return Math.min(...positions);
}

export function mentionCount(overlap: OverlapMap, lemma: string): number {
  return overlap[lemma]?.length ?? 0;
}
