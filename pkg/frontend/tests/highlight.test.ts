import { describe, expect, it } from "vitest";

import {
  buildSpans,
  firstMention,
  mentionCount,
  summaryWords,
} from "../src/highlight.js";

const SUMMARY = "The prior conversation covered bus fares. Fares rose downtown.";
const OVERLAP = { fare: [5, 6], downtown: [8] };

describe("summary spans", () => {
  it("splits on whitespace with stable positions", () => {
    const words = summaryWords(SUMMARY);
    expect(words[5]).toBe("fares.");
    expect(words[8]).toBe("downtown.");
    expect(summaryWords("  a   b ")).toEqual(["a", "b"]);
  });

  it("marks every mention of an overlapping lemma", () => {
    const spans = buildSpans(SUMMARY, OVERLAP);
    const marked = spans.filter((s) => s.lemma !== null);
    expect(marked.map((s) => s.position)).toEqual([5, 6, 8]);
    expect(spans[5].lemma).toBe("fare");
    expect(spans[6].lemma).toBe("fare");
    expect(spans[8].lemma).toBe("downtown");
    expect(spans[0].lemma).toBeNull();
  });

  it("renders nothing highlighted for an empty overlap", () => {
    expect(buildSpans(SUMMARY, {}).every((s) => s.lemma === null)).toBe(true);
  });
});

describe("click-to-scroll", () => {
  it("scrolls to the first of multiple mentions", () => {
    expect(firstMention(OVERLAP, "fare")).toBe(5);
    expect(mentionCount(OVERLAP, "fare")).toBe(2);
  });

  it("is a no-op for terms without overlap", () => {
    expect(firstMention(OVERLAP, "library")).toBeNull();
    expect(firstMention({ x: [] }, "x")).toBeNull();
    expect(mentionCount(OVERLAP, "library")).toBe(0);
  });
});
