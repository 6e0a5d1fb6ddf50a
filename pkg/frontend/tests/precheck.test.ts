import { describe, expect, it } from "vitest";

import { precheck, wordCount } from "../src/precheck.js";

describe("wordCount", () => {
  it("splits on whitespace and strips punctuation", () => {
    expect(wordCount("Usually a hamburger, with friends.")).toBe(5);
  });

  it("ignores punctuation-only tokens", () => {
    expect(wordCount("well -- yes !")).toBe(2);
    expect(wordCount("  ")).toBe(0);
  });
});

describe("precheck", () => {
  it("passes with a highlight and four words", () => {
    expect(precheck("sharing food brings joy", [[0, 5]]).ok).toBe(true);
  });

  it("fails without highlights", () => {
    const result = precheck("sharing food brings joy", []);
    expect(result.ok).toBe(false);
    expect(result.reasons.join(" ")).toContain("highlight");
  });

  it("fails below four words", () => {
    const result = precheck("too short here", [[0, 5]]);
    expect(result.ok).toBe(false);
    expect(result.reasons.join(" ")).toContain("4 words");
  });

  it("reports both failures together", () => {
    expect(precheck("nope", []).reasons).toHaveLength(2);
  });
});
