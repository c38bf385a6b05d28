import { describe, expect, it } from "vitest";

import type { RoundView, SessionSummary } from "../src/types.js";
import {
  ViewError,
  assertRoundView,
  buildRoundScreen,
  buildSummaryScreen,
  formatRating,
  validateReview,
  withReveal,
} from "../src/viewmodel.js";

function sampleView(overrides: Partial<RoundView> = {}): RoundView {
  return {
    k: 1,
    rounds: 100,
    phase: "awaiting-choice",
    rating_displayed: 2.5,
    rating_max: 5,
    recommended: 3,
    routes: 3,
    states: ["w1", "w2"],
    prior: [0.25, 0.75],
    forecasts: {
      w1: [6.1, 25.4, 4.5],
      w2: [20.0, 16.0, 25.5],
    },
    review_default: 5,
    ...overrides,
  };
}

describe("formatRating", () => {
  it("shows one decimal", () => {
    expect(formatRating(2.5)).toBe("2.5");
    expect(formatRating(3.75)).toBe("3.8");
    expect(formatRating(5)).toBe("5.0");
  });
});

describe("assertRoundView", () => {
  it("accepts a complete view", () => {
    expect(assertRoundView(sampleView())).toBeTruthy();
  });

  it("rejects missing fields by name", () => {
    const broken: Record<string, unknown> = { ...sampleView() };
    delete broken.rating_displayed;
    expect(() => assertRoundView(broken)).toThrowError(/rating_displayed/);
  });

  it("rejects forecast tables that do not cover all routes", () => {
    const view = sampleView({ forecasts: { w1: [1, 2, 3], w2: [1, 2] } });
    expect(() => assertRoundView(view)).toThrowError(ViewError);
  });

  it("rejects out-of-range recommendation", () => {
    expect(() => assertRoundView(sampleView({ recommended: 4 }))).toThrowError(/recommended/);
  });
});

describe("buildRoundScreen", () => {
  it("renders the displayed rating to one decimal", () => {
    expect(buildRoundScreen(sampleView()).ratingText).toBe("2.5");
  });

  it("highlights exactly the recommended route", () => {
    const screen = buildRoundScreen(sampleView());
    expect(screen.routes.map((r) => r.isRecommended)).toEqual([false, false, true]);
  });

  it("scales histogram bars by prior mass", () => {
    const screen = buildRoundScreen(sampleView());
    const bars = screen.routes[0]!.bars;
    expect(bars.map((b) => b.heightPct)).toEqual([33, 100]);
    expect(bars[0]!.time).toBeCloseTo(6.1);
  });

  it("enables selection only while awaiting the choice", () => {
    expect(buildRoundScreen(sampleView()).selectEnabled).toBe(true);
    const after = sampleView({ phase: "awaiting-review" });
    expect(buildRoundScreen(after).selectEnabled).toBe(false);
    expect(buildRoundScreen(after).reviewEnabled).toBe(true);
  });

  it("overlays revealed times on every route", () => {
    const view = withReveal(sampleView(), {
      state: "w2",
      travel_times: [20.0, 16.0, 25.5],
      recommended: 3,
      chosen: 2,
    });
    const screen = buildRoundScreen(view);
    expect(screen.routes[1]!.revealedTime).toBe("16.0 min");
    expect(screen.routes[1]!.isChosen).toBe(true);
    expect(screen.routes[0]!.bars.find((b) => b.state === "w2")!.revealed).toBe(true);
  });

  it("uses the configured review slider default", () => {
    expect(buildRoundScreen(sampleView({ review_default: 2.5 })).reviewDefault).toBe(2.5);
  });
});

describe("validateReview", () => {
  it("blocks out-of-range values", () => {
    expect(validateReview(-1, 5)).toMatch(/between/);
    expect(validateReview(5.1, 5)).toMatch(/between/);
    expect(validateReview(Number.NaN, 5)).toMatch(/number/);
  });

  it("accepts in-range values", () => {
    expect(validateReview(0, 5)).toBeNull();
    expect(validateReview(5, 5)).toBeNull();
    expect(validateReview(3.7, 5)).toBeNull();
  });
});

describe("buildSummaryScreen", () => {
  it("summarizes the finished session", () => {
    const summary: SessionSummary = {
      participant: 4,
      rounds: 100,
      follow_count: 87,
      mean_review: 4.5,
      final_rating_displayed: 4.7,
      phase: "finished",
    };
    const screen = buildSummaryScreen(summary);
    expect(screen.title).toContain("participant 4");
    expect(screen.lines.join("\n")).toContain("87 times (87%)");
    expect(screen.lines.join("\n")).toContain("4.7");
  });
});
