import type { Revealed, RoundView, SessionSummary } from "./types.js";

/** Raised when a server payload is structurally unusable. The UI shows an
 * error banner instead of guessing defaults. */
export class ViewError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ViewError";
  }
}

export interface HistogramBar {
  state: string;
  time: number;
  timeLabel: string;
  /** bar height in percent, proportional to the state's prior mass */
  heightPct: number;
  revealed: boolean;
}

export interface RouteCard {
  route: number;
  label: string;
  isRecommended: boolean;
  isChosen: boolean;
  bars: HistogramBar[];
  revealedTime: string | null;
}

export interface RoundScreen {
  kLabel: string;
  ratingText: string;
  starFillPct: number;
  phase: RoundView["phase"];
  selectEnabled: boolean;
  reviewEnabled: boolean;
  reviewDefault: number;
  ratingMax: number;
  recommended: number;
  routes: RouteCard[];
}

export function formatRating(value: number): string {
  return value.toFixed(1);
}

export function assertRoundView(v: unknown): RoundView {
  if (typeof v !== "object" || v === null) {
    throw new ViewError("round view is not an object");
  }
  const view = v as Partial<RoundView>;
  const missing: string[] = [];
  if (typeof view.k !== "number") missing.push("k");
  if (typeof view.rounds !== "number") missing.push("rounds");
  if (typeof view.rating_displayed !== "number") missing.push("rating_displayed");
  if (typeof view.rating_max !== "number") missing.push("rating_max");
  if (typeof view.recommended !== "number") missing.push("recommended");
  if (typeof view.routes !== "number") missing.push("routes");
  if (!Array.isArray(view.states)) missing.push("states");
  if (!Array.isArray(view.prior)) missing.push("prior");
  if (typeof view.forecasts !== "object" || view.forecasts === null) missing.push("forecasts");
  if (view.phase !== "awaiting-choice" && view.phase !== "awaiting-review" && view.phase !== "finished") {
    missing.push("phase");
  }
  if (missing.length > 0) {
    throw new ViewError(`round view missing or malformed fields: ${missing.join(", ")}`);
  }
  const ok = view as RoundView;
  if (ok.states.length !== ok.prior.length) {
    throw new ViewError("round view: states and prior lengths differ");
  }
  for (const state of ok.states) {
    const times = ok.forecasts[state];
    if (!Array.isArray(times) || times.length !== ok.routes) {
      throw new ViewError(`round view: forecasts for ${state} do not cover all routes`);
    }
  }
  if (ok.recommended < 1 || ok.recommended > ok.routes) {
    throw new ViewError(`round view: recommended route ${ok.recommended} out of range`);
  }
  return ok;
}

export function buildRoundScreen(raw: unknown): RoundScreen {
  const view = assertRoundView(raw);
  const maxPrior = Math.max(...view.prior);
  const revealed = view.revealed ?? null;
  const routes: RouteCard[] = [];
  for (let route = 1; route <= view.routes; route++) {
    const bars: HistogramBar[] = view.states.map((state, i) => ({
      state,
      time: view.forecasts[state]![route - 1]!,
      timeLabel: `${view.forecasts[state]![route - 1]!.toFixed(1)} min`,
      heightPct: Math.round(((view.prior[i] ?? 0) / maxPrior) * 100),
      revealed: revealed !== null && revealed.state === state,
    }));
    routes.push({
      route,
      label: `Route ${route}`,
      isRecommended: route === view.recommended,
      isChosen: revealed !== null && revealed.chosen === route,
      bars,
      revealedTime:
        revealed === null ? null : `${revealed.travel_times[route - 1]!.toFixed(1)} min`,
    });
  }
  return {
    kLabel: `Scenario ${view.k} / ${view.rounds}`,
    ratingText: formatRating(view.rating_displayed),
    starFillPct: (view.rating_displayed / view.rating_max) * 100,
    phase: view.phase,
    selectEnabled: view.phase === "awaiting-choice",
    reviewEnabled: view.phase === "awaiting-review",
    reviewDefault: view.review_default,
    ratingMax: view.rating_max,
    recommended: view.recommended,
    routes,
  };
}

/** Merge the choice reveal into the last round view (times overlay). */
export function withReveal(view: RoundView, revealed: Revealed): RoundView {
  return { ...view, phase: "awaiting-review", revealed };
}

export function validateReview(value: number, ratingMax: number): string | null {
  if (!Number.isFinite(value)) {
    return "review must be a number";
  }
  if (value < 0 || value > ratingMax) {
    return `review must be between 0 and ${ratingMax}`;
  }
  return null;
}

export interface SummaryScreen {
  title: string;
  lines: string[];
}

export function buildSummaryScreen(summary: SessionSummary): SummaryScreen {
  const followPct = ((summary.follow_count / summary.rounds) * 100).toFixed(0);
  return {
    title: `Session complete — participant ${summary.participant}`,
    lines: [
      `Rounds played: ${summary.rounds}`,
      `Recommendation followed: ${summary.follow_count} times (${followPct}%)`,
      `Mean review: ${summary.mean_review === null ? "n/a" : summary.mean_review.toFixed(2)}`,
      `Final displayed rating: ${formatRating(summary.final_rating_displayed)}`,
    ],
  };
}
