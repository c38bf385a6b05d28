/** Server payload shapes. The UI renders these verbatim and never computes
 * flows, latencies, or rating updates itself. */

export interface ConfigView {
  schema: number;
  routes: number;
  states: string[];
  prior: number[];
  rounds: number;
  rating_max: number;
  review_default: number;
}

export type Phase = "awaiting-choice" | "awaiting-review" | "finished";

export interface SessionHandle {
  id: string;
  participant: number;
  k: number;
  phase: Phase;
}

export interface Revealed {
  state: string;
  travel_times: number[];
  recommended: number;
  chosen: number;
}

export interface RoundView {
  k: number;
  rounds: number;
  phase: Phase;
  rating_displayed: number;
  rating_max: number;
  recommended: number;
  routes: number;
  states: string[];
  prior: number[];
  forecasts: Record<string, number[]>;
  review_default: number;
  revealed?: Revealed;
}

export interface SessionSummary {
  participant: number;
  rounds: number;
  follow_count: number;
  mean_review: number | null;
  final_rating_displayed: number;
  phase: Phase;
}

export interface CreateResponse {
  session: SessionHandle;
  view: RoundView;
}

export interface ChoiceResponse {
  session: SessionHandle;
  revealed: Revealed;
  review_default: number;
}

export interface ReviewResponse {
  session: SessionHandle;
  view?: RoundView;
  summary?: SessionSummary;
}

export interface SurveyQuestion {
  id: number;
  kind: "scale" | "choice" | "number" | "text";
  text: string;
  options?: Record<string, string>;
  requires?: { question: number; answer: string };
}

export type SurveyAnswers = Record<string, number | string | null>;
