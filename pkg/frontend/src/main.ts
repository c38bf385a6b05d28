import { ApiClient, ApiError } from "./api.js";
import {
  renderError,
  renderRound,
  renderSummary,
  renderSurvey,
  renderThanks,
} from "./render.js";
import { emptyAnswers, validateAnswers } from "./survey.js";
import type { RoundView, SessionSummary, SurveyAnswers, SurveyQuestion } from "./types.js";
import { buildRoundScreen, buildSummaryScreen, validateReview, withReveal } from "./viewmodel.js";

const api = new ApiClient("");
const app = document.getElementById("app")!;
const bannerHost = document.getElementById("banner")!;

let sessionId = "";
let currentView: RoundView | null = null;
let surveyQuestions: SurveyQuestion[] = [];

function showError(message: string): void {
  bannerHost.innerHTML = renderError(message);
}

function clearError(): void {
  bannerHost.innerHTML = "";
}

function fail(err: unknown): void {
  if (err instanceof ApiError) {
    showError(`server: ${err.message}`);
  } else {
    showError(err instanceof Error ? err.message : String(err));
  }
}

function drawRound(view: RoundView): void {
  currentView = view;
  try {
    const screen = buildRoundScreen(view);
    app.innerHTML = renderRound(screen);
  } catch (err) {
    fail(err);
    return;
  }
  const selectBtn = document.getElementById("select-btn");
  selectBtn?.addEventListener("click", onSelect);
  const slider = document.getElementById("review-slider") as HTMLInputElement | null;
  const output = document.getElementById("review-value");
  slider?.addEventListener("input", () => {
    if (output) output.textContent = Number(slider.value).toFixed(1);
  });
  document.getElementById("rate-btn")?.addEventListener("click", onRate);
}

async function onSelect(): Promise<void> {
  if (!currentView) return;
  const select = document.getElementById("route-select") as HTMLSelectElement;
  const route = Number(select.value);
  clearError();
  try {
    const resp = await api.submitChoice(sessionId, route);
    drawRound(withReveal(currentView, resp.revealed));
  } catch (err) {
    fail(err);
  }
}

async function onRate(): Promise<void> {
  if (!currentView) return;
  const slider = document.getElementById("review-slider") as HTMLInputElement;
  const value = Number(slider.value);
  const problem = validateReview(value, currentView.rating_max);
  if (problem !== null) {
    showError(problem);
    return;
  }
  clearError();
  try {
    const resp = await api.submitReview(sessionId, value);
    if (resp.view) {
      drawRound(resp.view);
    } else if (resp.summary) {
      await drawSummary(resp.summary);
    }
  } catch (err) {
    fail(err);
  }
}

async function drawSummary(summary: SessionSummary): Promise<void> {
  currentView = null;
  const { questions } = await api.surveyQuestions();
  surveyQuestions = questions;
  app.innerHTML = renderSummary(buildSummaryScreen(summary)) + renderSurvey(questions, emptyAnswers(questions));
  document.getElementById("survey-form")?.addEventListener("submit", onSurvey);
  app.addEventListener("change", refreshConditionalQuestions);
}

function collectAnswers(): SurveyAnswers {
  const answers = emptyAnswers(surveyQuestions);
  for (const q of surveyQuestions) {
    const name = `q${q.id}`;
    if (q.kind === "scale" || q.kind === "choice") {
      const checked = document.querySelector<HTMLInputElement>(`input[name="${name}"]:checked`);
      if (checked) {
        answers[String(q.id)] = q.kind === "scale" ? Number(checked.value) : checked.value;
      }
    } else if (q.kind === "number") {
      const input = document.querySelector<HTMLInputElement>(`input[name="${name}"]`);
      answers[String(q.id)] = input && input.value !== "" ? Number(input.value) : null;
    } else {
      const area = document.querySelector<HTMLTextAreaElement>(`textarea[name="${name}"]`);
      answers[String(q.id)] = area ? area.value : "";
    }
  }
  return answers;
}

function refreshConditionalQuestions(): void {
  const answers = collectAnswers();
  for (const q of surveyQuestions) {
    if (!q.requires) continue;
    const required = answers[String(q.requires.question)] === q.requires.answer;
    const fieldset = document.querySelector<HTMLFieldSetElement>(
      `fieldset[data-question="${q.id}"]`,
    );
    const input = fieldset?.querySelector<HTMLInputElement>("input");
    if (fieldset && input) {
      fieldset.classList.toggle("optional", !required);
      input.disabled = !required;
    }
  }
}

async function onSurvey(event: Event): Promise<void> {
  event.preventDefault();
  const answers = collectAnswers();
  const errors = validateAnswers(surveyQuestions, answers);
  if (errors.length > 0) {
    showError(errors.join("; "));
    return;
  }
  clearError();
  try {
    await api.submitSurvey(sessionId, answers);
    app.innerHTML = renderThanks();
  } catch (err) {
    fail(err);
  }
}

async function boot(): Promise<void> {
  try {
    const created = await api.createSession();
    sessionId = created.session.id;
    drawRound(created.view);
  } catch (err) {
    fail(err);
  }
}

void boot();
