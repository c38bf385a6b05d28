import type { RoundScreen, SummaryScreen } from "./viewmodel.js";
import type { SurveyAnswers, SurveyQuestion } from "./types.js";
import { isRequired } from "./survey.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderError(message: string): string {
  return `<div class="banner error" role="alert">${esc(message)}</div>`;
}

export function renderRating(screen: RoundScreen): string {
  return `
    <div class="rating" aria-label="average rating ${esc(screen.ratingText)}">
      <div class="stars">
        <div class="stars-bg">★★★★★</div>
        <div class="stars-fill" style="width:${screen.starFillPct}%">★★★★★</div>
      </div>
      <span class="rating-value">${esc(screen.ratingText)}</span>
    </div>`;
}

/** Stylized map: three routes between one origin/destination pair, the
 * recommended one highlighted. */
export function renderMap(screen: RoundScreen): string {
  const arcs = [
    "M 30 100 C 110 10, 210 10, 290 100",
    "M 30 100 L 290 100",
    "M 30 100 C 110 190, 210 190, 290 100",
  ];
  const paths = screen.routes
    .map((card, i) => {
      const cls = card.isRecommended ? "route recommended" : "route";
      const arc = arcs[i % arcs.length];
      const mid = i === 0 ? "55" : i === 1 ? "95" : "165";
      return `
        <path class="${cls}" d="${arc}" data-route="${card.route}"></path>
        <text class="route-label" x="160" y="${mid}">${esc(card.label)}</text>`;
    })
    .join("");
  return `
    <svg viewBox="0 0 320 200" class="map" role="img" aria-label="route map">
      ${paths}
      <circle cx="30" cy="100" r="7" class="endpoint"></circle>
      <circle cx="290" cy="100" r="7" class="endpoint"></circle>
      <text x="14" y="128" class="endpoint-label">A</text>
      <text x="292" y="128" class="endpoint-label">B</text>
    </svg>`;
}

export function renderHistograms(screen: RoundScreen): string {
  const cards = screen.routes
    .map((card) => {
      const bars = card.bars
        .map(
          (bar) => `
          <div class="bar-wrap${bar.revealed ? " revealed" : ""}" title="${esc(bar.state)}: ${esc(bar.timeLabel)}">
            <span class="bar-time">${bar.time.toFixed(0)}</span>
            <div class="bar" style="height:${bar.heightPct}%"></div>
            <span class="bar-state">${esc(bar.state)}</span>
          </div>`,
        )
        .join("");
      const reveal =
        card.revealedTime === null
          ? ""
          : `<div class="actual">actual: <strong>${esc(card.revealedTime)}</strong></div>`;
      const classes = [
        "route-card",
        card.isRecommended ? "recommended" : "",
        card.isChosen ? "chosen" : "",
      ]
        .filter(Boolean)
        .join(" ");
      return `
        <div class="${classes}" data-route="${card.route}">
          <h3>${esc(card.label)}${card.isRecommended ? ' <span class="pill">recommended</span>' : ""}</h3>
          <div class="bars">${bars}</div>
          ${reveal}
        </div>`;
    })
    .join("");
  return `<div class="histograms">${cards}</div>`;
}

export function renderChoiceMenu(screen: RoundScreen): string {
  const options = screen.routes
    .map((card) => `<option value="${card.route}">${esc(card.label)}</option>`)
    .join("");
  return `
    <div class="choice-menu">
      <label for="route-select">Select your route:</label>
      <select id="route-select" ${screen.selectEnabled ? "" : "disabled"}>${options}</select>
      <button id="select-btn" ${screen.selectEnabled ? "" : "disabled"}>Select</button>
    </div>`;
}

export function renderReviewSlider(screen: RoundScreen): string {
  return `
    <div class="review ${screen.reviewEnabled ? "" : "hidden"}">
      <label for="review-slider">Rate the quality of this recommendation:</label>
      <input id="review-slider" type="range" min="0" max="${screen.ratingMax}" step="0.1"
             value="${screen.reviewDefault}" ${screen.reviewEnabled ? "" : "disabled"} />
      <output id="review-value">${screen.reviewDefault.toFixed(1)}</output>
      <button id="rate-btn" ${screen.reviewEnabled ? "" : "disabled"}>Rate</button>
    </div>`;
}

export function renderRound(screen: RoundScreen): string {
  return `
    <header class="topbar">
      ${renderRating(screen)}
      <span class="k-label">${esc(screen.kLabel)}</span>
    </header>
    <main class="round">
      <section class="left">${renderMap(screen)}${renderChoiceMenu(screen)}</section>
      <section class="right">${renderHistograms(screen)}</section>
    </main>
    ${renderReviewSlider(screen)}`;
}

export function renderSummary(screen: SummaryScreen): string {
  const lines = screen.lines.map((line) => `<li>${esc(line)}</li>`).join("");
  return `
    <div class="summary">
      <h2>${esc(screen.title)}</h2>
      <ul>${lines}</ul>
      <p>Please fill in the short survey below.</p>
    </div>`;
}

export function renderSurvey(questions: SurveyQuestion[], answers: SurveyAnswers): string {
  const items = questions
    .map((q) => {
      const required = isRequired(q, answers);
      let control = "";
      if (q.kind === "scale") {
        const opts = [1, 2, 3, 4, 5]
          .map((v) => `<label><input type="radio" name="q${q.id}" value="${v}" /> ${v}</label>`)
          .join(" ");
        control = `<div class="scale">${opts}</div>`;
      } else if (q.kind === "choice" && q.options) {
        control = Object.entries(q.options)
          .map(
            ([key, label]) =>
              `<label class="choice-option"><input type="radio" name="q${q.id}" value="${esc(key)}" /> (${esc(key)}) ${esc(label)}</label>`,
          )
          .join("");
      } else if (q.kind === "number") {
        control = `<input type="number" step="0.1" name="q${q.id}" ${required ? "" : "disabled"} />`;
      } else {
        control = `<textarea name="q${q.id}" rows="2"></textarea>`;
      }
      return `
        <fieldset class="survey-q${required ? "" : " optional"}" data-question="${q.id}">
          <legend>${q.id}. ${esc(q.text)}${required ? "" : " (if applicable)"}</legend>
          ${control}
        </fieldset>`;
    })
    .join("");
  return `
    <form id="survey-form" class="survey">
      ${items}
      <button id="survey-btn" type="submit">Submit survey</button>
    </form>`;
}

export function renderThanks(): string {
  return `<div class="summary"><h2>Thank you!</h2><p>Your survey has been recorded.</p></div>`;
}
