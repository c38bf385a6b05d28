import type { SurveyAnswers, SurveyQuestion } from "./types.js";

/** Whether a question must be answered given the current answers
 * (the threshold follow-up only applies to the threshold strategy). */
export function isRequired(question: SurveyQuestion, answers: SurveyAnswers): boolean {
  if (!question.requires) {
    return true;
  }
  return answers[String(question.requires.question)] === question.requires.answer;
}

export function validateAnswers(
  questions: SurveyQuestion[],
  answers: SurveyAnswers,
): string[] {
  const errors: string[] = [];
  for (const q of questions) {
    const value = answers[String(q.id)];
    if (value === null || value === undefined || value === "") {
      if (isRequired(q, answers) && q.kind !== "text") {
        errors.push(`question ${q.id} is required`);
      }
      continue;
    }
    switch (q.kind) {
      case "scale":
        if (typeof value !== "number" || !Number.isInteger(value) || value < 1 || value > 5) {
          errors.push(`question ${q.id}: answer must be an integer from 1 to 5`);
        }
        break;
      case "choice":
        if (typeof value !== "string" || !(q.options && value in q.options)) {
          errors.push(`question ${q.id}: pick one of the listed options`);
        }
        break;
      case "number":
        if (typeof value !== "number" || !Number.isFinite(value)) {
          errors.push(`question ${q.id}: answer must be a number`);
        }
        break;
      case "text":
        if (typeof value !== "string") {
          errors.push(`question ${q.id}: answer must be text`);
        }
        break;
    }
  }
  return errors;
}

/** Answers object with every question present (text defaults to ""). */
export function emptyAnswers(questions: SurveyQuestion[]): SurveyAnswers {
  const answers: SurveyAnswers = {};
  for (const q of questions) {
    answers[String(q.id)] = q.kind === "text" ? "" : null;
  }
  return answers;
}
