import type {
  ChoiceResponse,
  ConfigView,
  CreateResponse,
  ReviewResponse,
  SessionSummary,
  SurveyAnswers,
  SurveyQuestion,
} from "./types.js";

/** Error carrying the server's status and message verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function call<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = (await resp.json()) as T & { error?: string };
  if (!resp.ok) {
    throw new ApiError(resp.status, body.error ?? `request failed (${resp.status})`);
  }
  return body;
}

function post(body: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  };
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  config(): Promise<ConfigView> {
    return call(`${this.base}/api/config`);
  }

  surveyQuestions(): Promise<{ questions: SurveyQuestion[] }> {
    return call(`${this.base}/api/survey`);
  }

  createSession(): Promise<CreateResponse> {
    return call(`${this.base}/api/sessions`, post({}));
  }

  getView(id: string): Promise<CreateResponse> {
    return call(`${this.base}/api/sessions/${id}/round`);
  }

  submitChoice(id: string, route: number): Promise<ChoiceResponse> {
    return call(`${this.base}/api/sessions/${id}/choice`, post({ route }));
  }

  submitReview(id: string, value: number): Promise<ReviewResponse> {
    return call(`${this.base}/api/sessions/${id}/review`, post({ value }));
  }

  getSummary(id: string): Promise<{ summary: SessionSummary }> {
    return call(`${this.base}/api/sessions/${id}/summary`);
  }

  submitSurvey(id: string, answers: SurveyAnswers): Promise<{ stored: string }> {
    return call(`${this.base}/api/sessions/${id}/survey`, post({ answers }));
  }
}
