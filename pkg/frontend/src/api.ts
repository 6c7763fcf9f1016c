/** Typed client for the annotation service JSON API. */

export interface QuestionPayload {
  done: boolean;
  question_id?: number;
  image_id?: string;
  served_at?: number;
  min_view_ms?: number;
  media?: { stimulus: string; gsm: string; left: string; right: string };
  answered: number;
  total: number;
}

export interface AnswerOk {
  ok: boolean;
  answered: number;
  total: number;
}

/** Outcome of an answer submission, normalized across status codes. */
export type AnswerResult =
  | { kind: "ok"; answered: number; total: number }
  | { kind: "too_early"; retryAfterMs: number }
  | { kind: "duplicate" }
  | { kind: "error"; status: number };

export interface Transport {
  openSession(subjectId: string): Promise<{ token: string; total: number }>;
  nextQuestion(token: string): Promise<QuestionPayload>;
  submitAnswer(token: string, questionId: number, choice: "left" | "right"): Promise<AnswerResult>;
  heartbeat(token: string, tabId: string): Promise<{ active_tab: string }>;
}

/** fetch-backed transport talking to the service that hosts the bundle. */
export class HttpTransport implements Transport {
  constructor(private base: string = "") {}

  async openSession(subjectId: string): Promise<{ token: string; total: number }> {
    const resp = await fetch(`${this.base}/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ subject_id: subjectId }),
    });
    if (!resp.ok) throw new Error(`session failed: HTTP ${resp.status}`);
    return resp.json();
  }

  async nextQuestion(token: string): Promise<QuestionPayload> {
    const resp = await fetch(`${this.base}/question?token=${encodeURIComponent(token)}`);
    if (resp.status === 401) throw new Error("session expired");
    if (!resp.ok) throw new Error(`question failed: HTTP ${resp.status}`);
    return resp.json();
  }

  async submitAnswer(
    token: string,
    questionId: number,
    choice: "left" | "right",
  ): Promise<AnswerResult> {
    const resp = await fetch(`${this.base}/answer?token=${encodeURIComponent(token)}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ question_id: questionId, choice }),
    });
    if (resp.ok) {
      const body = (await resp.json()) as AnswerOk;
      return { kind: "ok", answered: body.answered, total: body.total };
    }
    if (resp.status === 422) {
      let retry = 0;
      try {
        const body = await resp.json();
        retry = body?.detail?.retry_after_ms ?? 0;
      } catch {
        retry = 0;
      }
      return { kind: "too_early", retryAfterMs: retry };
    }
    if (resp.status === 409) return { kind: "duplicate" };
    return { kind: "error", status: resp.status };
  }

  async heartbeat(token: string, tabId: string): Promise<{ active_tab: string }> {
    const resp = await fetch(`${this.base}/heartbeat?token=${encodeURIComponent(token)}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ tab_id: tabId }),
    });
    if (!resp.ok) throw new Error(`heartbeat failed: HTTP ${resp.status}`);
    return resp.json();
  }
}
