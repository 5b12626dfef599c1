import {
  AnnotationTask,
  RatingRow,
  ServiceRejection,
  SubmitResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type ApiResult<T> =
  | { ok: true; value: T }
  | { ok: false; status: number; rejection: ServiceRejection };

async function rejectionOf(response: Response): Promise<ServiceRejection> {
  try {
    const body = await response.json();
    const detail = body?.detail;
    if (detail && typeof detail === "object" && "code" in detail) {
      return { code: detail.code, detail: detail.detail ?? "" };
    }
    return { code: "http_error", detail: JSON.stringify(body) };
  } catch {
    return { code: "http_error", detail: `status ${response.status}` };
  }
}

/** Thin client over the annotation-service HTTP API; the webapp talks to
 * nothing else. */
export class AnnotationClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async nextTask(
    sessionId: string,
    annotator: string,
  ): Promise<ApiResult<AnnotationTask>> {
    const url =
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/next-task` +
      `?annotator=${encodeURIComponent(annotator)}`;
    const response = await this.fetchImpl(url);
    if (!response.ok) {
      return { ok: false, status: response.status, rejection: await rejectionOf(response) };
    }
    return { ok: true, value: (await response.json()) as AnnotationTask };
  }

  async submitRatings(
    taskId: string,
    rows: RatingRow[],
  ): Promise<ApiResult<SubmitResponse>> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/tasks/${encodeURIComponent(taskId)}/ratings`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ ratings: rows }),
      },
    );
    if (!response.ok) {
      return { ok: false, status: response.status, rejection: await rejectionOf(response) };
    }
    return { ok: true, value: (await response.json()) as SubmitResponse };
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchImpl(`${this.baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  }
}
