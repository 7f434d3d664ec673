// Thin typed client for the agentrec HTTP API. All console data comes
// through these five calls; nothing is synthesized client-side.

import type { ApiErrorBody, ReportsJson, SessionJson, TurnResponse } from "./types.js";

export const MAX_IMAGE_BYTES = 5 * 1024 * 1024;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface ImageUpload {
  bytes: string; // base64
  media_type: string;
  byteLength: number;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ConsoleApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async startSession(userId: string): Promise<string> {
    if (!userId.trim()) {
      throw new ApiError(0, "client_validation", "user id must not be blank");
    }
    const body = await this.post<{ session_id: string }>("/sessions", { user_id: userId.trim() });
    return body.session_id;
  }

  async submitQuery(sessionId: string, text: string, image?: ImageUpload): Promise<TurnResponse> {
    if (image && image.byteLength > MAX_IMAGE_BYTES) {
      throw new ApiError(0, "client_validation", "image exceeds the 5 MB upload bound");
    }
    const payload: Record<string, unknown> = { text };
    if (image) payload.image = { bytes: image.bytes, media_type: image.media_type };
    return this.post<TurnResponse>(`/sessions/${sessionId}/query`, payload);
  }

  async answerFollowup(sessionId: string, questionId: string, answer: string): Promise<TurnResponse> {
    if (!answer.trim()) {
      throw new ApiError(0, "client_validation", "answer must not be blank");
    }
    return this.post<TurnResponse>(`/sessions/${sessionId}/followups/${questionId}`, {
      answer: answer.trim(),
    });
  }

  async getSession(sessionId: string): Promise<SessionJson> {
    return this.get<SessionJson>(`/sessions/${sessionId}`);
  }

  async getReports(): Promise<ReportsJson> {
    return this.get<ReportsJson>("/reports");
  }

  private async post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  private async get<T>(path: string): Promise<T> {
    return this.request<T>(path, { method: "GET" });
  }

  private async request<T>(path: string, init: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "connection_failed", `cannot reach ${this.baseUrl}: ${err}`);
    }
    if (!response.ok) {
      let body: Partial<ApiErrorBody> = {};
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(
        response.status,
        body.code ?? `http_${response.status}`,
        body.message ?? response.statusText,
      );
    }
    return (await response.json()) as T;
  }
}
