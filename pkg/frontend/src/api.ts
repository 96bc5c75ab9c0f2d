/** Typed client for the chat service HTTP API. */

import type {
  ChatMessage,
  HealthStatus,
  SessionInfo,
  SessionMode,
  UploadResult,
  WaterfallData,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
    public readonly fields: string[] = [],
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<never> {
  let message = `HTTP ${response.status}`;
  let fields: string[] = [];
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") message = body.error;
    if (Array.isArray(body?.fields)) fields = body.fields;
  } catch {
    // non-JSON error body; keep the status message
  }
  throw new ApiError(response.status, message, fields);
}

/** What the store needs from a client; ApiClient is the fetch-backed one. */
export interface Api {
  createSession(mode: SessionMode): Promise<SessionInfo>;
  uploadInstance(sessionId: string, values: (number | string)[]): Promise<UploadResult>;
  ask(sessionId: string, question: string): Promise<string>;
  getExplanation(sessionId: string): Promise<WaterfallData | null>;
  getHistory(sessionId: string): Promise<ChatMessage[]>;
  health(): Promise<HealthStatus>;
}

export class ApiClient implements Api {
  constructor(private readonly baseUrl: string = "") {}

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  async createSession(mode: SessionMode): Promise<SessionInfo> {
    return this.post<SessionInfo>("/api/sessions", { mode });
  }

  async uploadInstance(sessionId: string, values: (number | string)[]): Promise<UploadResult> {
    return this.post<UploadResult>(`/api/sessions/${sessionId}/instance`, { values });
  }

  async ask(sessionId: string, question: string): Promise<string> {
    const body = await this.post<{ answer: string }>(
      `/api/sessions/${sessionId}/messages`,
      { question },
    );
    return body.answer;
  }

  /** null when nothing has been uploaded yet (204). */
  async getExplanation(sessionId: string): Promise<WaterfallData | null> {
    const response = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/explanation`);
    if (response.status === 204) return null;
    if (!response.ok) await parseError(response);
    return (await response.json()) as WaterfallData;
  }

  async getHistory(sessionId: string): Promise<ChatMessage[]> {
    const response = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/history`);
    if (!response.ok) await parseError(response);
    const body = (await response.json()) as { messages: ChatMessage[] };
    return body.messages;
  }

  async health(): Promise<HealthStatus> {
    const response = await fetch(`${this.baseUrl}/healthz`);
    if (!response.ok) await parseError(response);
    return (await response.json()) as HealthStatus;
  }
}
