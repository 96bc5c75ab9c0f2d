/** Single state store behind the UI: session lifecycle, optimistic message
 * submission with a strict one-in-flight rule, and view reconstruction from
 * service state alone (refresh-safe).
 */

import { ApiError, type Api } from "./api.js";
import type { ChatMessage, SessionMode, WaterfallData } from "./types.js";

export interface Bubble {
  role: "user" | "assistant";
  content: string;
  /** set on the optimistic user bubble whose request failed */
  failed?: boolean;
}

export interface SessionView {
  sessionId: string | null;
  mode: SessionMode;
  promptVersion: string | null;
  messages: Bubble[];
  uploaded: boolean;
  uploadError: string | null;
  uploadFields: string[];
  waterfall: WaterfallData | null;
  prediction: number | null;
  inFlight: boolean;
  banner: string | null;
  backendOk: boolean | null;
}

const freshView = (mode: SessionMode): SessionView => ({
  sessionId: null,
  mode,
  promptVersion: null,
  messages: [],
  uploaded: false,
  uploadError: null,
  uploadFields: [],
  waterfall: null,
  prediction: null,
  inFlight: false,
  banner: null,
  backendOk: null,
});

export type Listener = (view: SessionView) => void;

export class SessionStore {
  private view: SessionView;
  private listeners: Listener[] = [];

  constructor(private readonly api: Api, mode: SessionMode = "inferential") {
    this.view = freshView(mode);
  }

  getView(): SessionView {
    return this.view;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    for (const listener of this.listeners) listener(this.view);
  }

  /** Chat is available for domain sessions immediately, otherwise only
   * after an upload succeeded. */
  canChat(): boolean {
    return this.view.sessionId !== null && (this.view.mode === "domain" || this.view.uploaded);
  }

  canSend(text: string): boolean {
    return this.canChat() && !this.view.inFlight && text.trim().length > 0;
  }

  async startSession(mode: SessionMode): Promise<void> {
    this.update(freshView(mode));
    try {
      const info = await this.api.createSession(mode);
      this.update({ sessionId: info.session_id, promptVersion: info.prompt_version, banner: null });
    } catch (error) {
      this.update({ banner: describe(error) });
    }
  }

  /** Rebuild the whole view from service state (page refresh, reconnect). */
  async loadSessionView(sessionId: string, mode: SessionMode): Promise<void> {
    this.update({ ...freshView(mode), sessionId });
    try {
      const [history, waterfall] = await Promise.all([
        this.api.getHistory(sessionId),
        this.api.getExplanation(sessionId),
      ]);
      this.update({
        messages: history
          .filter((m): m is ChatMessage & { role: "user" | "assistant" } => m.role !== "system")
          .map((m) => ({ role: m.role, content: m.content })),
        waterfall,
        uploaded: waterfall !== null,
        prediction: waterfall ? waterfall.final_value : null,
        banner: null,
      });
    } catch (error) {
      this.update({ banner: describe(error) });
    }
  }

  async upload(values: (number | string)[]): Promise<void> {
    if (!this.view.sessionId) return;
    try {
      const result = await this.api.uploadInstance(this.view.sessionId, values);
      // the service clears history on re-upload; mirror that
      this.update({
        uploaded: true,
        uploadError: null,
        uploadFields: [],
        waterfall: result.waterfall,
        prediction: result.prediction,
        messages: [],
        mode: "inferential",
        banner: null,
      });
    } catch (error) {
      if (error instanceof ApiError) {
        this.update({ uploadError: error.message, uploadFields: error.fields });
      } else {
        this.update({ banner: describe(error) });
      }
    }
  }

  /** Optimistic send with a strict single-flight rule: returns false when
   * the message was not dispatched (empty, no session, or one in flight). */
  async submitMessage(text: string): Promise<boolean> {
    const question = text.trim();
    if (!this.canSend(question) || this.view.sessionId === null) return false;
    const optimistic: Bubble = { role: "user", content: question };
    this.update({ messages: [...this.view.messages, optimistic], inFlight: true, banner: null });
    try {
      const answer = await this.api.ask(this.view.sessionId, question);
      this.update({
        messages: [...this.view.messages, { role: "assistant", content: answer }],
        inFlight: false,
      });
      return true;
    } catch (error) {
      // keep the user bubble, mark it retryable, add no phantom assistant turn
      const messages = this.view.messages.map((m) =>
        m === optimistic ? { ...m, failed: true } : m,
      );
      this.update({ messages, inFlight: false, banner: describe(error) });
      return false;
    }
  }

  /** Re-send the last failed user bubble. */
  async retryLastFailed(): Promise<boolean> {
    const failed = [...this.view.messages].reverse().find((m) => m.failed);
    if (!failed) return false;
    this.update({ messages: this.view.messages.filter((m) => m !== failed) });
    return this.submitMessage(failed.content);
  }

  async refreshHealth(): Promise<void> {
    try {
      const health = await this.api.health();
      this.update({ backendOk: health.backend_ok });
    } catch {
      this.update({ backendOk: false });
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return error.message;
  if (error instanceof Error) return `service unreachable: ${error.message}`;
  return String(error);
}
