/** DOM wiring: two-pane layout (chat left; upload + waterfall right).
 * All state of record lives in the service; the URL hash carries only the
 * session id + mode so a refresh reconstructs the identical view.
 */

import { ApiClient } from "./api.js";
import { SessionStore, type SessionView } from "./store.js";
import { fmt, renderWaterfallSvg } from "./waterfall.js";

const SERVICE_URL = (window as { SHAPCHAT_SERVICE_URL?: string }).SHAPCHAT_SERVICE_URL ?? "";

const FEATURES: { name: string; kind: "number" | "select"; options?: string[]; initial: string }[] = [
  { name: "battery_type", kind: "select", options: ["LFP", "NMC", "NCA"], initial: "NMC" },
  { name: "cycle_count", kind: "number", initial: "1200" },
  { name: "avg_temperature_c", kind: "number", initial: "32" },
  { name: "avg_depth_of_discharge_pct", kind: "number", initial: "70" },
  { name: "avg_charge_rate_c", kind: "number", initial: "1.5" },
  { name: "calendar_age_days", kind: "number", initial: "900" },
  { name: "storage_soc_pct", kind: "number", initial: "55" },
];

const store = new SessionStore(new ApiClient(SERVICE_URL));
const root = document.getElementById("app")!;

function esc(text: string): string {
  const div = document.createElement("div");
  div.textContent = text;
  return div.innerHTML;
}

function hashState(): { sessionId: string | null; mode: "domain" | "inferential" } {
  const params = new URLSearchParams(window.location.hash.slice(1));
  const mode = params.get("mode") === "domain" ? "domain" : "inferential";
  return { sessionId: params.get("session"), mode };
}

function writeHash(view: SessionView): void {
  if (!view.sessionId) return;
  const params = new URLSearchParams({ session: view.sessionId, mode: view.mode });
  history.replaceState(null, "", `#${params}`);
}

function render(view: SessionView): void {
  writeHash(view);
  const chatDisabled = !store.canChat() || view.inFlight;
  const hint = !view.sessionId
    ? "starting a session…"
    : !store.canChat()
      ? "upload battery data first; inferential sessions answer about one uploaded instance"
      : view.inFlight
        ? "waiting for the assistant…"
        : "";

  root.innerHTML = `
    <header>
      <h1>Battery SoH explainer</h1>
      <div class="session-meta">
        <label>mode
          <select id="mode">
            <option value="inferential" ${view.mode === "inferential" ? "selected" : ""}>inferential</option>
            <option value="domain" ${view.mode === "domain" ? "selected" : ""}>domain</option>
          </select>
        </label>
        <button id="new-session">new session</button>
        <span class="backend ${view.backendOk === false ? "down" : "up"}">
          ${view.backendOk === null ? "" : view.backendOk ? "backend ok" : "backend down"}
        </span>
      </div>
    </header>
    ${view.banner ? `<div class="banner">${esc(view.banner)} <button id="retry">retry</button></div>` : ""}
    <main>
      <section class="chat-pane">
        <div class="bubbles" id="bubbles">
          ${view.messages
            .map(
              (m) => `
            <div class="bubble ${m.role}${m.failed ? " failed" : ""}">
              ${esc(m.content)}
              ${m.failed ? '<button class="retry-bubble" id="retry-bubble">retry</button>' : ""}
            </div>`,
            )
            .join("")}
          ${hint ? `<div class="hint">${esc(hint)}</div>` : ""}
        </div>
        <form id="ask-form" class="ask">
          <input id="question" type="text" placeholder="ask about this battery…"
                 ${chatDisabled ? "disabled" : ""} autocomplete="off" />
          <button id="send" type="submit" disabled>send</button>
        </form>
      </section>
      <section class="explain-pane">
        <form id="upload-form" class="upload ${view.uploaded ? "" : "prominent"}">
          <h2>battery instance</h2>
          ${FEATURES.map((f) =>
            f.kind === "select"
              ? `<label>${f.name}
                   <select name="${f.name}">
                     ${f.options!.map((o) => `<option ${o === f.initial ? "selected" : ""}>${o}</option>`).join("")}
                   </select></label>`
              : `<label>${f.name}
                   <input name="${f.name}" type="number" step="any" value="${f.initial}" /></label>`,
          ).join("")}
          <button type="submit">upload &amp; explain</button>
          ${view.uploadError ? `<div class="upload-error">${esc(view.uploadError)}</div>` : ""}
        </form>
        <div class="waterfall-pane">
          ${
            view.waterfall
              ? `<h2>prediction ${view.prediction !== null ? fmt(view.prediction) : ""}</h2>
                 ${renderWaterfallSvg(view.waterfall)}`
              : view.mode === "inferential"
                ? ""
                : '<div class="hint">domain session (no instance explanation)</div>'
          }
        </div>
      </section>
    </main>`;

  const question = document.getElementById("question") as HTMLInputElement | null;
  const send = document.getElementById("send") as HTMLButtonElement | null;
  if (question && send) {
    const sync = () => {
      send.disabled = !store.canSend(question.value);
    };
    question.addEventListener("input", sync);
    sync();
  }
  document.getElementById("ask-form")?.addEventListener("submit", (event) => {
    event.preventDefault();
    if (question && store.canSend(question.value)) void store.submitMessage(question.value);
  });
  document.getElementById("upload-form")?.addEventListener("submit", (event) => {
    event.preventDefault();
    const form = event.target as HTMLFormElement;
    const values = FEATURES.map((f) => {
      const field = form.elements.namedItem(f.name) as HTMLInputElement | HTMLSelectElement;
      return f.kind === "number" ? Number(field.value) : field.value;
    });
    void store.upload(values);
  });
  document.getElementById("new-session")?.addEventListener("click", () => {
    const mode = (document.getElementById("mode") as HTMLSelectElement).value as
      | "domain"
      | "inferential";
    void store.startSession(mode);
  });
  document.getElementById("retry")?.addEventListener("click", () => void store.retryLastFailed());
  document.getElementById("retry-bubble")?.addEventListener("click", () => void store.retryLastFailed());

  const bubbles = document.getElementById("bubbles");
  if (bubbles) bubbles.scrollTop = bubbles.scrollHeight;
}

store.subscribe(render);
render(store.getView());
void store.refreshHealth();

const initial = hashState();
if (initial.sessionId) {
  void store.loadSessionView(initial.sessionId, initial.mode);
} else {
  void store.startSession(initial.mode);
}
