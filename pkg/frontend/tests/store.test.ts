import { describe, expect, it } from "vitest";

import type { Api } from "../src/api.js";
import { ApiError } from "../src/api.js";
import { SessionStore } from "../src/store.js";
import type { UploadResult, WaterfallData } from "../src/types.js";

const waterfall: WaterfallData = {
  base_value: 0.8,
  contributions: [{ name: "cycle_count", value: 2000, shap: -0.1 }],
  remainder: 0,
  final_value: 0.7,
};

const uploadResult: UploadResult = {
  prediction: 0.7,
  explanation: {
    base_value: 0.8,
    shap_values: [-0.1],
    feature_values: [2000],
    prediction: 0.7,
    method: "kernel",
    feature_names: ["cycle_count"],
    n_samples: 0,
  },
  waterfall,
};

interface FakeOptions {
  askDelayMs?: number;
  failAsks?: number;
}

function fakeApi(options: FakeOptions = {}): Api & { askCalls: string[] } {
  let failures = options.failAsks ?? 0;
  const api = {
    askCalls: [] as string[],
    async createSession(mode: "domain" | "inferential") {
      return { session_id: "s1", prompt_version: "1.0" };
    },
    async uploadInstance() {
      return uploadResult;
    },
    async ask(_session: string, question: string) {
      api.askCalls.push(question);
      if (failures > 0) {
        failures -= 1;
        throw new ApiError(502, "backend failure: scripted");
      }
      if (options.askDelayMs) {
        await new Promise((resolve) => setTimeout(resolve, options.askDelayMs));
      }
      return `answer to: ${question}`;
    },
    async getExplanation() {
      return waterfall;
    },
    async getHistory() {
      return [
        { role: "user" as const, content: "q1" },
        { role: "assistant" as const, content: "a1" },
      ];
    },
    async health() {
      return { status: "ok", model_loaded: true, backend_ok: true };
    },
  };
  return api;
}

describe("session gating", () => {
  it("inferential sessions cannot chat before an upload", async () => {
    const store = new SessionStore(fakeApi());
    await store.startSession("inferential");
    expect(store.canChat()).toBe(false);
    expect(store.canSend("hello")).toBe(false);
    await store.upload(["NMC", 1, 2, 3, 4, 5, 6]);
    expect(store.canChat()).toBe(true);
  });

  it("domain sessions chat immediately", async () => {
    const store = new SessionStore(fakeApi());
    await store.startSession("domain");
    expect(store.canChat()).toBe(true);
    expect(store.getView().waterfall).toBeNull();
  });

  it("empty text can never be sent", async () => {
    const store = new SessionStore(fakeApi());
    await store.startSession("domain");
    expect(store.canSend("")).toBe(false);
    expect(store.canSend("   ")).toBe(false);
    expect(await store.submitMessage("   ")).toBe(false);
  });
});

describe("optimistic submission and the single-flight rule", () => {
  it("adds the user bubble immediately and the assistant bubble on response", async () => {
    const store = new SessionStore(fakeApi({ askDelayMs: 5 }));
    await store.startSession("domain");
    const pending = store.submitMessage("why is SoH low?");
    expect(store.getView().messages).toEqual([{ role: "user", content: "why is SoH low?" }]);
    expect(store.getView().inFlight).toBe(true);
    expect(await pending).toBe(true);
    expect(store.getView().messages).toHaveLength(2);
    expect(store.getView().messages[1]).toEqual({
      role: "assistant",
      content: "answer to: why is SoH low?",
    });
    expect(store.getView().inFlight).toBe(false);
  });

  it("blocks a second send while one is in flight", async () => {
    const api = fakeApi({ askDelayMs: 10 });
    const store = new SessionStore(api);
    await store.startSession("domain");
    const first = store.submitMessage("first");
    const second = await store.submitMessage("second");
    expect(second).toBe(false);
    await first;
    expect(api.askCalls).toEqual(["first"]);
    expect(store.getView().messages).toHaveLength(2);
  });

  it("a failed send keeps the user bubble, marks it retryable, adds no phantom turn", async () => {
    const store = new SessionStore(fakeApi({ failAsks: 1 }));
    await store.startSession("domain");
    expect(await store.submitMessage("flaky?")).toBe(false);
    const view = store.getView();
    expect(view.messages).toEqual([{ role: "user", content: "flaky?", failed: true }]);
    expect(view.banner).toContain("backend failure");
    expect(view.inFlight).toBe(false);

    expect(await store.retryLastFailed()).toBe(true);
    expect(store.getView().messages).toEqual([
      { role: "user", content: "flaky?" },
      { role: "assistant", content: "answer to: flaky?" },
    ]);
  });
});

describe("view reconstruction", () => {
  it("rebuilds messages and waterfall purely from service state", async () => {
    const store = new SessionStore(fakeApi());
    await store.loadSessionView("s1", "inferential");
    const view = store.getView();
    expect(view.messages).toEqual([
      { role: "user", content: "q1" },
      { role: "assistant", content: "a1" },
    ]);
    expect(view.waterfall).toEqual(waterfall);
    expect(view.uploaded).toBe(true);
    expect(store.canChat()).toBe(true);
  });

  it("upload validation errors surface field names without breaking the view", async () => {
    const api = fakeApi();
    api.uploadInstance = async () => {
      throw new ApiError(400, "invalid value for feature(s): battery_type", ["battery_type"]);
    };
    const store = new SessionStore(api);
    await store.startSession("inferential");
    await store.upload(["XYZ", 1, 2, 3, 4, 5, 6]);
    const view = store.getView();
    expect(view.uploadError).toContain("battery_type");
    expect(view.uploadFields).toEqual(["battery_type"]);
    expect(view.uploaded).toBe(false);
  });
});
