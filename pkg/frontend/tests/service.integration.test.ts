/** End-to-end UI contract against a real service process with the mock
 * backend: waterfall bars mirror the served JSON (count, signs, final
 * marker) and the single-flight rule holds over the wire.
 *
 * Skipped automatically when the Python package is not installed.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ApiClient } from "../src/api.js";
import { SessionStore } from "../src/store.js";
import { computeWaterfallLayout, renderWaterfallSvg } from "../src/waterfall.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

const pythonAvailable =
  spawnSync("python3", ["-c", "import shapchat"], { timeout: 20_000 }).status === 0;

let server: ChildProcess | null = null;

function runCli(args: string[]): void {
  const result = spawnSync("python3", ["-m", "shapchat.cli", ...args], { timeout: 120_000 });
  if (result.status !== 0) {
    throw new Error(`shapchat ${args[0]} failed: ${result.stderr?.toString()}`);
  }
}

async function waitForHealth(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/healthz`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error("service did not become healthy in time");
}

describe.skipIf(!pythonAvailable)("UI against a live mock-backed service", () => {
  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "shapchat-ui-"));
    const data = join(dir, "data.csv");
    const model = join(dir, "model.json");
    runCli(["synth", "--n", "150", "--seed", "17", "--out", data, "--quiet"]);
    runCli([
      "train", "--data", data, "--n-trees", "15", "--seed", "17", "--out", model, "--quiet",
    ]);
    const config = join(dir, "service.json");
    writeFileSync(
      config,
      JSON.stringify({ model_path: model, background_path: data, port: PORT }),
    );
    server = spawn(
      "python3",
      ["-m", "shapchat.cli", "serve", "--config", config, "--mock-backend",
       "--port", String(PORT), "--quiet"],
      { stdio: "ignore" },
    );
    await waitForHealth();
  }, 120_000);

  afterAll(() => {
    server?.kill();
  });

  it("renders one sign-correct bar per served contribution and a consistent final marker", async () => {
    const api = new ApiClient(BASE);
    const session = await api.createSession("inferential");
    const upload = await api.uploadInstance(session.session_id, [
      "NCA", 2600.0, 45.0, 90.0, 2.8, 3200.0, 30.0,
    ]);
    const served = await api.getExplanation(session.session_id);
    expect(served).not.toBeNull();
    expect(served).toEqual(upload.waterfall);

    const layout = computeWaterfallLayout(served!);
    const expectedBars = served!.contributions.length + (served!.remainder !== 0 ? 1 : 0);
    expect(layout.bars).toHaveLength(expectedBars);
    for (let i = 0; i < served!.contributions.length; i++) {
      const contribution = served!.contributions[i]!;
      const bar = layout.bars[i]!;
      expect(bar.label).toBe(contribution.name);
      expect(bar.sign).toBe(
        contribution.shap > 0 ? "positive" : contribution.shap < 0 ? "negative" : "zero",
      );
    }

    // final marker = base + sum of bars, recomputed from the served JSON
    const recomputed = served!.base_value + layout.bars.reduce((sum, b) => sum + b.shap, 0);
    expect(Math.abs(recomputed - served!.final_value)).toBeLessThan(1e-9);
    expect(Math.abs(layout.finalValue - recomputed)).toBeLessThan(1e-9);

    const svg = renderWaterfallSvg(served!);
    expect(svg.match(/<rect /g)).toHaveLength(expectedBars);
  });

  it("holds the single-flight send rule against the live service", async () => {
    const store = new SessionStore(new ApiClient(BASE));
    await store.startSession("inferential");
    await store.upload(["NMC", 1500.0, 35.0, 75.0, 1.9, 1800.0, 50.0]);
    expect(store.canChat()).toBe(true);

    const first = store.submitMessage("what matters most?");
    const second = await store.submitMessage("second while in flight");
    expect(second).toBe(false);
    expect(await first).toBe(true);

    const view = store.getView();
    expect(view.messages).toHaveLength(2);
    expect(view.messages[0]!.content).toBe("what matters most?");
    // the echoing mock names the top feature from the served info prompt
    expect(view.messages[1]!.content).toMatch(/cycle_count|calendar_age_days|avg_/);

    // refresh: the view rebuilds identically from service state alone
    const sessionId = view.sessionId!;
    const reborn = new SessionStore(new ApiClient(BASE));
    await reborn.loadSessionView(sessionId, "inferential");
    expect(reborn.getView().messages).toEqual(
      view.messages.map(({ role, content }) => ({ role, content })),
    );
    expect(reborn.getView().waterfall).toEqual(view.waterfall);
  });
});
