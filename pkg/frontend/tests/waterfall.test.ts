import { describe, expect, it } from "vitest";

import { computeWaterfallLayout, renderWaterfallSvg, signOf } from "../src/waterfall.js";
import type { WaterfallData } from "../src/types.js";

const served: WaterfallData = {
  base_value: 0.82,
  contributions: [
    { name: "cycle_count", value: 2400, shap: -0.12 },
    { name: "avg_temperature_c", value: 44.0, shap: -0.05 },
    { name: "battery_type", value: "NCA", shap: 0.03 },
  ],
  remainder: 0.01,
  final_value: 0.69,
};

describe("computeWaterfallLayout", () => {
  it("renders one bar per served contribution plus the remainder", () => {
    const layout = computeWaterfallLayout(served);
    expect(layout.bars).toHaveLength(4);
    expect(layout.bars.filter((b) => b.isRemainder)).toHaveLength(1);
  });

  it("omits the remainder bar when the remainder is zero", () => {
    const layout = computeWaterfallLayout({ ...served, remainder: 0, final_value: 0.68 });
    expect(layout.bars).toHaveLength(3);
    expect(layout.bars.every((b) => !b.isRemainder)).toBe(true);
  });

  it("styles bars by sign", () => {
    const layout = computeWaterfallLayout(served);
    expect(layout.bars.map((b) => b.sign)).toEqual([
      "negative",
      "negative",
      "positive",
      "positive",
    ]);
    expect(signOf(0)).toBe("zero");
  });

  it("final marker equals base plus the sum of all bars, recomputed from JSON", () => {
    const layout = computeWaterfallLayout(served);
    const recomputed = served.base_value + layout.bars.reduce((sum, b) => sum + b.shap, 0);
    expect(Math.abs(recomputed - served.final_value)).toBeLessThan(1e-9);
    // and in pixel space: the last bar ends exactly at the final marker
    const last = layout.bars[layout.bars.length - 1]!;
    expect(Math.abs(last.to - layout.finalValue)).toBeLessThan(1e-9);
  });

  it("bars chain: each starts where the previous ended", () => {
    const layout = computeWaterfallLayout(served);
    expect(layout.bars[0]!.from).toBe(served.base_value);
    for (let i = 1; i < layout.bars.length; i++) {
      expect(layout.bars[i]!.from).toBeCloseTo(layout.bars[i - 1]!.to, 12);
    }
  });
});

describe("renderWaterfallSvg", () => {
  it("emits sign-classed rects, hover values to 4 decimals, and both markers", () => {
    const svg = renderWaterfallSvg(served);
    expect(svg.match(/<rect /g)).toHaveLength(4);
    expect(svg).toContain('class="bar negative"');
    expect(svg).toContain('class="bar positive"');
    expect(svg).toContain("cycle_count = 2400.0000 (SHAP -0.1200)");
    expect(svg).toContain("battery_type = NCA (SHAP +0.0300)");
    expect(svg).toContain("base 0.8200");
    expect(svg).toContain("final 0.6900");
    expect(svg).toContain('class="marker base"');
    expect(svg).toContain('class="marker final"');
  });

  it("escapes markup in feature names", () => {
    const hostile: WaterfallData = {
      base_value: 0,
      contributions: [{ name: "<script>", value: 1, shap: 0.5 }],
      remainder: 0,
      final_value: 0.5,
    };
    const svg = renderWaterfallSvg(hostile);
    expect(svg).not.toContain("<script>");
    expect(svg).toContain("&lt;script&gt;");
  });
});
