/** SHAP waterfall rendering: pure layout math plus an SVG string emitter.
 *
 * The chart steps from the served base value through each contribution to
 * the served final value. All numbers are displayed verbatim from the
 * service JSON (formatted to 4 decimals); nothing is recomputed beyond bar
 * positioning.
 */

import type { WaterfallData } from "./types.js";

export type BarSign = "positive" | "negative" | "zero";

export interface WaterfallBar {
  label: string;
  hover: string;
  shap: number;
  sign: BarSign;
  isRemainder: boolean;
  /** running totals this bar spans, in value space */
  from: number;
  to: number;
  /** pixel geometry */
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface WaterfallLayout {
  bars: WaterfallBar[];
  baseX: number;
  finalX: number;
  baseValue: number;
  finalValue: number;
  width: number;
  height: number;
  rowHeight: number;
  labelWidth: number;
}

export const fmt = (value: number): string => value.toFixed(4);

const displayValue = (value: number | string): string =>
  typeof value === "number" ? fmt(value) : String(value);

export function signOf(shap: number): BarSign {
  if (shap > 0) return "positive";
  if (shap < 0) return "negative";
  return "zero";
}

export function computeWaterfallLayout(
  data: WaterfallData,
  width = 640,
  rowHeight = 26,
  labelWidth = 210,
): WaterfallLayout {
  const steps: { label: string; hover: string; shap: number; isRemainder: boolean }[] =
    data.contributions.map((c) => ({
      label: c.name,
      hover: `${c.name} = ${displayValue(c.value)} (SHAP ${c.shap >= 0 ? "+" : ""}${fmt(c.shap)})`,
      shap: c.shap,
      isRemainder: false,
    }));
  if (data.remainder !== 0) {
    steps.push({
      label: `${data.contributions.length} shown; other features`,
      hover: `other features (SHAP ${data.remainder >= 0 ? "+" : ""}${fmt(data.remainder)})`,
      shap: data.remainder,
      isRemainder: true,
    });
  }

  // running totals in value space
  let running = data.base_value;
  const spans = steps.map((step) => {
    const from = running;
    running += step.shap;
    return { ...step, from, to: running };
  });

  const everything = [data.base_value, data.final_value, ...spans.flatMap((s) => [s.from, s.to])];
  const low = Math.min(...everything);
  const high = Math.max(...everything);
  const pad = (high - low || 1) * 0.06;
  const domainLow = low - pad;
  const domainHigh = high + pad;
  const plotWidth = width - labelWidth - 12;
  const toX = (value: number) =>
    labelWidth + ((value - domainLow) / (domainHigh - domainLow)) * plotWidth;

  const bars: WaterfallBar[] = spans.map((span, i) => {
    const x0 = toX(Math.min(span.from, span.to));
    const x1 = toX(Math.max(span.from, span.to));
    return {
      label: span.label,
      hover: span.hover,
      shap: span.shap,
      sign: signOf(span.shap),
      isRemainder: span.isRemainder,
      from: span.from,
      to: span.to,
      x: x0,
      y: i * rowHeight + 4,
      width: Math.max(x1 - x0, 1), // zero-impact bars stay visible as slivers
      height: rowHeight - 8,
    };
  });

  return {
    bars,
    baseX: toX(data.base_value),
    finalX: toX(data.final_value),
    baseValue: data.base_value,
    finalValue: data.final_value,
    width,
    height: bars.length * rowHeight + 28,
    rowHeight,
    labelWidth,
  };
}

const escapeXml = (text: string): string =>
  text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

export function renderWaterfallSvg(data: WaterfallData, width = 640): string {
  const layout = computeWaterfallLayout(data, width);
  const parts: string[] = [
    `<svg class="waterfall" viewBox="0 0 ${layout.width} ${layout.height}" ` +
      `width="${layout.width}" height="${layout.height}" xmlns="http://www.w3.org/2000/svg">`,
  ];
  for (const bar of layout.bars) {
    const cls = `bar ${bar.sign}${bar.isRemainder ? " remainder" : ""}`;
    parts.push(
      `<g class="${cls}">` +
        `<title>${escapeXml(bar.hover)}</title>` +
        `<text class="bar-label" x="${layout.labelWidth - 8}" y="${bar.y + bar.height - 4}" ` +
        `text-anchor="end">${escapeXml(bar.label)}</text>` +
        `<rect x="${bar.x.toFixed(2)}" y="${bar.y}" width="${bar.width.toFixed(2)}" ` +
        `height="${bar.height}"></rect>` +
        `</g>`,
    );
  }
  const markerBottom = layout.bars.length * layout.rowHeight + 6;
  parts.push(
    `<g class="marker base"><title>base value ${fmt(layout.baseValue)}</title>` +
      `<line x1="${layout.baseX.toFixed(2)}" y1="0" x2="${layout.baseX.toFixed(2)}" ` +
      `y2="${markerBottom}"></line>` +
      `<text x="${layout.baseX.toFixed(2)}" y="${markerBottom + 12}" text-anchor="middle">` +
      `base ${fmt(layout.baseValue)}</text></g>`,
  );
  parts.push(
    `<g class="marker final"><title>final value ${fmt(layout.finalValue)}</title>` +
      `<line x1="${layout.finalX.toFixed(2)}" y1="0" x2="${layout.finalX.toFixed(2)}" ` +
      `y2="${markerBottom}"></line>` +
      `<text x="${layout.finalX.toFixed(2)}" y="${markerBottom + 24}" text-anchor="middle">` +
      `final ${fmt(layout.finalValue)}</text></g>`,
  );
  parts.push("</svg>");
  return parts.join("\n");
}
