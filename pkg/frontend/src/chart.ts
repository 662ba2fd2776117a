/** Minimal dependency-free SVG chart: mu lines with shaded +/- sigma bands,
 * low-confidence point flags, and overlaid comparison curves. */

import type { SweepView } from "./sweep.js";

export const SERIES_COLORS = ["#c0392b", "#2980b9", "#27ae60"];

export interface ChartGeometry {
  width: number;
  height: number;
  margin: number;
}

export const DEFAULT_GEOMETRY: ChartGeometry = { width: 640, height: 360, margin: 48 };

interface Scale {
  (value: number): number;
}

function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

export function renderSweepChart(
  views: SweepView[],
  geometry: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  const { width, height, margin } = geometry;
  if (!views.length) {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}"></svg>`;
  }
  const xs = views.flatMap((v) => v.durations);
  const los = views.flatMap((v) => v.bandLo);
  const his = views.flatMap((v) => v.bandHi);
  const x = linearScale(Math.min(...xs), Math.max(...xs), margin, width - margin);
  const y = linearScale(Math.min(...los), Math.max(...his), height - margin, margin);

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" role="img">`,
  ];
  views.forEach((view, s) => {
    const color = SERIES_COLORS[s % SERIES_COLORS.length];
    const upper = view.durations.map((d, i) => `${x(d)},${y(view.bandHi[i])}`);
    const lower = [...view.durations.keys()]
      .reverse()
      .map((i) => `${x(view.durations[i])},${y(view.bandLo[i])}`);
    parts.push(
      `<polygon class="band" data-series="${s}" fill="${color}" fill-opacity="0.15" ` +
        `stroke="none" points="${[...upper, ...lower].join(" ")}"/>`,
    );
    const path = view.durations
      .map((d, i) => `${i === 0 ? "M" : "L"}${x(d)},${y(view.line[i])}`)
      .join(" ");
    parts.push(
      `<path class="mu-line" data-series="${s}" fill="none" stroke="${color}" stroke-width="2" d="${path}"/>`,
    );
    view.durations.forEach((d, i) => {
      const c = view.confidence[i];
      const title = `o=${fmt(d)} value=${fmt(view.line[i])} confidence=${c === null ? "n/a" : c.toFixed(4)}`;
      const flagged = view.lowConfidence[i] ? ' data-low-confidence="true"' : "";
      parts.push(
        `<circle class="mu-point" data-series="${s}" data-index="${i}"${flagged} ` +
          `cx="${x(d)}" cy="${y(view.line[i])}" r="4" fill="${color}">` +
          `<title>${title}</title></circle>`,
      );
    });
  });
  parts.push("</svg>");
  return parts.join("\n");
}
