// Progress chart as a pure function of the progress payload: cumulative
// anomalies seen vs queries made, rendered to SVG markup.

import { Progress } from "./types.js";

export interface ChartGeometry {
  width: number;
  height: number;
  pad: number;
}

export const DEFAULT_GEOMETRY: ChartGeometry = { width: 420, height: 180, pad: 28 };

export function chartPoints(progress: Progress, geom: ChartGeometry = DEFAULT_GEOMETRY): [number, number][] {
  const curve = progress.curve;
  const maxX = Math.max(progress.budget, curve.length, 1);
  const maxY = Math.max(...curve, 1);
  const w = geom.width - 2 * geom.pad;
  const h = geom.height - 2 * geom.pad;
  return curve.map((y, i) => [
    geom.pad + ((i + 1) / maxX) * w,
    geom.height - geom.pad - (y / maxY) * h,
  ]);
}

export function chartPath(progress: Progress, geom: ChartGeometry = DEFAULT_GEOMETRY): string {
  const pts = chartPoints(progress, geom);
  if (pts.length === 0) return "";
  return pts.map(([x, y], i) => `${i === 0 ? "M" : "L"}${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
}

export function renderChart(progress: Progress, geom: ChartGeometry = DEFAULT_GEOMETRY): string {
  const path = chartPath(progress, geom);
  const label = `${progress.anomalies_seen} anomalies / ${progress.queries_made} queries`;
  return [
    `<svg viewBox="0 0 ${geom.width} ${geom.height}" class="chart" role="img" aria-label="anomalies seen vs queries">`,
    `<line x1="${geom.pad}" y1="${geom.height - geom.pad}" x2="${geom.width - geom.pad}" y2="${geom.height - geom.pad}" class="axis"/>`,
    `<line x1="${geom.pad}" y1="${geom.pad}" x2="${geom.pad}" y2="${geom.height - geom.pad}" class="axis"/>`,
    path ? `<path d="${path}" class="curve" fill="none"/>` : "",
    `<text x="${geom.width - geom.pad}" y="${geom.pad - 8}" text-anchor="end" class="chart-label">${label}</text>`,
    `</svg>`,
  ].join("");
}
