/**
 * Pure SVG builders for the panel datasets. Strings only, no DOM, so the
 * exact markup is snapshot-testable. Axes are minimal: this is an
 * engineering readout, not a charting library.
 */

import { CiPanel, FanPanel, TimelinePanel } from "./panels.js";

export const WIDTH = 560;
export const HEIGHT = 220;
const PAD = 36;

interface Scale {
  x: (v: number) => number;
  y: (v: number) => number;
}

function fmt(v: number): string {
  return Number.isFinite(v) ? v.toFixed(2) : "0";
}

function makeScale(xs: number[], ys: number[]): Scale {
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  return {
    x: (v) => PAD + ((v - xMin) / xSpan) * (WIDTH - 2 * PAD),
    y: (v) => HEIGHT - PAD - ((v - yMin) / ySpan) * (HEIGHT - 2 * PAD),
  };
}

function polyline(xs: number[], ys: number[], scale: Scale, cls: string): string {
  const pts = xs.map((x, i) => `${fmt(scale.x(x))},${fmt(scale.y(ys[i]))}`).join(" ");
  return `<polyline class="${cls}" fill="none" points="${pts}"/>`;
}

function band(xs: number[], lo: number[], hi: number[], scale: Scale, cls: string): string {
  const upper = xs.map((x, i) => `${fmt(scale.x(x))},${fmt(scale.y(hi[i]))}`);
  const lower = xs
    .slice()
    .reverse()
    .map((x, i) => `${fmt(scale.x(x))},${fmt(scale.y(lo[xs.length - 1 - i]))}`);
  return `<polygon class="${cls}" points="${upper.join(" ")} ${lower.join(" ")}"/>`;
}

function frame(title: string, body: string): string {
  return (
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" xmlns="http://www.w3.org/2000/svg" role="img">` +
    `<title>${title}</title>` +
    `<rect class="panel-bg" x="0" y="0" width="${WIDTH}" height="${HEIGHT}"/>` +
    body +
    `</svg>`
  );
}

function emptyState(title: string, message: string): string {
  return frame(
    title,
    `<text class="empty-state" x="${WIDTH / 2}" y="${HEIGHT / 2}" text-anchor="middle">${message}</text>`,
  );
}

function vline(week: number, scale: Scale, cls: string): string {
  const x = fmt(scale.x(week));
  return `<line class="${cls}" x1="${x}" y1="${PAD}" x2="${x}" y2="${HEIGHT - PAD}"/>`;
}

function hline(value: number, scale: Scale, cls: string): string {
  const y = fmt(scale.y(value));
  return `<line class="${cls}" x1="${PAD}" y1="${y}" x2="${WIDTH - PAD}" y2="${y}"/>`;
}

export function renderTimeline(panel: TimelinePanel): string {
  if (panel.weeks.length === 0) {
    return emptyState("Surcharge height over time", "no surcharge timeline yet");
  }
  const scale = makeScale(panel.weeks, [0, ...panel.heightM]);
  let body = polyline(panel.weeks, panel.heightM, scale, "timeline-step");
  if (panel.decisionWeek !== null) {
    body += vline(panel.decisionWeek, scale, "decision-marker");
  }
  return frame("Surcharge height over time [m]", body);
}

export function renderFan(panel: FanPanel): string {
  if (panel.empty) {
    return emptyState("Settlement belief fan", "no belief summary available");
  }
  const allY = [
    ...panel.bands.q05,
    ...panel.bands.q95,
    panel.sTargetM,
    ...panel.measurements.map((m) => m.valueM),
  ];
  const scale = makeScale(panel.weeks, allY);
  let body = band(panel.weeks, panel.bands.q05, panel.bands.q95, scale, "fan-outer");
  body += band(panel.weeks, panel.bands.q25, panel.bands.q75, scale, "fan-inner");
  body += polyline(panel.weeks, panel.bands.q50, scale, "fan-median");
  body += hline(panel.sTargetM, scale, "target-line");
  if (panel.decisionWeek !== null) {
    body += vline(panel.decisionWeek, scale, "decision-marker");
  }
  for (const m of panel.measurements) {
    body += `<circle class="measurement" cx="${fmt(scale.x(m.week))}" cy="${fmt(scale.y(m.valueM))}" r="2.5"/>`;
  }
  return frame("Settlement belief fan [m] with measurements", body);
}

export function renderCi(panel: CiPanel): string {
  const title =
    panel.quantity === "s_tmax"
      ? "95% CI of settlement at t_max [m]"
      : "95% CI of OCR at t_max [-]";
  if (panel.empty) {
    return emptyState(title, "no history yet");
  }
  const scale = makeScale(panel.weeks, [...panel.lo, ...panel.hi, panel.target]);
  let body = band(panel.weeks, panel.lo, panel.hi, scale, "ci-band");
  body += polyline(panel.weeks, panel.mid, scale, "ci-median");
  body += hline(panel.target, scale, "target-line");
  return frame(title, body);
}
