/**
 * Pure view builders: service responses in, view models and SVG
 * fragments out. No DOM access, so the whole layer is testable against
 * recorded fixtures, and every rendered number is traceable to a
 * response field.
 */

import type { HistoryResponse, NetworkEvent, NetworkSnapshot, ScenarioResponse } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export interface SegmentComparison {
  segmentId: string;
  times: string[];
  baseline: number[];
  scenario: number[];
  delta: number[];
  changed: boolean;
  meanDelta: number;
  maxSlowdown: number;
  baselinePath: string;
  scenarioPath: string;
}

export interface CorridorCell {
  segmentId: string;
  meanDelta: number;
  tone: "slower" | "faster" | "unchanged";
  intensity: number; // 0..1 for fill opacity
}

export interface HistoryView {
  segmentId: string;
  times: string[];
  observedRuns: Point[][]; // split where observations are missing
  averageLine: Point[];
  workZoneBands: { from: number; to: number }[]; // index range, inclusive ends
}

const CHART_WIDTH = 640;
const CHART_HEIGHT = 200;
const PAD = 8;

function scale(values: number[], width: number, height: number) {
  const finite = values.filter((v) => Number.isFinite(v));
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  const span = hi - lo || 1;
  return (index: number, value: number, count: number): Point => ({
    x: PAD + (index / Math.max(count - 1, 1)) * (width - 2 * PAD),
    y: height - PAD - ((value - lo) / span) * (height - 2 * PAD),
  });
}

export function linePath(points: Point[]): string {
  if (points.length === 0) return "";
  return points
    .map((p, i) => `${i === 0 ? "M" : "L"}${p.x.toFixed(2)},${p.y.toFixed(2)}`)
    .join(" ");
}

export function comparisonViews(response: ScenarioResponse): SegmentComparison[] {
  return response.segments.map((segmentId, i) => {
    const baseline = response.baseline_mph[i];
    const scenario = response.scenario_mph[i];
    const delta = response.delta_mph[i];
    const summary = response.segment_summary[i];
    const toPoint = scale([...baseline, ...scenario], CHART_WIDTH, CHART_HEIGHT);
    const baselinePts = baseline.map((v, j) => toPoint(j, v, baseline.length));
    const scenarioPts = scenario.map((v, j) => toPoint(j, v, scenario.length));
    return {
      segmentId,
      times: response.times,
      baseline,
      scenario,
      delta,
      changed: delta.some((d) => d !== 0),
      meanDelta: summary.mean_delta_mph,
      maxSlowdown: summary.max_slowdown_mph,
      baselinePath: linePath(baselinePts),
      scenarioPath: linePath(scenarioPts),
    };
  });
}

export function corridorView(response: ScenarioResponse): CorridorCell[] {
  const magnitudes = response.segment_summary.map((s) => Math.abs(s.mean_delta_mph));
  const top = Math.max(...magnitudes, 1e-9);
  return response.segment_summary.map((summary) => {
    const d = summary.mean_delta_mph;
    return {
      segmentId: summary.segment_id,
      meanDelta: d,
      tone: d === 0 ? "unchanged" : d < 0 ? "slower" : "faster",
      intensity: d === 0 ? 0 : Math.abs(d) / top,
    };
  });
}

/** Split the observed series into runs at missing cells: gaps, not zeros. */
export function observedRuns(speeds: (number | null)[], toPoint: (i: number, v: number) => Point): Point[][] {
  const runs: Point[][] = [];
  let current: Point[] = [];
  speeds.forEach((value, index) => {
    if (value === null) {
      if (current.length > 0) runs.push(current);
      current = [];
    } else {
      current.push(toPoint(index, value));
    }
  });
  if (current.length > 0) runs.push(current);
  return runs;
}

export function historyView(history: HistoryResponse, events: NetworkEvent[]): HistoryView {
  const observed = history.speed_mph.filter((v): v is number => v !== null);
  const toScale = scale([...observed, ...history.average_mph], CHART_WIDTH, CHART_HEIGHT);
  const count = history.times.length;
  const toPoint = (i: number, v: number) => toScale(i, v, count);

  const bands: { from: number; to: number }[] = [];
  for (const event of events) {
    if (event.segment_id !== history.segment_id) continue;
    let from = -1;
    let to = -1;
    history.times.forEach((t, i) => {
      if (t >= event.start && t < event.end) {
        if (from < 0) from = i;
        to = i;
      }
    });
    if (from >= 0) bands.push({ from, to });
  }

  return {
    segmentId: history.segment_id,
    times: history.times,
    observedRuns: observedRuns(history.speed_mph, toPoint),
    averageLine: history.average_mph.map((v, i) => toPoint(i, v)),
    workZoneBands: bands,
  };
}

export function comparisonSvg(view: SegmentComparison): string {
  const classSuffix = view.changed ? "changed" : "unchanged";
  return [
    `<svg viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}" class="chart chart-${classSuffix}" data-segment="${view.segmentId}">`,
    `<path class="line baseline" d="${view.baselinePath}" />`,
    `<path class="line scenario" d="${view.scenarioPath}" />`,
    `</svg>`,
  ].join("");
}

export function historySvg(view: HistoryView): string {
  const bandWidth = (CHART_WIDTH - 2 * PAD) / Math.max(view.times.length - 1, 1);
  const bands = view.workZoneBands
    .map((band) => {
      const x = PAD + band.from * bandWidth;
      const width = (band.to - band.from + 1) * bandWidth;
      return `<rect class="workzone-band" x="${x.toFixed(2)}" y="0" width="${width.toFixed(2)}" height="${CHART_HEIGHT}" />`;
    })
    .join("");
  const runs = view.observedRuns
    .map((run) => `<path class="line observed" d="${linePath(run)}" />`)
    .join("");
  return [
    `<svg viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}" class="chart history" data-segment="${view.segmentId}">`,
    bands,
    `<path class="line average" d="${linePath(view.averageLine)}" />`,
    runs,
    `</svg>`,
  ].join("");
}

/** Schematic corridor strip ordered by the service's segment list. */
export function corridorSvg(cells: CorridorCell[], network: NetworkSnapshot): string {
  const cellWidth = CHART_WIDTH / Math.max(cells.length, 1);
  const boxes = cells
    .map((cell, i) => {
      const x = i * cellWidth;
      return (
        `<g class="corridor-cell tone-${cell.tone}" data-segment="${cell.segmentId}">` +
        `<rect x="${x.toFixed(2)}" y="0" width="${(cellWidth - 2).toFixed(2)}" height="40"` +
        ` fill-opacity="${cell.intensity.toFixed(3)}" />` +
        `<title>${cell.segmentId}: mean delta ${cell.meanDelta.toFixed(2)} MPH</title>` +
        `</g>`
      );
    })
    .join("");
  const ids = network.segments.join(",");
  return `<svg viewBox="0 0 ${CHART_WIDTH} 40" class="corridor" data-order="${ids}">${boxes}</svg>`;
}
