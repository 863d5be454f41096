/** GC timeline: pass duration over start time, one series per pass kind,
 * with config-change markers. Geometry is computed as plain data so the
 * renderer (and the tests) stay DOM-free.
 */

import { GcStatsRecord } from "./protocol.js";

export interface ChartPoint {
  x: number;          // pixel x
  y: number;          // pixel y
  kind: "young" | "full";
  record: GcStatsRecord;
}

export interface ChartModel {
  width: number;
  height: number;
  points: ChartPoint[];
  markers: number[];           // pixel x of config changes
  xLabel: string;
  yLabel: string;
  maxDuration: number;
  maxTime: number;
}

const PAD = 28;

export function buildChart(records: GcStatsRecord[], markers: number[] = [],
                           width = 640, height = 220): ChartModel {
  const maxTime = Math.max(1, ...records.map((r) => r.startTime));
  const maxDuration = Math.max(1, ...records.map((r) => r.durationMicros));
  const spanX = width - 2 * PAD;
  const spanY = height - 2 * PAD;
  const points = records.map((record) => ({
    x: PAD + (record.startTime / maxTime) * spanX,
    y: height - PAD - (record.durationMicros / maxDuration) * spanY,
    kind: record.kind,
    record,
  }));
  const markerXs = markers.map((t) => PAD + (Math.min(t, maxTime) / maxTime) * spanX);
  return {
    width, height, points, markers: markerXs,
    xLabel: "pass start (us since boot)", yLabel: "duration (us)",
    maxDuration, maxTime,
  };
}

export function renderChartSvg(model: ChartModel): string {
  const colors = { young: "#3b82f6", full: "#ef4444" };
  const parts: string[] = [];
  parts.push(`<svg viewBox="0 0 ${model.width} ${model.height}" class="gc-chart" role="img">`);
  parts.push(`<line x1="${PAD}" y1="${model.height - PAD}" x2="${model.width - PAD}" ` +
    `y2="${model.height - PAD}" stroke="#888"/>`);
  parts.push(`<line x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${model.height - PAD}" stroke="#888"/>`);
  for (const mx of model.markers) {
    parts.push(`<line x1="${mx.toFixed(1)}" y1="${PAD}" x2="${mx.toFixed(1)}" ` +
      `y2="${model.height - PAD}" stroke="#f59e0b" stroke-dasharray="4 3" class="change-marker"/>`);
  }
  for (const [i, p] of model.points.entries()) {
    const title = hoverText(p.record);
    parts.push(`<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3" ` +
      `fill="${colors[p.kind]}" data-kind="${p.kind}" data-index="${i}">` +
      `<title>${title}</title></circle>`);
  }
  parts.push(`<text x="${model.width / 2}" y="${model.height - 6}" font-size="10" ` +
    `text-anchor="middle" fill="#555">${model.xLabel}</text>`);
  parts.push("</svg>");
  return parts.join("");
}

export function hoverText(record: GcStatsRecord): string {
  const rows = [
    `${record.kind} pass at ${record.startTime}us`,
    `duration ${record.durationMicros}us`,
    `bytes ${record.bytesBefore} -> ${record.bytesAfter}`,
    `survivors ${record.survivorsBytes}`,
    `tenured ${record.tenuredBytes} (${record.tenuredCount})`,
    `remembered ${record.rememberedSetSize}`,
    `eden ${record.edenSize}`,
  ];
  if (record.kind === "full" && record.areasEvacuated != null) {
    rows.push(`areas evacuated ${record.areasEvacuated}`);
  }
  return rows.join("\n");
}

/** Heap sizes over time for the secondary strip chart. */
export function buildHeapSeries(records: GcStatsRecord[]): Array<{ t: number; before: number; after: number }> {
  return records.map((r) => ({ t: r.startTime, before: r.bytesBefore, after: r.bytesAfter }));
}
