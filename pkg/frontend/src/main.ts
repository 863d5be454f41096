/** Browser entry point: wires the session to the DOM and repaints on a
 * short interval; all state lives in SessionState. */

import { buildChart, renderChartSvg } from "./chart.js";
import { Connection, defaultUrl } from "./connection.js";
import { GcConfig } from "./protocol.js";
import { SessionState } from "./session.js";
import { renderCodeCacheTable, renderEngineStats, renderSendSiteTable } from "./views.js";

const session = new SessionState();

function byId<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function repaint(): void {
  byId("status").textContent = session.connectionStatus;
  byId("status").className = "status " + session.connectionStatus;
  const chart = buildChart(session.gcHistory, session.changeMarkers);
  byId("chart").innerHTML = renderChartSvg(chart);
  byId("pass-count").textContent =
    `${session.gcHistory.length} passes, ${session.events.length} buffered events` +
    (session.aggregate.dropped ? ` (+${session.aggregate.dropped} aggregated)` : "");
  if (session.selectedView === "engine") {
    byId("engine-stats").innerHTML = renderEngineStats(session.engineStats);
    byId("send-sites").innerHTML = renderSendSiteTable(session.sendSites);
  }
  if (session.selectedView === "code") {
    byId("code-cache").innerHTML = renderCodeCacheTable(session.codeCache);
  }
  byId("banner").textContent = session.banner ?? "";
  byId("draft-errors").textContent = session.draftErrors.join("; ");
}

function readDraft(): void {
  const fields: Array<[keyof GcConfig, string]> = [
    ["edenSize", "cfg-eden"], ["survivorSize", "cfg-survivor"],
    ["tenureAge", "cfg-tenure"], ["fullGCGrowthFactor", "cfg-growth"],
    ["evacuationUsageThreshold", "cfg-evac-threshold"],
    ["evacuationBudget", "cfg-evac-budget"],
  ];
  for (const [key, id] of fields) {
    const input = byId<HTMLInputElement>(id);
    if (input && input.value !== "") {
      (session.configDraft as Record<string, number>)[key] = Number(input.value);
    }
  }
}

function fillDraftInputs(): void {
  const cfg = session.liveConfig;
  if (!cfg) return;
  byId<HTMLInputElement>("cfg-eden").value = String(cfg.edenSize);
  byId<HTMLInputElement>("cfg-survivor").value = String(cfg.survivorSize);
  byId<HTMLInputElement>("cfg-tenure").value = String(cfg.tenureAge);
  byId<HTMLInputElement>("cfg-growth").value = String(cfg.fullGCGrowthFactor);
  byId<HTMLInputElement>("cfg-evac-threshold").value = String(cfg.evacuationUsageThreshold);
  byId<HTMLInputElement>("cfg-evac-budget").value = String(cfg.evacuationBudget);
}

export function start(): void {
  const params = new URLSearchParams(location.search);
  const port = Number(params.get("port") ?? 8797);
  const connection = new Connection(defaultUrl(port), session);
  connection.connect();

  byId("submit-config").addEventListener("click", () => {
    readDraft();
    session.submitConfig((accepted, message) => {
      session.banner = accepted ? "configuration applied" : message ?? "rejected";
      if (accepted) fillDraftInputs();
    });
  });
  byId("reset-config").addEventListener("click", () => {
    session.resetDraft();
    fillDraftInputs();
  });
  byId("submit-method").addEventListener("click", () => {
    const behavior = byId<HTMLInputElement>("method-behavior").value;
    const source = byId<HTMLTextAreaElement>("method-source").value;
    session.submitMethod(behavior, source, (accepted, diagnostic) => {
      byId("method-diagnostic").textContent =
        accepted ? "accepted" : diagnostic ?? "rejected";
    });
  });
  for (const view of ["gc", "engine", "code"] as const) {
    byId(`view-${view}`).addEventListener("click", () => {
      session.selectedView = view;
      document.querySelectorAll("section[data-view]").forEach((el) => {
        (el as HTMLElement).hidden = el.getAttribute("data-view") !== view;
      });
      if (view === "engine" || view === "code") session.refreshEngineView();
    });
  }
  let lastConfigSeen: GcConfig | null = null;
  setInterval(() => {
    if (session.liveConfig !== lastConfigSeen) {
      lastConfigSeen = session.liveConfig;
      fillDraftInputs();
    }
    repaint();
  }, 250);
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
