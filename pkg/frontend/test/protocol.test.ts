import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { buildChart, hoverText, renderChartSvg } from "../src/chart.js";
import {
  OPERATIONS, parseIncoming, validateConfigDraft,
} from "../src/protocol.js";
import { renderCodeCacheTable, renderSendSiteTable } from "../src/views.js";
import { SAMPLE_CONFIG, gcRecord } from "./stub.js";

const here = dirname(fileURLToPath(import.meta.url));
const schema = JSON.parse(
  readFileSync(join(here, "..", "schema", "inspector-protocol.schema.json"), "utf-8"));

describe("shared schema", () => {
  it("the client only issues operations the schema enumerates", () => {
    expect([...OPERATIONS].sort()).toEqual(
      [...schema.definitions.operation.enum].sort());
  });

  it("sample records carry every field the schema requires", () => {
    const record = gcRecord() as unknown as Record<string, unknown>;
    for (const field of schema.definitions.gcStatsRecord.required) {
      expect(record[field], field).toBeDefined();
    }
    const config = SAMPLE_CONFIG as unknown as Record<string, unknown>;
    for (const field of schema.definitions.gcConfig.required) {
      expect(config[field], field).toBeDefined();
    }
  });
});

describe("message parsing", () => {
  it("accepts responses and events", () => {
    const response = parseIncoming('{"id": 1, "ok": true, "result": 7}');
    expect((response as { ok: boolean }).ok).toBe(true);
    const event = parseIncoming(
      '{"type": "event", "event": {"type": "gcPass", "seq": 3, "payload": {}}}');
    expect((event as { type: string }).type).toBe("event");
  });

  it("rejects malformed payloads", () => {
    expect(() => parseIncoming("{}")).toThrow();
    expect(() => parseIncoming('{"type": "event", "event": {}}')).toThrow();
    expect(() => parseIncoming("not json")).toThrow();
  });
});

describe("draft validation", () => {
  it("flags each illegal field", () => {
    expect(validateConfigDraft({ edenSize: 65536 })).toEqual([]);
    expect(validateConfigDraft({ edenSize: 0 })).toHaveLength(1);
    expect(validateConfigDraft({ edenSize: 100 })).toHaveLength(1);
    expect(validateConfigDraft({ tenureAge: 9 })).toHaveLength(1);
    expect(validateConfigDraft({ evacuationUsageThreshold: 1.5 })).toHaveLength(1);
    expect(validateConfigDraft({ fullGCGrowthFactor: -1 })).toHaveLength(1);
    expect(validateConfigDraft({ evacuationBudget: -2 })).toHaveLength(1);
  });
});

describe("chart rendering", () => {
  it("renders empty axes for zero events", () => {
    const svg = renderChartSvg(buildChart([]));
    expect(svg).toContain("<svg");
    expect(svg).not.toContain("<circle");
  });

  it("splits series by kind and exposes the full record on hover", () => {
    const records = [
      gcRecord({ startTime: 100 }), gcRecord({ startTime: 200 }),
      gcRecord({ startTime: 300 }),
      gcRecord({ startTime: 400, kind: "full", areasEvacuated: 2 }),
    ];
    const svg = renderChartSvg(buildChart(records));
    expect((svg.match(/data-kind="young"/g) ?? [])).toHaveLength(3);
    expect((svg.match(/data-kind="full"/g) ?? [])).toHaveLength(1);
    expect(svg).toContain("areas evacuated 2");
    expect(hoverText(records[3])).toContain("remembered");
  });

  it("draws change markers at their timeline position", () => {
    const svg = renderChartSvg(buildChart([gcRecord({ startTime: 1000 })], [500]));
    expect(svg).toContain("change-marker");
  });
});

describe("tables", () => {
  it("escape untrusted names", () => {
    const html = renderCodeCacheTable([{ owner: "<b>", selector: "a&b", pinned: true }]);
    expect(html).toContain("&lt;b&gt;");
    expect(html).toContain("a&amp;b");
    expect(renderSendSiteTable([{ selector: "x", rebinds: 3, megamorphic: true }]))
      .toContain("megamorphic");
  });
});
