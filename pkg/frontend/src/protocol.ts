/** Wire protocol types and client-side validation.
 *
 * The shapes mirror schema/inspector-protocol.schema.json; both sides'
 * test suites check their samples against that file.
 */

export const OPERATIONS = [
  "gc_stats", "gc_config_get", "gc_config_set", "engine_stats",
  "code_cache_list", "send_site_list", "eval", "replace_method",
  "subscribe_events", "clear_code_cache", "coverage_run",
] as const;

export type Operation = (typeof OPERATIONS)[number];

export interface Request {
  id: number;
  op: Operation;
  params?: Record<string, unknown>;
}

export interface ErrorInfo {
  code: string;
  message: string;
}

export interface Response {
  id: number | null;
  ok: boolean;
  result?: unknown;
  error?: ErrorInfo;
}

export type EventType = "gcPass" | "compilation" | "invalidation" | "sendSiteRebind";

export interface EventRecord {
  type: EventType;
  seq: number;
  payload: Record<string, unknown>;
}

export interface EventMessage {
  type: "event";
  event: EventRecord;
}

export type Incoming = Response | EventMessage;

export interface GcStatsRecord {
  kind: "young" | "full";
  startTime: number;
  durationMicros: number;
  bytesBefore: number;
  bytesAfter: number;
  survivorsBytes: number;
  tenuredBytes: number;
  tenuredCount: number;
  rememberedSetSize: number;
  edenSize: number;
  areasEvacuated?: number | null;
}

export interface GcConfig {
  edenSize: number;
  survivorSize: number;
  oldAreaSize: number;
  largeObjectThreshold: number;
  tenureAge: number;
  fullGCGrowthFactor: number;
  initialFullThreshold: number;
  evacuationUsageThreshold: number;
  evacuationBudget: number;
}

export function isEventMessage(msg: Incoming): msg is EventMessage {
  return (msg as EventMessage).type === "event";
}

export function parseIncoming(raw: string): Incoming {
  const msg = JSON.parse(raw) as Incoming;
  if (isEventMessage(msg)) {
    const e = msg.event;
    if (typeof e?.seq !== "number" || typeof e?.type !== "string") {
      throw new Error("malformed event message");
    }
    return msg;
  }
  if (typeof (msg as Response).ok !== "boolean") {
    throw new Error("malformed response message");
  }
  return msg;
}

/** Client-side GCConfig validation; invalid drafts never become requests. */
export function validateConfigDraft(draft: Partial<GcConfig>): string[] {
  const problems: string[] = [];
  const sized: Array<keyof GcConfig> = ["edenSize", "survivorSize", "oldAreaSize"];
  for (const field of sized) {
    const v = draft[field];
    if (v === undefined) continue;
    if (!Number.isInteger(v) || (v as number) <= 0) {
      problems.push(`${field} must be a positive integer`);
    } else if ((v as number) % 16 !== 0) {
      problems.push(`${field} must be a multiple of 16`);
    }
  }
  if (draft.tenureAge !== undefined &&
      (!Number.isInteger(draft.tenureAge) || draft.tenureAge < 1 || draft.tenureAge > 3)) {
    problems.push("tenureAge must be an integer between 1 and 3");
  }
  if (draft.fullGCGrowthFactor !== undefined && !(draft.fullGCGrowthFactor > 0)) {
    problems.push("fullGCGrowthFactor must be positive");
  }
  if (draft.evacuationUsageThreshold !== undefined &&
      !(draft.evacuationUsageThreshold >= 0 && draft.evacuationUsageThreshold <= 1)) {
    problems.push("evacuationUsageThreshold must lie in [0, 1]");
  }
  if (draft.evacuationBudget !== undefined &&
      (!Number.isInteger(draft.evacuationBudget) || draft.evacuationBudget < 0)) {
    problems.push("evacuationBudget must be a non-negative integer");
  }
  return problems;
}
