/** Session state: the event ring, config mirror, and request bookkeeping.
 *
 * The transport is injected so tests can drive the session from a recorded
 * protocol stub; socket callbacks only mutate this state and rendering
 * reads it.
 */

import {
  EventRecord, GcConfig, GcStatsRecord, Incoming, Operation, Request,
  isEventMessage, validateConfigDraft,
} from "./protocol.js";

export const EVENT_RING_CAPACITY = 10000;

export interface Transport {
  send(request: Request): void;
}

export interface AggregateSummary {
  dropped: number;
  droppedByType: Record<string, number>;
  totalDurationMicros: number;
}

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export class SessionState {
  connectionStatus: ConnectionStatus = "disconnected";
  events: EventRecord[] = [];
  aggregate: AggregateSummary = { dropped: 0, droppedByType: {}, totalDurationMicros: 0 };
  gcHistory: GcStatsRecord[] = [];
  liveConfig: GcConfig | null = null;
  configDraft: Partial<GcConfig> = {};
  draftErrors: string[] = [];
  selectedView: "gc" | "engine" | "code" = "gc";
  changeMarkers: number[] = [];   // startTime positions of config changes
  lastSeq = 0;
  gapDetected = false;
  engineStats: Record<string, unknown> | null = null;
  codeCache: Array<Record<string, unknown>> = [];
  sendSites: Array<Record<string, unknown>> = [];
  banner: string | null = null;

  private transport: Transport | null = null;
  private nextId = 0;
  private pending = new Map<number, (response: { ok: boolean; result?: unknown; error?: { code: string; message: string } }) => void>();
  readonly sentLog: Request[] = [];

  attach(transport: Transport): void {
    this.transport = transport;
    this.connectionStatus = "connecting";
  }

  /** Handshake: subscribe, then fetch history and the live config. */
  handshake(): void {
    this.connectionStatus = "connected";
    this.request("subscribe_events");
    this.request("gc_stats", {}, (reply) => {
      if (reply.ok) this.gcHistory = reply.result as GcStatsRecord[];
    });
    this.request("gc_config_get", {}, (reply) => {
      if (reply.ok) {
        this.liveConfig = reply.result as GcConfig;
        this.configDraft = { ...this.liveConfig };
      }
    });
  }

  disconnected(): void {
    this.connectionStatus = "disconnected";
  }

  request(op: Operation, params: Record<string, unknown> = {},
          onReply?: (reply: { ok: boolean; result?: unknown; error?: { code: string; message: string } }) => void): number {
    if (!this.transport) throw new Error("not attached");
    const id = ++this.nextId;
    const req: Request = { id, op, params };
    if (onReply) this.pending.set(id, onReply);
    this.sentLog.push(req);
    this.transport.send(req);
    return id;
  }

  receive(msg: Incoming): void {
    if (isEventMessage(msg)) {
      this.receiveEvent(msg.event);
      return;
    }
    if (msg.id !== null && this.pending.has(msg.id)) {
      const handler = this.pending.get(msg.id)!;
      this.pending.delete(msg.id);
      handler(msg);
    }
  }

  receiveEvent(event: EventRecord): void {
    let refetched = false;
    if (this.lastSeq && event.seq > this.lastSeq + 1) {
      // missed events (e.g. after a reconnect): refetch the full history,
      // which already covers this event's pass
      this.gapDetected = true;
      refetched = true;
      this.request("gc_stats", {}, (reply) => {
        if (reply.ok) this.gcHistory = reply.result as GcStatsRecord[];
      });
    }
    this.lastSeq = Math.max(this.lastSeq, event.seq);
    // keep the ring ordered by seq even under bursty delivery
    let at = this.events.length;
    while (at > 0 && this.events[at - 1].seq > event.seq) at -= 1;
    this.events.splice(at, 0, event);
    if (this.events.length > EVENT_RING_CAPACITY) {
      const evicted = this.events.shift()!;
      this.aggregate.dropped += 1;
      this.aggregate.droppedByType[evicted.type] =
        (this.aggregate.droppedByType[evicted.type] ?? 0) + 1;
      if (evicted.type === "gcPass") {
        this.aggregate.totalDurationMicros +=
          (evicted.payload.durationMicros as number) ?? 0;
      }
    }
    if (event.type === "gcPass" && !refetched) {
      this.gcHistory.push(event.payload as unknown as GcStatsRecord);
    }
  }

  gcEvents(): EventRecord[] {
    return this.events.filter((e) => e.type === "gcPass");
  }

  /** Validate and submit the config draft; invalid drafts send nothing. */
  submitConfig(onDone?: (accepted: boolean, message?: string) => void): boolean {
    this.draftErrors = validateConfigDraft(this.configDraft);
    if (this.draftErrors.length > 0) {
      onDone?.(false, this.draftErrors.join("; "));
      return false;
    }
    const changed: Record<string, unknown> = {};
    for (const [key, value] of Object.entries(this.configDraft)) {
      if (!this.liveConfig ||
          (this.liveConfig as unknown as Record<string, unknown>)[key] !== value) {
        changed[key] = value;
      }
    }
    this.request("gc_config_set", changed, (reply) => {
      if (reply.ok) {
        this.liveConfig = reply.result as GcConfig;
        this.configDraft = { ...this.liveConfig };
        const last = this.gcHistory[this.gcHistory.length - 1];
        this.changeMarkers.push(last ? last.startTime : 0);
        onDone?.(true);
      } else {
        this.banner = reply.error?.message ?? "configuration rejected";
        onDone?.(false, this.banner);
      }
    });
    return true;
  }

  resetDraft(): void {
    this.configDraft = this.liveConfig ? { ...this.liveConfig } : {};
    this.draftErrors = [];
  }

  /** Submit a method redefinition; rejections keep the source visible. */
  submitMethod(behavior: string, source: string,
               onDone?: (accepted: boolean, diagnostic?: string) => void): void {
    this.request("replace_method", { behavior, source }, (reply) => {
      if (reply.ok) {
        onDone?.(true);
      } else {
        onDone?.(false, reply.error?.message);
      }
    });
  }

  refreshEngineView(): void {
    this.request("engine_stats", {}, (reply) => {
      if (reply.ok) this.engineStats = reply.result as Record<string, unknown>;
    });
    this.request("code_cache_list", {}, (reply) => {
      if (reply.ok) this.codeCache = reply.result as Array<Record<string, unknown>>;
    });
    this.request("send_site_list", {}, (reply) => {
      if (reply.ok) this.sendSites = reply.result as Array<Record<string, unknown>>;
    });
  }
}
