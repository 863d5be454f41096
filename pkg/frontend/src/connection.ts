/** WebSocket transport with reconnect; the runtime side upgrades plain
 * inspector connections to WebSocket when it sees an HTTP handshake. */

import { Incoming, Request, parseIncoming } from "./protocol.js";
import { SessionState } from "./session.js";

export interface ConnectionOptions {
  retryMillis?: number;
  heartbeatMillis?: number;
}

export class Connection {
  private ws: WebSocket | null = null;
  private closed = false;

  constructor(private url: string, private session: SessionState,
              private options: ConnectionOptions = {}) {}

  connect(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url);
    this.ws = ws;
    this.session.attach({ send: (req: Request) => ws.send(JSON.stringify(req)) });
    ws.onopen = () => this.session.handshake();
    ws.onmessage = (ev: MessageEvent) => {
      let msg: Incoming;
      try {
        msg = parseIncoming(String(ev.data));
      } catch {
        return;
      }
      this.session.receive(msg);
    };
    ws.onclose = () => {
      this.session.disconnected();
      this.ws = null;
      if (!this.closed) {
        setTimeout(() => this.connect(), this.options.retryMillis ?? 1500);
      }
    };
    ws.onerror = () => ws.close();
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}

export function defaultUrl(port: number): string {
  const host = typeof location !== "undefined" ? location.hostname : "127.0.0.1";
  return `ws://${host}:${port}`;
}
