/** WebSocket wrapper with automatic reconnect.
 *
 * On reconnect the client replays its mode and task selections so the
 * server rebuilds an equivalent practice scene; trial results already
 * shown locally are kept.
 */

import {
  parseServerMessage,
  serializeClientMessage,
  type ClientMessage,
  type ServerMessage,
} from "./protocol.js";

export interface ClientOptions {
  url: string;
  onMessage: (msg: ServerMessage) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
  reconnectMs?: number;
}

export class SessionClient {
  private ws: WebSocket | null = null;
  private closedByUser = false;
  private lastMode: ClientMessage | null = null;
  private lastTask: ClientMessage | null = null;

  constructor(private opts: ClientOptions) {}

  connect(): void {
    this.closedByUser = false;
    this.opts.onStatus("connecting");
    const ws = new WebSocket(this.opts.url);
    this.ws = ws;
    ws.onopen = () => {
      this.opts.onStatus("open");
      this.sendRaw({ type: "hello" });
      if (this.lastMode) this.sendRaw(this.lastMode);
      if (this.lastTask) this.sendRaw(this.lastTask);
    };
    ws.onmessage = (ev) => {
      this.opts.onMessage(parseServerMessage(String(ev.data)));
    };
    ws.onclose = () => {
      this.opts.onStatus("closed");
      this.ws = null;
      if (!this.closedByUser) {
        setTimeout(() => this.connect(), this.opts.reconnectMs ?? 1000);
      }
    };
  }

  private sendRaw(msg: ClientMessage): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(serializeClientMessage(msg));
    }
  }

  send(msg: ClientMessage): void {
    if (msg.type === "select_mode") this.lastMode = msg;
    if (msg.type === "select_task") this.lastTask = msg;
    this.sendRaw(msg);
  }

  close(): void {
    this.closedByUser = true;
    this.ws?.close();
  }
}
