/** Wire protocol: JSON messages with a "type" discriminator. */

export interface SceneObject {
  name: string;
  x: number;
  y: number;
  radius: number;
}

export interface SessionAck {
  type: "session_ack";
  session: string;
  links: number[];
  base: number[];
  tick_ms: number;
  mode: string;
  strategy: string;
  task: string;
  tasks: string[];
  phase: string;
  limit_steps: number;
  ee_mode_axes: string[];
}

export interface StateFrame {
  type: "state_frame";
  joints: number[];
  ee_xy: [number, number];
  objects: SceneObject[];
  step: number;
  phase: string;
}

export interface EpisodeEnd {
  type: "episode_end";
  success: boolean;
  final_state_error: number;
  steps: number;
}

export interface ErrorMsg {
  type: "error";
  message: string;
  warning?: boolean;
}

export type ServerMessage = SessionAck | StateFrame | EpisodeEnd | ErrorMsg;

export type ClientMessage =
  | { type: "hello" }
  | { type: "select_mode"; mode: "latent" | "ee"; strategy?: string }
  | { type: "select_task"; task: string }
  | { type: "axis_input"; value: number }
  | { type: "mode_toggle" }
  | { type: "reset_practice" }
  | { type: "begin_trials" }
  | { type: "quit" };

const SERVER_TYPES = new Set([
  "session_ack",
  "state_frame",
  "episode_end",
  "error",
]);

export class ProtocolError extends Error {}

/** Parse and minimally validate one server message. */
export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new ProtocolError(`not JSON: ${raw.slice(0, 80)}`);
  }
  if (typeof data !== "object" || data === null) {
    throw new ProtocolError("message is not an object");
  }
  const type = (data as { type?: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) {
    throw new ProtocolError(`unknown server message type: ${String(type)}`);
  }
  if (type === "state_frame") {
    const f = data as StateFrame;
    if (!Array.isArray(f.joints) || !Array.isArray(f.objects)) {
      throw new ProtocolError("malformed state_frame");
    }
  }
  return data as ServerMessage;
}

export function serializeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

/** Clamp an axis value into the protocol's [-1, 1] range. */
export function clampAxis(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.max(-1, Math.min(1, value));
}
