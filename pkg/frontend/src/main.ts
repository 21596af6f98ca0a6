/** Page wiring: connects the session client, keyboard input, renderer,
 * and trial flow into the teleoperation page.
 */

import { SessionClient } from "./client.js";
import { AxisController } from "./input.js";
import { WorkspaceRenderer } from "./render.js";
import { TrialFlow } from "./trialflow.js";
import type { ServerMessage, SessionAck, StateFrame } from "./protocol.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("workspace");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("canvas 2d context unavailable");

const statusEl = el<HTMLSpanElement>("status");
const phaseEl = el<HTMLSpanElement>("phase");
const axisEl = el<HTMLSpanElement>("axis");
const modeSel = el<HTMLSelectElement>("mode");
const taskSel = el<HTMLSelectElement>("task");
const resultsEl = el<HTMLUListElement>("results");
const summaryEl = el<HTMLDivElement>("summary");
const messagesEl = el<HTMLDivElement>("messages");

const params = new URLSearchParams(location.search);
const host = params.get("host") ?? location.hostname ?? "localhost";
const port = params.get("port") ?? "8710";
const url = `ws://${host}:${port}/ws`;

const axis = new AxisController();
const flow = new TrialFlow();
let renderer: WorkspaceRenderer | null = null;
let tickMs = 50;
let sendTimer: number | null = null;
let lastFrame: StateFrame | null = null;

function showMessage(text: string, warn = false): void {
  messagesEl.textContent = text;
  messagesEl.className = warn ? "warn" : "error";
  window.setTimeout(() => {
    if (messagesEl.textContent === text) messagesEl.textContent = "";
  }, 4000);
}

function refreshResults(): void {
  resultsEl.innerHTML = "";
  for (const rec of flow.records) {
    const li = document.createElement("li");
    li.textContent =
      `${rec.phase}: ${rec.success ? "success" : "failure"} ` +
      `(error ${rec.finalStateError.toFixed(4)}, ${rec.steps} steps)`;
    resultsEl.appendChild(li);
  }
  const sum = flow.summary();
  summaryEl.textContent = sum
    ? `Trials: ${sum.successes}/${sum.total} succeeded, ` +
      `mean error ${sum.meanError.toFixed(4)}`
    : "";
}

function onAck(ack: SessionAck): void {
  tickMs = ack.tick_ms > 0 ? ack.tick_ms : 50;
  renderer = new WorkspaceRenderer(ctx!, canvas.width, ack.links, ack.base);
  flow.setPhase(ack.phase);
  phaseEl.textContent = ack.phase;
  modeSel.value = ack.mode;
  if (taskSel.options.length === 0) {
    for (const name of ack.tasks) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      taskSel.appendChild(opt);
    }
  }
  taskSel.value = ack.task;
  restartSendLoop();
}

function onServerMessage(msg: ServerMessage): void {
  if (msg.type === "session_ack") {
    onAck(msg);
  } else if (msg.type === "state_frame") {
    lastFrame = msg;
    flow.setPhase(msg.phase);
    phaseEl.textContent = msg.phase;
    renderer?.draw(msg);
  } else if (msg.type === "episode_end") {
    flow.recordEnd(msg);
    refreshResults();
    renderer?.clearTrail();
    axis.reset();
  } else {
    showMessage(msg.message, msg.warning === true);
  }
}

const client = new SessionClient({
  url,
  onMessage: onServerMessage,
  onStatus: (s) => {
    statusEl.textContent = s;
    if (s !== "open" && sendTimer !== null) {
      window.clearInterval(sendTimer);
      sendTimer = null;
    }
  },
});

/** Sample the axis once per server tick; never send faster than that. */
function restartSendLoop(): void {
  if (sendTimer !== null) window.clearInterval(sendTimer);
  sendTimer = window.setInterval(() => {
    const value = axis.sample(performance.now());
    axisEl.textContent = value.toFixed(2);
    if (value !== 0 || axis.direction() !== 0) {
      client.send({ type: "axis_input", value });
    }
  }, tickMs);
}

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  if (ev.key === "Tab") {
    ev.preventDefault();
    if (modeSel.value === "ee") client.send({ type: "mode_toggle" });
    return;
  }
  if (axis.keyDown(ev.key)) ev.preventDefault();
});
window.addEventListener("keyup", (ev) => {
  if (axis.keyUp(ev.key)) ev.preventDefault();
});

modeSel.addEventListener("change", () => {
  flow.reset();
  refreshResults();
  axis.reset();
  client.send({
    type: "select_mode",
    mode: modeSel.value as "latent" | "ee",
  });
});
taskSel.addEventListener("change", () => {
  flow.reset();
  refreshResults();
  axis.reset();
  client.send({ type: "select_task", task: taskSel.value });
});
el<HTMLButtonElement>("reset").addEventListener("click", () => {
  axis.reset();
  renderer?.clearTrail();
  client.send({ type: "reset_practice" });
});
el<HTMLButtonElement>("begin").addEventListener("click", () => {
  axis.reset();
  renderer?.clearTrail();
  client.send({ type: "begin_trials" });
});

client.connect();
export { lastFrame };
