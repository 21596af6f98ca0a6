/** Canvas renderer for the unit-square workspace.
 *
 * Everything drawn here comes from server state frames plus the forward
 * kinematics chain described in session_ack; the renderer holds no
 * simulation state of its own beyond a short end-effector trail.
 */

import { jointPositions, type Point } from "./fk.js";
import type { StateFrame } from "./protocol.js";

const OBJECT_COLORS: Record<string, string> = {
  spam: "#4f7bd9",
  cup: "#d94f4f",
  animal: "#4fb06a",
  cube: "#c9a13b",
  cereal: "#9a5fd0",
};

const TRAIL_LEN = 60;

export class WorkspaceRenderer {
  private trail: Point[] = [];

  constructor(
    private ctx: CanvasRenderingContext2D,
    private size: number,
    private links: number[],
    private base: number[],
  ) {}

  /** Map workspace coordinates (y up) to canvas pixels (y down). */
  private px([x, y]: Point): Point {
    return [x * this.size, (1 - y) * this.size];
  }

  clearTrail(): void {
    this.trail = [];
  }

  draw(frame: StateFrame): void {
    const ctx = this.ctx;
    const s = this.size;
    ctx.clearRect(0, 0, s, s);

    ctx.fillStyle = "#10141c";
    ctx.fillRect(0, 0, s, s);
    ctx.strokeStyle = "#2a3240";
    ctx.lineWidth = 1;
    for (let i = 1; i < 10; i++) {
      const t = (i / 10) * s;
      ctx.beginPath();
      ctx.moveTo(t, 0);
      ctx.lineTo(t, s);
      ctx.moveTo(0, t);
      ctx.lineTo(s, t);
      ctx.stroke();
    }

    for (const obj of frame.objects) {
      const [ox, oy] = this.px([obj.x, obj.y]);
      ctx.beginPath();
      ctx.arc(ox, oy, obj.radius * s, 0, 2 * Math.PI);
      ctx.fillStyle = OBJECT_COLORS[obj.name] ?? "#888888";
      ctx.fill();
      ctx.fillStyle = "#dddddd";
      ctx.font = `${Math.round(s / 40)}px sans-serif`;
      ctx.textAlign = "center";
      ctx.fillText(obj.name, ox, oy - obj.radius * s - 4);
    }

    this.trail.push([frame.ee_xy[0], frame.ee_xy[1]]);
    if (this.trail.length > TRAIL_LEN) this.trail.shift();
    if (this.trail.length > 1) {
      ctx.strokeStyle = "rgba(120, 200, 255, 0.5)";
      ctx.lineWidth = 2;
      ctx.beginPath();
      const [tx, ty] = this.px(this.trail[0]);
      ctx.moveTo(tx, ty);
      for (const p of this.trail.slice(1)) {
        const [qx, qy] = this.px(p);
        ctx.lineTo(qx, qy);
      }
      ctx.stroke();
    }

    const pts = jointPositions(frame.joints, this.links, this.base).map((p) =>
      this.px(p),
    );
    ctx.strokeStyle = "#e8e8e8";
    ctx.lineWidth = 5;
    ctx.lineCap = "round";
    ctx.beginPath();
    ctx.moveTo(pts[0][0], pts[0][1]);
    for (const p of pts.slice(1)) ctx.lineTo(p[0], p[1]);
    ctx.stroke();
    for (let i = 0; i < pts.length; i++) {
      ctx.beginPath();
      ctx.arc(pts[i][0], pts[i][1], i === pts.length - 1 ? 6 : 4, 0, 2 * Math.PI);
      ctx.fillStyle = i === pts.length - 1 ? "#78c8ff" : "#aaaaaa";
      ctx.fill();
    }
  }
}
