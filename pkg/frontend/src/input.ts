/** Keyboard axis controller.
 *
 * ArrowUp ramps the axis toward +1 and ArrowDown toward -1, reaching full
 * deflection after RAMP_MS of continuous hold. Releasing both keys decays
 * the value back to 0 over DECAY_MS. The controller is sampled once per
 * server tick so the client never sends inputs faster than the tick cadence.
 */

import { clampAxis } from "./protocol.js";

export const RAMP_MS = 300;
export const DECAY_MS = 150;

export class AxisController {
  private value = 0;
  private upHeld = false;
  private downHeld = false;
  private lastSample: number | null = null;

  /** Register a key press; returns true if the key was consumed. */
  keyDown(key: string): boolean {
    if (key === "ArrowUp") {
      this.upHeld = true;
      return true;
    }
    if (key === "ArrowDown") {
      this.downHeld = true;
      return true;
    }
    return false;
  }

  /** Register a key release; returns true if the key was consumed. */
  keyUp(key: string): boolean {
    if (key === "ArrowUp") {
      this.upHeld = false;
      return true;
    }
    if (key === "ArrowDown") {
      this.downHeld = false;
      return true;
    }
    return false;
  }

  /** Direction currently commanded by the held keys: -1, 0, or +1. */
  direction(): number {
    return (this.upHeld ? 1 : 0) - (this.downHeld ? 1 : 0);
  }

  /**
   * Advance the internal state to time `nowMs` and return the axis value.
   *
   * Call once per tick; elapsed time since the previous sample drives the
   * ramp and decay so the feel is independent of tick rate.
   */
  sample(nowMs: number): number {
    const dt = this.lastSample === null ? 0 : nowMs - this.lastSample;
    this.lastSample = nowMs;
    const dir = this.direction();
    if (dir !== 0) {
      this.value = clampAxis(this.value + (dir * dt) / RAMP_MS);
    } else if (this.value !== 0) {
      const fall = dt / DECAY_MS;
      if (Math.abs(this.value) <= fall) {
        this.value = 0;
      } else {
        this.value -= Math.sign(this.value) * fall;
      }
    }
    return this.value;
  }

  /** Current value without advancing time. */
  current(): number {
    return this.value;
  }

  reset(): void {
    this.value = 0;
    this.upHeld = false;
    this.downHeld = false;
    this.lastSample = null;
  }
}
