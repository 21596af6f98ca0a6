/** Session flow bookkeeping: practice phase, scored trials, summary.
 *
 * The server owns the actual phase transitions; this mirrors them from the
 * phase tags carried on session_ack and state_frame messages and collects
 * episode_end results so the page can show a running scoreboard.
 */

import type { EpisodeEnd } from "./protocol.js";

export interface TrialRecord {
  phase: string;
  success: boolean;
  finalStateError: number;
  steps: number;
}

export class TrialFlow {
  phase = "practice";
  records: TrialRecord[] = [];

  /** Update the mirrored phase from a server phase tag. */
  setPhase(tag: string): void {
    this.phase = tag;
  }

  get inTrials(): boolean {
    return this.phase.startsWith("trial");
  }

  get done(): boolean {
    return this.phase === "done";
  }

  /** Record an episode result under the phase it finished in. */
  recordEnd(end: EpisodeEnd): TrialRecord {
    const rec: TrialRecord = {
      phase: this.phase,
      success: end.success,
      finalStateError: end.final_state_error,
      steps: end.steps,
    };
    this.records.push(rec);
    return rec;
  }

  /** Scored trial results only (practice attempts excluded). */
  trialRecords(): TrialRecord[] {
    return this.records.filter((r) => r.phase.startsWith("trial"));
  }

  /** Summary line for the scored trials, or null before any finish. */
  summary(): { successes: number; total: number; meanError: number } | null {
    const trials = this.trialRecords();
    if (trials.length === 0) return null;
    const successes = trials.filter((r) => r.success).length;
    const meanError =
      trials.reduce((s, r) => s + r.finalStateError, 0) / trials.length;
    return { successes, total: trials.length, meanError };
  }

  /** Forget results, e.g. when switching task or mode. */
  reset(): void {
    this.phase = "practice";
    this.records = [];
  }
}
