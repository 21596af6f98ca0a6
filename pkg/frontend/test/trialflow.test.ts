import { describe, expect, it } from "vitest";
import { TrialFlow } from "../src/trialflow.js";
import type { EpisodeEnd } from "../src/protocol.js";

function end(success: boolean, err: number): EpisodeEnd {
  return { type: "episode_end", success, final_state_error: err, steps: 30 };
}

describe("TrialFlow", () => {
  it("starts in practice and mirrors server phase tags", () => {
    const f = new TrialFlow();
    expect(f.phase).toBe("practice");
    expect(f.inTrials).toBe(false);
    f.setPhase("trial-1");
    expect(f.inTrials).toBe(true);
    f.setPhase("done");
    expect(f.done).toBe(true);
  });

  it("keeps practice results out of the trial summary", () => {
    const f = new TrialFlow();
    f.recordEnd(end(true, 0.01));
    expect(f.summary()).toBeNull();
    f.setPhase("trial-1");
    f.recordEnd(end(true, 0.02));
    f.setPhase("trial-2");
    f.recordEnd(end(false, 0.1));
    const sum = f.summary();
    expect(sum).not.toBeNull();
    expect(sum!.successes).toBe(1);
    expect(sum!.total).toBe(2);
    expect(sum!.meanError).toBeCloseTo(0.06, 12);
    expect(f.records).toHaveLength(3);
    expect(f.trialRecords()).toHaveLength(2);
  });

  it("reset clears phase and records", () => {
    const f = new TrialFlow();
    f.setPhase("trial-1");
    f.recordEnd(end(true, 0.01));
    f.reset();
    expect(f.phase).toBe("practice");
    expect(f.records).toHaveLength(0);
  });
});
