import { readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { applyEvent, applyEvents, emptyView } from "../src/timeline.js";
import type { Registry, SessionEvent } from "../src/types.js";

function fixture(name: string): SessionEvent[] {
  const path = join(__dirname, "fixtures", name);
  return JSON.parse(readFileSync(path, "utf-8")) as SessionEvent[];
}

const registry = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "registry.json"), "utf-8"),
) as Registry;

const GOLDEN = fixture("golden_events.json");
const FAULT = fixture("fault_events.json");
const PHASES = registry.phases;

describe("golden carotid session", () => {
  it("renders 7 timeline steps and a Completed badge", () => {
    const view = applyEvents(emptyView(), GOLDEN, PHASES);
    expect(view.timeline).toHaveLength(7);
    expect(view.terminal).toBe("Completed");
    expect(view.phase).toBe("ReportPrinted");
    expect(view.timeline.every((s) => s.ok === true)).toBe(true);
    expect(view.timeline.map((s) => s.kind)).toEqual(Array(7).fill("call"));
  });

  it("walks the phase machine monotonically forward", () => {
    const view = applyEvents(emptyView(), GOLDEN, PHASES);
    const indices = view.timeline.map((s) => PHASES.indexOf(s.phaseAfter));
    for (let i = 1; i < indices.length; i++) {
      expect(indices[i]).toBeGreaterThan(indices[i - 1]);
    }
    expect(view.timeline.some((s) => s.regressed)).toBe(false);
  });
});

describe("motion-fault session", () => {
  it("shows phase regression and recovery to completion", () => {
    const view = applyEvents(emptyView(), FAULT, PHASES);
    expect(view.terminal).toBe("Completed");
    expect(view.phase).toBe("ReportPrinted");
    const regressedSteps = view.timeline.filter((s) => s.regressed);
    expect(regressedSteps.length).toBeGreaterThan(0);
    // recovery: a later scan call follows the regression
    const scanCalls = view.timeline.filter((s) => s.callSummary?.startsWith("Start_Scan"));
    expect(scanCalls.length).toBe(2);
    const lastStep = view.timeline[view.timeline.length - 1];
    expect(lastStep.phaseAfter).toBe("ReportPrinted");
  });

  it("flags failed steps distinctly", () => {
    const view = applyEvents(emptyView(), FAULT, PHASES);
    const failed = view.timeline.filter((s) => s.ok === false);
    expect(failed.length).toBeGreaterThan(0);
    expect(failed.every((s) => s.observation && s.observation.length > 0)).toBe(true);
  });
});

describe("replay and reconnection", () => {
  it("replays into an identical timeline from scratch", () => {
    const a = applyEvents(emptyView(), GOLDEN, PHASES);
    const b = applyEvents(emptyView(), GOLDEN, PHASES);
    expect(a).toEqual(b);
  });

  it("ignores duplicate events on reconnect", () => {
    // subscribe partway, then reconnect: the stream replays from seq 1
    const partial = applyEvents(emptyView(), GOLDEN.slice(0, 4), PHASES);
    const reconnected = applyEvents(partial, GOLDEN, PHASES);
    const fresh = applyEvents(emptyView(), GOLDEN, PHASES);
    expect(reconnected).toEqual(fresh);
  });

  it("is idempotent per event", () => {
    let view = emptyView();
    for (const event of FAULT) {
      view = applyEvent(view, event, PHASES);
      view = applyEvent(view, event, PHASES); // duplicate delivery
    }
    expect(view).toEqual(applyEvents(emptyView(), FAULT, PHASES));
  });
});

describe("registry payload", () => {
  it("lists the seven robot APIs and the phase order", () => {
    expect(registry.apis.map((a) => a.name)).toContain("Image_Seg");
    expect(registry.apis).toHaveLength(7);
    expect(PHASES[0]).toBe("Uninitialized");
    expect(PHASES[PHASES.length - 1]).toBe("ReportPrinted");
  });
});
