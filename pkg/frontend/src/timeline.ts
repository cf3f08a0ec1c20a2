// Session view model: a pure reduction of service events.
//
// The console computes no domain logic. Everything rendered here comes from
// the event stream and the registry payload; the phase ordering used to flag
// regressions is the `phases` array the service publishes.

import type { RetrievalInfo, RobotSnapshot, SessionEvent, StepEvent } from "./types.js";

export interface TimelineStep {
  index: number;
  seq: number;
  kind: "call" | "direct" | "refusal" | "malformed" | "backend_error";
  thought: string;
  callSummary: string | null;
  ok: boolean | null;
  observation: string | null;
  phaseAfter: string;
  regressed: boolean;
}

export interface ConsoleSessionView {
  sessionId: string | null;
  timeline: TimelineStep[];
  phase: string;
  regressed: boolean;
  terminal: string | null;
  lastSeq: number;
  retrieval: RetrievalInfo | null;
  error: string | null;
}

export function emptyView(initialPhase = "Uninitialized"): ConsoleSessionView {
  return {
    sessionId: null,
    timeline: [],
    phase: initialPhase,
    regressed: false,
    terminal: null,
    lastSeq: 0,
    retrieval: null,
    error: null,
  };
}

function stepKind(step: StepEvent["step"]): TimelineStep["kind"] {
  if (step.backend_error !== null) return "backend_error";
  if (step.outcome === null) return "backend_error";
  return step.outcome.variant;
}

function callSummary(step: StepEvent["step"]): string | null {
  if (step.outcome?.variant !== "call") return null;
  return `${step.outcome.api_name}(${JSON.stringify(step.outcome.parameters)})`;
}

function phaseIndex(phases: string[], phase: string): number {
  const i = phases.indexOf(phase);
  return i < 0 ? 0 : i;
}

export function applyEvent(
  view: ConsoleSessionView,
  event: SessionEvent,
  phases: string[],
): ConsoleSessionView {
  if (event.seq <= view.lastSeq) return view; // replayed duplicate
  if (event.type === "terminal") {
    return {
      ...view,
      lastSeq: event.seq,
      terminal: event.terminal,
      phase: event.robot_state.phase,
      regressed: false,
    };
  }
  const prevPhase = view.phase;
  const nextPhase = event.robot_state.phase;
  const regressed = phaseIndex(phases, nextPhase) < phaseIndex(phases, prevPhase);
  const step: TimelineStep = {
    index: event.step.index,
    seq: event.seq,
    kind: stepKind(event.step),
    thought: event.step.backend_error ?? event.step.thought,
    callSummary: callSummary(event.step),
    ok: event.step.action_result ? event.step.action_result.ok : null,
    observation: event.step.action_result ? event.step.action_result.message : null,
    phaseAfter: nextPhase,
    regressed,
  };
  return {
    ...view,
    lastSeq: event.seq,
    timeline: [...view.timeline, step],
    phase: nextPhase,
    regressed,
  };
}

export function applyEvents(
  view: ConsoleSessionView,
  events: SessionEvent[],
  phases: string[],
): ConsoleSessionView {
  return events.reduce((v, e) => applyEvent(v, e, phases), view);
}

export function robotSnapshotLabel(state: RobotSnapshot): string {
  const seg = state.segmentation
    ? ` seg(af=${state.segmentation.area_fraction.toFixed(3)}, hit=${state.segmentation.hit})`
    : "";
  return `${state.phase}${state.scan_target ? " [" + state.scan_target + "]" : ""}${seg}`;
}
