// Session view model: a pure reduction of service events.
//
// The console computes no domain logic. Everything rendered here comes from
// the event stream and the registry payload; the phase ordering used to flag
// regressions is the `phases` array the service publishes.
export function emptyView(initialPhase = "Uninitialized") {
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
function stepKind(step) {
    if (step.backend_error !== null)
        return "backend_error";
    if (step.outcome === null)
        return "backend_error";
    return step.outcome.variant;
}
function callSummary(step) {
    if (step.outcome?.variant !== "call")
        return null;
    return `${step.outcome.api_name}(${JSON.stringify(step.outcome.parameters)})`;
}
function phaseIndex(phases, phase) {
    const i = phases.indexOf(phase);
    return i < 0 ? 0 : i;
}
export function applyEvent(view, event, phases) {
    if (event.seq <= view.lastSeq)
        return view; // replayed duplicate
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
    const step = {
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
export function applyEvents(view, events, phases) {
    return events.reduce((v, e) => applyEvent(v, e, phases), view);
}
export function robotSnapshotLabel(state) {
    const seg = state.segmentation
        ? ` seg(af=${state.segmentation.area_fraction.toFixed(3)}, hit=${state.segmentation.hit})`
        : "";
    return `${state.phase}${state.scan_target ? " [" + state.scan_target + "]" : ""}${seg}`;
}
