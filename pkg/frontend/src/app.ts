// Operator console: submit a command, watch the cycle stream in, steer.

import { control, createSession, fetchRegistry, fetchSession, subscribeEvents } from "./api.js";
import { applyEvent, ConsoleSessionView, emptyView } from "./timeline.js";
import type { Registry, SessionEvent } from "./types.js";

const BASE = "";

interface AppState {
  registry: Registry | null;
  view: ConsoleSessionView;
  mode: "auto" | "manual";
  subscriptionCancel: (() => void) | null;
}

const state: AppState = {
  registry: null,
  view: emptyView(),
  mode: "manual",
  subscriptionCancel: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(message: string | null): void {
  const box = el<HTMLDivElement>("banner");
  box.textContent = message ?? "";
  box.classList.toggle("hidden", message === null);
}

function renderPhases(): void {
  const container = el<HTMLDivElement>("phases");
  const phases = state.registry?.phases ?? [];
  container.innerHTML = "";
  for (const phase of phases) {
    const node = document.createElement("div");
    node.className = "phase";
    if (phase === state.view.phase) {
      node.classList.add("current");
      if (state.view.regressed) node.classList.add("regressed");
    }
    node.textContent = phase;
    container.appendChild(node);
  }
}

function renderRetrieval(): void {
  const box = el<HTMLDivElement>("retrieval");
  const info = state.view.retrieval;
  if (!info) {
    box.textContent = "no session";
    return;
  }
  const apis = info.api_names
    .map((name, i) => `${name} (${(info.api_scores[i] ?? 0).toFixed(3)})`)
    .join(", ");
  const procs = info.procedure_ids
    .map((id, i) => `${id} (${(info.procedure_scores[i] ?? 0).toFixed(3)})`)
    .join(", ");
  box.innerHTML = "";
  const apiLine = document.createElement("div");
  apiLine.textContent = `APIs: ${apis || "(none)"}`;
  const procLine = document.createElement("div");
  procLine.textContent = `Handbook: ${procs || "(none)"}`;
  box.append(apiLine, procLine);
}

function renderTimeline(): void {
  const list = el<HTMLOListElement>("timeline");
  list.innerHTML = "";
  for (const step of state.view.timeline) {
    const item = document.createElement("li");
    item.className = `step ${step.kind}`;
    if (step.ok === false) item.classList.add("failed");
    if (step.regressed) item.classList.add("regressed");
    const thought = document.createElement("div");
    thought.className = "thought";
    thought.textContent = step.thought || "(no thought)";
    item.appendChild(thought);
    if (step.callSummary) {
      const call = document.createElement("div");
      call.className = "call";
      call.textContent = step.callSummary;
      item.appendChild(call);
    }
    if (step.observation) {
      const obs = document.createElement("div");
      obs.className = "observation";
      obs.textContent = `${step.ok ? "ok" : "error"}: ${step.observation}`;
      item.appendChild(obs);
    }
    const phase = document.createElement("div");
    phase.className = "phase-after";
    phase.textContent = `phase: ${step.phaseAfter}${step.regressed ? " (regressed)" : ""}`;
    item.appendChild(phase);
    list.appendChild(item);
  }
  const badge = el<HTMLSpanElement>("terminal-badge");
  badge.textContent = state.view.terminal ?? "running";
  badge.className = `badge ${state.view.terminal ?? "running"}`;
}

function renderControls(): void {
  const running = state.view.sessionId !== null && state.view.terminal === null;
  el<HTMLButtonElement>("step-btn").disabled = !(running && state.mode === "manual");
  el<HTMLButtonElement>("abort-btn").disabled = !running;
  el<HTMLButtonElement>("fault-btn").disabled = !running;
  el<HTMLButtonElement>("submit-btn").disabled =
    el<HTMLInputElement>("instruction").value.trim() === "";
}

function renderAll(): void {
  renderPhases();
  renderRetrieval();
  renderTimeline();
  renderControls();
}

function onEvent(event: SessionEvent): void {
  state.view = applyEvent(state.view, event, state.registry?.phases ?? []);
  renderAll();
}

async function submit(): Promise<void> {
  const instruction = el<HTMLInputElement>("instruction").value.trim();
  if (!instruction) return;
  banner(null);
  state.subscriptionCancel?.();
  state.mode = el<HTMLSelectElement>("mode").value as "auto" | "manual";
  try {
    const handle = await createSession(BASE, {
      instruction,
      backend: "rule",
      ablation: el<HTMLSelectElement>("ablation").value,
      seed: Number(el<HTMLInputElement>("seed").value || "0"),
      mode: state.mode,
    });
    state.view = { ...emptyView(), sessionId: handle.session_id };
    const detail = await fetchSession(BASE, handle.session_id);
    state.view = { ...state.view, retrieval: detail.transcript.retrieval };
    const sub = subscribeEvents(BASE, handle.session_id, onEvent);
    state.subscriptionCancel = sub.cancel;
    sub.done.catch((err) => banner(String(err)));
  } catch (err) {
    banner(String(err));
  }
  renderAll();
}

async function sendControl(cmd: Parameters<typeof control>[2]): Promise<void> {
  const id = state.view.sessionId;
  if (!id) return;
  try {
    await control(BASE, id, cmd);
  } catch (err) {
    banner(String(err));
  }
}

function wire(): void {
  el<HTMLFormElement>("command-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    void submit();
  });
  el<HTMLInputElement>("instruction").addEventListener("input", renderControls);
  el<HTMLButtonElement>("step-btn").addEventListener("click", () => void sendControl({ command: "step" }));
  el<HTMLButtonElement>("abort-btn").addEventListener("click", () => void sendControl({ command: "abort" }));
  el<HTMLButtonElement>("fault-btn").addEventListener("click", () =>
    void sendControl({
      command: "inject_fault",
      fault: { kind: "patient_motion", after_invocations: Math.max(1, state.view.timeline.length) },
    }),
  );
}

async function init(): Promise<void> {
  wire();
  try {
    state.registry = await fetchRegistry(BASE);
  } catch (err) {
    banner(`cannot reach the session service: ${String(err)}`);
  }
  renderAll();
}

void init();
