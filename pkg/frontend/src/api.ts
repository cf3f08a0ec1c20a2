// Thin client over the session service HTTP endpoints.

import { SseParser } from "./sse.js";
import type {
  CreateSessionRequest,
  Registry,
  SessionDetail,
  SessionEvent,
  SessionHandle,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: string,
  ) {
    super(`service returned ${status}: ${body}`);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) throw new ApiError(resp.status, await resp.text());
  return (await resp.json()) as T;
}

export async function fetchRegistry(base: string): Promise<Registry> {
  return expectJson<Registry>(await fetch(`${base}/api/registry`));
}

export async function createSession(
  base: string,
  request: CreateSessionRequest,
): Promise<SessionHandle> {
  const resp = await fetch(`${base}/api/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(request),
  });
  return expectJson<SessionHandle>(resp);
}

export async function fetchSession(base: string, sessionId: string): Promise<SessionDetail> {
  return expectJson<SessionDetail>(await fetch(`${base}/api/sessions/${sessionId}`));
}

export type ControlCommand =
  | { command: "step" }
  | { command: "abort" }
  | { command: "inject_fault"; fault: { kind: string; after_invocations?: number; on_api?: string } };

export async function control(
  base: string,
  sessionId: string,
  command: ControlCommand,
): Promise<Record<string, unknown>> {
  const resp = await fetch(`${base}/api/sessions/${sessionId}/control`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(command),
  });
  return expectJson<Record<string, unknown>>(resp);
}

export interface Subscription {
  done: Promise<void>;
  cancel: () => void;
}

// Streams the SSE endpoint: full replay from seq 1, then live events until
// the terminal event closes the stream.
export function subscribeEvents(
  base: string,
  sessionId: string,
  onEvent: (event: SessionEvent) => void,
): Subscription {
  const controller = new AbortController();
  const done = (async () => {
    const resp = await fetch(`${base}/api/sessions/${sessionId}/events`, {
      signal: controller.signal,
      headers: { accept: "text/event-stream" },
    });
    if (!resp.ok || resp.body === null) {
      throw new ApiError(resp.status, await resp.text());
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done: finished, value } = await reader.read();
      if (finished) break;
      for (const msg of parser.feed(decoder.decode(value, { stream: true }))) {
        if (msg.event === "step" || msg.event === "terminal") {
          onEvent(JSON.parse(msg.data) as SessionEvent);
        }
      }
    }
  })();
  return {
    done,
    cancel: () => controller.abort(),
  };
}
