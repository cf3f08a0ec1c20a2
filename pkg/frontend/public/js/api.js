// Thin client over the session service HTTP endpoints.
import { SseParser } from "./sse.js";
export class ApiError extends Error {
    constructor(status, body) {
        super(`service returned ${status}: ${body}`);
        this.status = status;
        this.body = body;
    }
}
async function expectJson(resp) {
    if (!resp.ok)
        throw new ApiError(resp.status, await resp.text());
    return (await resp.json());
}
export async function fetchRegistry(base) {
    return expectJson(await fetch(`${base}/api/registry`));
}
export async function createSession(base, request) {
    const resp = await fetch(`${base}/api/sessions`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(request),
    });
    return expectJson(resp);
}
export async function fetchSession(base, sessionId) {
    return expectJson(await fetch(`${base}/api/sessions/${sessionId}`));
}
export async function control(base, sessionId, command) {
    const resp = await fetch(`${base}/api/sessions/${sessionId}/control`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(command),
    });
    return expectJson(resp);
}
// Streams the SSE endpoint: full replay from seq 1, then live events until
// the terminal event closes the stream.
export function subscribeEvents(base, sessionId, onEvent) {
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
            if (finished)
                break;
            for (const msg of parser.feed(decoder.decode(value, { stream: true }))) {
                if (msg.event === "step" || msg.event === "terminal") {
                    onEvent(JSON.parse(msg.data));
                }
            }
        }
    })();
    return {
        done,
        cancel: () => controller.abort(),
    };
}
