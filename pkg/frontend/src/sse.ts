// Incremental server-sent-events parser.
//
// Feed raw text chunks in any split; complete events come out whenever an
// empty line closes a block. Only the fields the service emits (event, id,
// data) are handled; multi-line data is joined with newlines per the spec.

export interface SseMessage {
  event: string;
  id: string | null;
  data: string;
}

export class SseParser {
  private buffer = "";
  private eventType = "";
  private id: string | null = null;
  private dataLines: string[] = [];

  feed(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const out: SseMessage[] = [];
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) break;
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      const msg = this.line(line);
      if (msg) out.push(msg);
    }
    return out;
  }

  private line(line: string): SseMessage | null {
    if (line === "") {
      if (this.dataLines.length === 0 && this.eventType === "") return null;
      const msg: SseMessage = {
        event: this.eventType || "message",
        id: this.id,
        data: this.dataLines.join("\n"),
      };
      this.eventType = "";
      this.dataLines = [];
      return msg;
    }
    if (line.startsWith(":")) return null; // comment / keep-alive
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "event") this.eventType = value;
    else if (field === "data") this.dataLines.push(value);
    else if (field === "id") this.id = value;
    return null;
  }
}

export function parseSseText(text: string): SseMessage[] {
  const parser = new SseParser();
  const messages = parser.feed(text);
  return messages.concat(parser.feed("\n\n"));
}
