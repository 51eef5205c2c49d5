// Parsing for the service's line-delimited text formats: event records,
// committed state triples, and the `# key=value` meta line.

export interface EventRecord {
  seq: number;
  t: number;
  kind: string;
  fields: Record<string, string>;
}

export interface StateTriple {
  object: string;
  group: string;
  state: string;
}

export interface StateMeta {
  version: number;
  tick: number;
  paused: boolean;
  plates: number;
}

function splitFields(line: string): Record<string, string> {
  const fields: Record<string, string> = {};
  for (const part of line.trim().split(/\s+/)) {
    const i = part.indexOf("=");
    if (i > 0) {
      fields[part.slice(0, i)] = part.slice(i + 1);
    }
  }
  return fields;
}

export function parseEventLine(line: string): EventRecord | null {
  if (!line.trim() || line.startsWith("#")) return null;
  const fields = splitFields(line);
  if (!("seq" in fields) || !("kind" in fields)) return null;
  const seq = Number(fields.seq);
  const t = Number(fields.t ?? "0");
  const kind = fields.kind;
  delete fields.seq;
  delete fields.t;
  delete fields.kind;
  return { seq, t, kind, fields };
}

export function parseEventLines(text: string): EventRecord[] {
  const out: EventRecord[] = [];
  for (const line of text.split("\n")) {
    const rec = parseEventLine(line);
    if (rec) out.push(rec);
  }
  return out;
}

export function parseStateLine(line: string): StateTriple | null {
  if (!line.trim() || line.startsWith("#")) return null;
  const f = splitFields(line);
  if (!f.object || !f.group || !f.state) return null;
  return { object: f.object, group: f.group, state: f.state };
}

export function parseStateMeta(text: string): StateMeta | null {
  const first = text.split("\n", 1)[0] ?? "";
  if (!first.startsWith("#")) return null;
  const f = splitFields(first.slice(1));
  return {
    version: Number(f.version ?? "0"),
    tick: Number(f.tick ?? "0"),
    paused: f.paused === "1",
    plates: Number(f.plates ?? "0"),
  };
}

export function parseStateBody(text: string): StateTriple[] {
  const out: StateTriple[] = [];
  for (const line of text.split("\n")) {
    const triple = parseStateLine(line);
    if (triple) out.push(triple);
  }
  return out;
}
