import { describe, expect, it } from "vitest";

import {
  parseEventLine,
  parseStateBody,
  parseStateLine,
  parseStateMeta,
} from "../src/records.js";

describe("event line parsing", () => {
  it("splits seq/t/kind from payload fields", () => {
    const rec = parseEventLine(
      "seq=13 t=35 kind=Resolved activation=2 exception=FeedBeltTable")!;
    expect(rec.seq).toBe(13);
    expect(rec.t).toBe(35);
    expect(rec.kind).toBe("Resolved");
    expect(rec.fields).toEqual({ activation: "2", exception: "FeedBeltTable" });
  });

  it("ignores blanks and comments", () => {
    expect(parseEventLine("")).toBeNull();
    expect(parseEventLine("# version=1")).toBeNull();
  });
});

describe("state parsing", () => {
  it("reads triples and skips the meta line", () => {
    const text = "# version=4 tick=120 paused=1 plates=2\n" +
      "object=tf1 group=green state=red\n";
    const triples = parseStateBody(text);
    expect(triples).toEqual([{ object: "tf1", group: "green", state: "red" }]);
    const meta = parseStateMeta(text)!;
    expect(meta).toEqual({ version: 4, tick: 120, paused: true, plates: 2 });
  });

  it("rejects malformed lines", () => {
    expect(parseStateLine("object=tf1 group=green")).toBeNull();
  });
});
