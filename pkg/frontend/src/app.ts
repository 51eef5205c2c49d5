// DOM wiring: poll the service, fold events into the view model, paint.
// The painted view is always a pure function of (initial /state, event
// prefix received so far); user commands only ever fire requests.

import { connect, PanelSession } from "./client.js";
import { parseEventLines, parseStateBody, parseStateMeta } from "./records.js";
import {
  ActivationLane,
  initialViewModel,
  laneList,
  PanelViewModel,
  platePositions,
  render,
} from "./viewmodel.js";

const POLL_MS = 250;
const STALE_MS = 2000;

// Schematic order, feed side to deposit side.
const TILE_ORDER = ["tf1", "fb", "t", "r", "r.arm1", "r.arm2",
  "p1", "p2", "db", "tf2"];

interface AppState {
  session: PanelSession;
  vm: PanelViewModel;
  paused: boolean;
  plates: number;
  notice: string;
  stale: boolean;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function paintDevices(state: AppState, host: HTMLElement): void {
  host.replaceChildren();
  const plates = new Set(platePositions(state.vm));
  const seen = new Set<string>();
  const order = [...TILE_ORDER, ...Object.keys(state.vm.devices).sort()];
  for (const id of order) {
    const tile = state.vm.devices[id];
    if (!tile || seen.has(id)) continue;
    seen.add(id);
    const card = el("div", "tile" + (tile.error ? " error" : ""));
    const head = el("div", "tile-head", id);
    if (plates.has(id)) head.append(el("span", "plate", "●"));
    card.append(head);
    for (const [group, value] of Object.entries(tile.groups).sort()) {
      card.append(el("div", "tile-state", `${group}: ${value}`));
    }
    host.append(card);
  }
}

function stageLabel(lane: ActivationLane): string {
  return lane.stages.map((s) => {
    switch (s.stage) {
      case "entered": return "entered";
      case "fault": return `fault(${s.exception ?? "?"})`;
      case "raised": return `raised(${s.role}:${s.exception})`;
      case "interrupted": return `interrupted(${s.role})`;
      case "resolved": return `resolved(${s.exception})`;
      case "handler": return `handler(${s.exception})`;
      case "outcome": return `outcome(${s.outcome})`;
    }
  }).join(" → ");
}

function paintLanes(state: AppState, host: HTMLElement): void {
  host.replaceChildren();
  for (const lane of laneList(state.vm).slice(0, 14)) {
    const cls = lane.outcome === undefined ? "lane running"
      : lane.outcome.startsWith("Normal") ? "lane done"
        : "lane trouble";
    const row = el("div", cls);
    row.append(el("span", "lane-name",
      `#${lane.activation} ${lane.interaction}`));
    row.append(el("span", "lane-stages", stageLabel(lane)));
    host.append(row);
  }
}

function paintHeader(state: AppState): void {
  const badge = document.getElementById("stale-badge")!;
  badge.hidden = !state.stale;
  const tick = document.getElementById("tick")!;
  tick.textContent = `tick ${state.vm.lastTick} · plates ${state.plates}` +
    (state.paused ? " · paused" : " · running");
  const noticeBox = document.getElementById("notice")!;
  noticeBox.textContent = state.notice;
  noticeBox.hidden = state.notice === "";
  const plateBtn = document.getElementById("add-plate") as HTMLButtonElement;
  plateBtn.disabled = !state.vm.addPlateEnabled;
  plateBtn.title = state.vm.addPlateEnabled
    ? "add a plate on the feed belt"
    : "entry light is red";
}

function paint(state: AppState): void {
  paintHeader(state);
  paintDevices(state, document.getElementById("devices")!);
  paintLanes(state, document.getElementById("lanes")!);
}

async function resync(state: AppState): Promise<void> {
  const reply = await state.session.fetchState();
  const meta = parseStateMeta(reply.text);
  state.vm = initialViewModel(parseStateBody(reply.text));
  state.vm = { ...state.vm, lastSeq: -1 };
  if (meta) {
    state.paused = meta.paused;
    state.plates = meta.plates;
  }
}

async function poll(state: AppState): Promise<void> {
  try {
    const reply = await state.session.fetchEvents(state.vm.lastSeq + 1);
    const records = parseEventLines(reply.text);
    if (records.length && records[0].seq !== state.vm.lastSeq + 1) {
      await resync(state);        // the service was reset: rebuild from /state
      state.vm = render(state.vm, records.filter((r) => r.seq > state.vm.lastSeq));
    } else {
      state.vm = render(state.vm, records);
    }
    const meta = parseStateMeta((await state.session.fetchState()).text);
    if (meta) {
      state.paused = meta.paused;
      state.plates = meta.plates;
    }
    state.stale = false;
  } catch {
    state.stale = Date.now() - state.session.lastContact > STALE_MS;
  }
  paint(state);
}

function wireControls(state: AppState): void {
  const run = (fn: () => Promise<unknown>) => () => {
    fn().catch(() => { state.stale = true; });
  };
  document.getElementById("pause")!.onclick =
    run(() => state.session.control("pause"));
  document.getElementById("resume")!.onclick =
    run(() => state.session.control("resume"));
  document.getElementById("step")!.onclick =
    run(() => state.session.control("step", 1));
  document.getElementById("reset")!.onclick = run(async () => {
    await state.session.control("reset");
    await resync(state);
    paint(state);
  });
  document.getElementById("add-plate")!.onclick = run(async () => {
    const reply = await state.session.addPlate();
    state.notice = reply.ok ? "" : `plate rejected: ${reply.text.trim()}`;
    paint(state);
  });
  document.getElementById("inject")!.onclick = run(async () => {
    const target = (document.getElementById("fault-target") as HTMLInputElement).value;
    const exception = (document.getElementById("fault-exc") as HTMLInputElement).value;
    const atRaw = (document.getElementById("fault-at") as HTMLInputElement).value;
    const at = atRaw === "" ? undefined : Number(atRaw);
    const reply = await state.session.inject(target, exception, at);
    state.notice = reply.ok ? `fault ${reply.text.trim()}`
      : `fault rejected: ${reply.text.trim()}`;
    paint(state);
  });
}

export async function main(): Promise<void> {
  const base = new URLSearchParams(location.search).get("service")
    ?? `http://${location.hostname || "127.0.0.1"}:8642`;
  const state: AppState = {
    session: connect(base),
    vm: initialViewModel([]),
    paused: true,
    plates: 0,
    notice: "",
    stale: false,
  };
  wireControls(state);
  await resync(state).catch(() => { state.stale = true; });
  paint(state);
  setInterval(() => void poll(state), POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("devices")) {
  void main();
}
