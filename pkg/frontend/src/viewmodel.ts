// The panel's view model is a pure fold over (initial committed state,
// event prefix). There is no client-side simulation: replaying the same
// records always renders the same view, and nothing is shown that the
// service did not report.

import { EventRecord, StateTriple } from "./records.js";

export interface DeviceTile {
  object: string;
  groups: Record<string, string>;
  error: boolean;
  holdsPlate: boolean;
}

export interface LaneStage {
  stage: "entered" | "fault" | "raised" | "interrupted" | "resolved"
  | "handler" | "outcome";
  t: number;
  role?: string;
  exception?: string;
  outcome?: string;
}

export interface ActivationLane {
  activation: number;
  interaction: string;
  participants: string[];
  stages: LaneStage[];
  outcome?: string;
}

export interface PanelViewModel {
  devices: Record<string, DeviceTile>;
  laneOrder: number[];
  lanes: Record<number, ActivationLane>;
  addPlateEnabled: boolean;
  lastSeq: number;
  lastTick: number;
}

const HOLDING_STATES = new Set(["arriving", "loaded", "forged"]);

function isErrorState(state: string): boolean {
  return state === "error" || state.endsWith("_error");
}

function tileFrom(object: string, groups: Record<string, string>): DeviceTile {
  const states = Object.values(groups);
  return {
    object,
    groups,
    error: states.some(isErrorState),
    holdsPlate: states.some((s) => HOLDING_STATES.has(s)),
  };
}

export function initialViewModel(triples: StateTriple[]): PanelViewModel {
  const grouped: Record<string, Record<string, string>> = {};
  for (const { object, group, state } of triples) {
    (grouped[object] ??= {})[group] = state;
  }
  const devices: Record<string, DeviceTile> = {};
  for (const [object, groups] of Object.entries(grouped)) {
    devices[object] = tileFrom(object, groups);
  }
  return {
    devices,
    laneOrder: [],
    lanes: {},
    addPlateEnabled: lightIsGreen(devices),
    lastSeq: -1,
    lastTick: 0,
  };
}

function lightIsGreen(devices: Record<string, DeviceTile>): boolean {
  const tf1 = devices["tf1"];
  if (!tf1) return false;
  return Object.values(tf1.groups).includes("green");
}

const LANE_STAGES: Record<string, LaneStage["stage"]> = {
  ActionEntered: "entered",
  FaultInjected: "fault",
  ExceptionRaised: "raised",
  RoleInterrupted: "interrupted",
  Resolved: "resolved",
  HandlerStarted: "handler",
  Outcome: "outcome",
};

export function applyEvent(vm: PanelViewModel, rec: EventRecord): PanelViewModel {
  const next: PanelViewModel = {
    devices: vm.devices,
    laneOrder: vm.laneOrder,
    lanes: vm.lanes,
    addPlateEnabled: vm.addPlateEnabled,
    lastSeq: rec.seq,
    lastTick: Math.max(vm.lastTick, rec.t),
  };

  if (rec.kind === "StateChanged") {
    const object = rec.fields.object;
    const old = vm.devices[object]?.groups ?? {};
    const groups = { ...old, [rec.fields.group]: rec.fields.state };
    next.devices = { ...vm.devices, [object]: tileFrom(object, groups) };
    next.addPlateEnabled = lightIsGreen(next.devices);
    return next;
  }

  const stage = LANE_STAGES[rec.kind];
  if (stage === undefined) {
    return next; // Heartbeat, LeaderElected and friends advance the clock only
  }
  const activation = Number(rec.fields.activation ?? "-1");
  const existing = vm.lanes[activation];
  const lane: ActivationLane = existing
    ? { ...existing, stages: [...existing.stages] }
    : {
      activation,
      interaction: rec.fields.interaction ?? "?",
      participants: [],
      stages: [],
    };
  if (rec.kind === "ActionEntered") {
    lane.interaction = rec.fields.interaction ?? lane.interaction;
    lane.participants = (rec.fields.participants ?? "")
      .split(",")
      .filter(Boolean)
      .map((pair) => pair.split(":")[1] ?? pair);
  }
  lane.stages.push({
    stage,
    t: rec.t,
    role: rec.fields.role,
    exception: rec.fields.exception,
    outcome: rec.fields.outcome,
  });
  if (rec.kind === "Outcome") {
    lane.outcome = rec.fields.outcome;
  }
  next.lanes = { ...vm.lanes, [activation]: lane };
  next.laneOrder = existing ? vm.laneOrder : [...vm.laneOrder, activation];
  return next;
}

export function render(vm: PanelViewModel, records: EventRecord[]): PanelViewModel {
  let out = vm;
  for (const rec of records) {
    out = applyEvent(out, rec);
  }
  return out;
}

export function platePositions(vm: PanelViewModel): string[] {
  return Object.values(vm.devices)
    .filter((d) => d.holdsPlate)
    .map((d) => d.object)
    .sort();
}

export function laneList(vm: PanelViewModel, newestFirst = true): ActivationLane[] {
  const lanes = vm.laneOrder.map((id) => vm.lanes[id]);
  return newestFirst ? lanes.reverse() : lanes;
}
