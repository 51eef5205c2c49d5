"""The metal-processing cell: model construction, runs, plate tracking,
and safety/liveness checking over recorded traces.

Twelve interactions drive plates through the cell. The runner pins each
action's participants to the physical devices (the two presses stay
variable), tracks plate tokens from the committed state deltas in the
event log, and the checkers re-derive every property from the log alone,
independently of the runtime's own locking.
"""

from __future__ import annotations

import importlib.resources as resources
from dataclasses import dataclass, field

from . import dsl
from .coordination import RunConfig
from .dsl.run import CompiledSpec, Interpreter, StepResult
from .events import EventLog, EventRecord
from .faults import FaultPlan, parse_fault_plan

DEVICES = ("db", "fb", "p1", "p2", "r", "r.arm1", "r.arm2", "t", "tf1", "tf2")

#: A device holds a plate while one of its groups is in one of these states.
HOLDING_STATES = frozenset({"arriving", "loaded", "forged"})

BINDINGS: dict[str, list[dict[str, str]]] = {
    "AddPlate": [{"tf1": "tf1", "fb": "fb"}],
    "FeedBeltTransport": [{"fb": "fb"}],
    "LoadTable": [{"tf1": "tf1", "fb": "fb", "t": "t"}],
    "UnloadTable": [{"t": "t", "r": "r"}],
    "RotateToPress1": [{"r": "r", "p": "p1"}],
    "RotateToPress2": [{"r": "r", "p": "p2"}],
    "LoadPress1": [{"r": "r", "p": "p1"}],
    "LoadPress2": [{"r": "r", "p": "p2"}],
    "Forge1": [{"p": "p1"}],
    "Forge2": [{"p": "p2"}],
    "UnloadPressToDeposit": [{"r": "r", "p": "p1", "db": "db"},
                             {"r": "r", "p": "p2", "db": "db"}],
    "DepositBeltOut": [{"db": "db", "tf2": "tf2"}],
}

CYCLE_ORDER = ("AddPlate", "FeedBeltTransport", "LoadTable", "UnloadTable",
               "RotateToPress", "LoadPress", "Forge", "UnloadPressToDeposit",
               "DepositBeltOut")


def model_source(name: str = "production_cell.disco") -> str:
    return (resources.files("dmikit") / "models" / name).read_text(encoding="utf-8")


def plan_source(name: str) -> str:
    return (resources.files("dmikit") / "models" / "faults" / name).read_text(
        encoding="utf-8")


def named_fault_plan(name: str) -> FaultPlan:
    if not name.endswith(".plan"):
        name += ".plan"
    return parse_fault_plan(plan_source(name))


def concurrent_fault_config() -> RunConfig:
    """Device timing for the concurrent-fault scenario: the light's single
    switch step outlasts the belt and table faults, so the light role is
    still running when it gets interrupted."""
    return RunConfig(step_costs={"TrafficLight": 10, "FeedBelt": 1, "Table": 1})


@dataclass
class CellModel:
    compiled: CompiledSpec
    binding_table: dict[str, list[dict[str, str]]]
    devices: tuple[str, ...] = DEVICES

    @property
    def actions(self) -> list[str]:
        return sorted(self.compiled.defs)


def build_cell(source: str | None = None) -> CellModel:
    spec = dsl.parse(source if source is not None else model_source(),
                     "production_cell.disco")
    compiled = dsl.compile_spec(spec)
    return CellModel(compiled=compiled, binding_table=dict(BINDINGS))


# -- plate tracking -----------------------------------------------------------------

@dataclass
class PlateToken:
    plate_id: int
    location: str
    forged: bool = False
    entered_step: int = 0
    exited_step: int | None = None

    @property
    def resident(self) -> bool:
        return self.exited_step is None


class PlateTracker:
    """Derives plate movement purely from the committed deltas in the log.

    A device whose holding predicate flips off lost its plate; one whose
    predicate flips on gained it. A flip into ``error`` traps the plate in
    place instead. One source plus one dest is a move; a dest alone is an
    entry (legal only on AddPlate); a source alone is an exit (legal only
    on DepositBeltOut, and the plate must have been forged).
    """

    def __init__(self):
        self.holding: dict[str, bool] = {d: False for d in DEVICES}
        self.plates: dict[int, PlateToken] = {}
        self.by_location: dict[str, int] = {}
        self.spawned = 0
        self.exited = 0
        self.steps = 0
        self.violations: list[str] = []
        self._batch: dict[int, list[EventRecord]] = {}
        self._actions: dict[int, str] = {}

    def feed(self, records: list[EventRecord]) -> None:
        for rec in records:
            if rec.kind == "ActionEntered":
                self._actions[int(rec.payload["activation"])] = \
                    str(rec.payload["interaction"])
            elif rec.kind == "StateChanged":
                act = int(rec.payload.get("activation", -1))
                self._batch.setdefault(act, []).append(rec)
            elif rec.kind == "Outcome":
                act = int(rec.payload["activation"])
                self.steps += 1
                self._apply(act, self._batch.pop(act, []))

    def _apply(self, activation: int, changes: list[EventRecord]) -> None:
        action = self._actions.get(activation, "?")
        sources, dests, forged_marks = [], [], []
        for rec in changes:
            obj = str(rec.payload["object"])
            if obj not in self.holding:
                continue
            state = str(rec.payload["state"])
            now_holding = state in HOLDING_STATES
            was = self.holding[obj]
            if was and not now_holding:
                if state == "error":
                    continue                     # plate trapped on the device
                sources.append(obj)
            elif not was and now_holding:
                dests.append(obj)
            if state == "forged":
                forged_marks.append(obj)
            self.holding[obj] = now_holding

        if len(sources) > 1 or len(dests) > 1:
            self.violations.append(
                f"step {self.steps}: {action} moved more than one plate")
            return
        source = sources[0] if sources else None
        dest = dests[0] if dests else None
        if dest is not None and source is None:
            if action != "AddPlate":
                self.violations.append(
                    f"step {self.steps}: plate materialized on {dest} in {action}")
            self._spawn(dest)
        elif source is not None and dest is None:
            self._exit(source, action)
        elif source is not None and dest is not None:
            self._move(source, dest, action)
        for obj in forged_marks:
            pid = self.by_location.get(obj)
            if pid is not None:
                self.plates[pid].forged = True

    def _spawn(self, dest: str) -> None:
        pid = self.spawned
        self.spawned += 1
        self.plates[pid] = PlateToken(plate_id=pid, location=dest,
                                      entered_step=self.steps)
        self.by_location[dest] = pid

    def _move(self, source: str, dest: str, action: str) -> None:
        pid = self.by_location.pop(source, None)
        if pid is None:
            self.violations.append(
                f"step {self.steps}: {action} moved a plate from empty {source}")
            return
        if dest in self.by_location:
            self.violations.append(
                f"step {self.steps}: {action} put a plate onto occupied {dest}")
        self.plates[pid].location = dest
        self.by_location[dest] = pid

    def _exit(self, source: str, action: str) -> None:
        pid = self.by_location.pop(source, None)
        if pid is None:
            self.violations.append(
                f"step {self.steps}: {action} removed a plate from empty {source}")
            return
        plate = self.plates[pid]
        plate.exited_step = self.steps
        plate.location = "out"
        self.exited += 1
        if action != "DepositBeltOut":
            self.violations.append(
                f"step {self.steps}: plate {pid} vanished during {action}")
        if not plate.forged:
            self.violations.append(
                f"step {self.steps}: plate {pid} left the cell unforged")

    def resident_plates(self) -> list[PlateToken]:
        return [p for p in self.plates.values() if p.resident]


# -- trace checkers ----------------------------------------------------------------------

def _binding_objects(payload_value: str) -> list[str]:
    return [pair.partition(":")[2] for pair in str(payload_value).split(",") if pair]


def _covers(a: str, b: str) -> bool:
    return a == b or b.startswith(a + ".") or a.startswith(b + ".")


def check_safety(records: list[EventRecord]) -> list[str]:
    """Device mutual exclusion plus plate placement, re-derived from the log."""
    violations: list[str] = []
    active: dict[int, tuple[str, list[str]]] = {}
    for rec in records:
        if rec.kind == "ActionEntered":
            act = int(rec.payload["activation"])
            objs = _binding_objects(rec.payload.get("participants", ""))
            for other_id, (other_name, other_objs) in active.items():
                shared = [o for o in objs
                          for q in other_objs if _covers(o, q)]
                if shared:
                    violations.append(
                        f"activations {other_id} ({other_name}) and {act} "
                        f"({rec.payload['interaction']}) overlap on {shared[0]}")
            active[act] = (str(rec.payload["interaction"]), objs)
        elif rec.kind == "Outcome":
            active.pop(int(rec.payload["activation"]), None)

    tracker = PlateTracker()
    tracker.feed(records)
    violations.extend(v for v in tracker.violations if "unforged" not in v)
    return violations


def check_liveness(records: list[EventRecord], budget: int = 150) -> list[str]:
    """Every plate must leave forged within `budget` activations of entering;
    plates younger than the budget at the end of the trace are not stalls."""
    tracker = PlateTracker()
    tracker.feed(records)
    violations = [v for v in tracker.violations if "unforged" in v]
    for plate in tracker.plates.values():
        if plate.exited_step is not None:
            if plate.exited_step - plate.entered_step > budget:
                violations.append(
                    f"plate {plate.plate_id} took "
                    f"{plate.exited_step - plate.entered_step} activations")
        elif tracker.steps - plate.entered_step > budget:
            violations.append(
                f"plate {plate.plate_id} stalled on {plate.location} "
                f"since activation {plate.entered_step}")
    return violations


# -- runs ----------------------------------------------------------------------------------

@dataclass
class CellRun:
    model: CellModel
    interp: Interpreter
    tracker: PlateTracker
    results: list[StepResult] = field(default_factory=list)
    plates_in: int = 1

    @property
    def log(self) -> EventLog:
        return self.interp.log

    def state(self):
        return self.interp.system_state()

    def actions_taken(self) -> list[str]:
        return [r.action for r in self.results]


def run_cell(model: CellModel | None = None, seed: int = 0,
             plan: FaultPlan | None = None, max_steps: int = 200,
             plates_in: int = 1, config: RunConfig | None = None,
             log: EventLog | None = None) -> CellRun:
    model = model or build_cell()
    tracker = PlateTracker()
    run = CellRun(model=model, interp=None, tracker=tracker, plates_in=plates_in)

    def gate(name: str, binding: dict[str, str]) -> bool:
        if name == "AddPlate":
            return tracker.spawned < run.plates_in
        return True

    interp = Interpreter(model.compiled, seed=seed, plan=plan, config=config,
                         binding_table=model.binding_table,
                         candidate_filter=gate, log=log)
    run.interp = interp
    cursor = 0
    for _ in range(max_steps):
        res = interp.step()
        fresh = interp.log.since(cursor)
        cursor += len(fresh)
        tracker.feed(fresh)
        if res is None:
            break
        run.results.append(res)
    return run
