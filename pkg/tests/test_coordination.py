"""Barriers, exception collection, crash detection, election, transport."""

import itertools

import pytest

from dmikit import coordination as co
from dmikit import interaction as ia
from dmikit.errors import TotalCrash
from dmikit.faults import FaultPlan, FaultRecord, parse_fault_plan
from dmikit.sim import Scheduler
from dmikit.transport import SimTransport, elect_leader

from conftest import (
    cell_store,
    load_table_def,
    make_coordinator,
    raise_when_running,
    recovery_bodies,
)

BINDING = {"tf1": "tf1", "fb": "fb", "t": "t"}


def run_def(d, plan=None, config=None, store=None):
    store = store or cell_store()
    coord = make_coordinator(store, plan=plan, config=config)
    rec = ia.activate(d, BINDING, coord)
    out = ia.run_to_outcome(rec)
    return store, coord, rec, out


# -- entry barrier ---------------------------------------------------------------

def test_barrier_releases_after_all_arrivals():
    _, coord, rec, out = run_def(load_table_def())
    assert out == ia.Outcome.normal()
    entered = [r for r in coord.log.records if r.kind == "ActionEntered"]
    assert len(entered) == 1
    # release happened only after the last Arrived reached the leader
    arrived_recv = [t for t, verb, m in coord.transport.trace
                    if verb == "recv" and m.kind == "Arrived"]
    assert len(arrived_recv) == 3
    assert entered[0].t >= max(arrived_recv)


def test_barrier_release_insensitive_to_arrival_order():
    outcomes = []
    for delays in itertools.permutations((0, 2, 4)):
        plan = FaultPlan([
            FaultRecord(at=0, kind="delay", target=f"role:LoadTable.{role}",
                        match="Arrived", duration=d)
            for role, d in zip(("tf1", "fb", "t"), delays) if d
        ])
        store, coord, rec, out = run_def(load_table_def(), plan=plan)
        outcomes.append((out, store["t"].committed_view()["load"]))
    assert len(set(outcomes)) == 1
    assert outcomes[0] == (ia.Outcome.normal(), "loaded")


def test_dropped_arrival_times_out_as_crashed_role():
    plan = parse_fault_plan("at=0 kind=drop target=role:LoadTable.fb match=Arrived\n")
    _, coord, rec, out = run_def(load_table_def(), plan=plan)
    assert rec.done
    raised = [r for r in coord.log.records if r.kind == "ExceptionRaised"]
    assert any(r.payload["exception"] == "CrashedRoleException" for r in raised)
    assert out.kind in (ia.ABORT, ia.FAILURE)


# -- exception collection -----------------------------------------------------------

def test_single_notice_with_finished_roles_resolves_to_it():
    d = load_table_def(
        handlers={"TableAngle": recovery_bodies()},
        bodies={"tf1": [], "fb": [],
                "t": [ia.StateTransition(("t",), "lower"),
                      ia.StateTransition(("t",), "upper"),
                      ia.RaiseException("TableAngle")]},
        post=False)
    _, coord, rec, out = run_def(d)
    assert rec.resolutions == ["TableAngle"]
    assert coord.log.kinds().count("RoleInterrupted") == 0
    assert out == ia.Outcome.normal()


def test_concurrent_raises_with_interrupt_contribution():
    # the light's single step outlasts the belt and table faults, so it is
    # interrupted and contributes InterruptedException to the raised set
    cfg = co.RunConfig(step_costs={"TrafficLight": 10, "FeedBelt": 1, "Table": 1})
    d = load_table_def(
        handlers={"FeedBeltTable": recovery_bodies()},
        bodies={
            "tf1": [ia.StateTransition(("tf1",), "green")],
            "fb": [ia.RaiseException("FeedBeltStuck")],
            "t": [ia.StateTransition(("t",), "lower"),
                  ia.RaiseException("TableAngle")],
        },
        post=False)
    _, coord, rec, out = run_def(d, config=cfg)
    kinds = coord.log.kinds()
    assert kinds.count("ExceptionRaised") == 2
    assert kinds.count("RoleInterrupted") == 1
    assert rec.resolutions == ["FeedBeltTable"]
    assert rec.interrupted == ["tf1"]
    assert out == ia.Outcome.normal()


def test_interrupts_precede_resolution_in_the_message_trace():
    cfg = co.RunConfig(step_costs={"TrafficLight": 10, "FeedBelt": 1, "Table": 1})
    d = load_table_def(
        handlers={"FeedBeltTable": recovery_bodies()},
        bodies={
            "tf1": [ia.StateTransition(("tf1",), "green")],
            "fb": [ia.RaiseException("FeedBeltStuck")],
            "t": [ia.RaiseException("TableAngle")],
        },
        post=False)
    _, coord, rec, _ = run_def(d, config=cfg)
    sends = [(t, m.kind) for t, verb, m in coord.transport.trace if verb == "send"]
    first_interrupt = min(t for t, k in sends if k == "Interrupt")
    first_resolved = min(t for t, k in sends if k == "Resolved")
    assert first_interrupt < first_resolved


# -- crash detection and election ------------------------------------------------------

def test_crash_detector_declares_after_tolerance():
    det = co.CrashDetector(period=1, tolerance=3)
    det.watch(7, 0)
    declared_at = None
    for t in range(1, 20):
        if t <= 5:
            det.beat(7, t)
        if det.check(t):
            declared_at = t
            break
    assert declared_at == 8
    # declarations are stable
    det.beat(7, 9)
    assert 7 in det.declared


def test_crash_detector_quiet_when_beats_flow():
    det = co.CrashDetector(period=1, tolerance=3)
    det.watch(3, 0)
    for t in range(1, 50):
        det.beat(3, t)
        assert det.check(t) == []


def test_elect_leader_minimum_ordinal():
    assert elect_leader({2, 5, 7}) == 2
    assert elect_leader({9}) == 9
    with pytest.raises(TotalCrash):
        elect_leader(set())


def test_duplicate_registration_rejected():
    from dmikit.errors import DuplicateRegistration
    from dmikit.transport import Message

    store = cell_store()
    coord = make_coordinator(store)
    rec = ia.activate(load_table_def(), BINDING, coord)
    group = coord.groups[rec.activation_id]
    coord.scheduler.run(until=lambda: group.released)
    # a different manager claiming an already-registered role is a fault
    rogue = Message(kind="Register", sender=99, receiver=group.leader_ordinal,
                    activation_id=rec.activation_id, seq=0,
                    payload={"role": "fb"})
    with pytest.raises(DuplicateRegistration):
        group.leader_message(group.leader(), rogue)
    # the same manager re-announcing itself (as after an election) is fine
    again = Message(kind="Register", sender=group.by_role["fb"],
                    receiver=group.leader_ordinal,
                    activation_id=rec.activation_id, seq=1,
                    payload={"role": "fb"})
    group.leader_message(group.leader(), again)
    assert ia.run_to_outcome(rec) == ia.Outcome.normal()


# -- crash matrix -----------------------------------------------------------------------

def matrix_def():
    return load_table_def(
        default_handler=recovery_bodies(),
        bodies={
            "tf1": [ia.StateTransition(("tf1",), "green")],
            "fb": [ia.StateTransition(("fb",), "free")],
            "t": [ia.StateTransition(("t",), "lower"),
                  ia.RaiseException("TableAngle"),
                  ia.StateTransition(("t",), "loaded")],
        },
        post=False)


def reference_anchors():
    cfg = co.RunConfig(heartbeats=True)
    _, coord, rec, _ = run_def(matrix_def(), config=cfg)
    by_kind = {}
    for r in coord.log.records:
        by_kind.setdefault(r.kind, r.t)
    return by_kind


ANCHORS = None


def crash_times():
    global ANCHORS
    if ANCHORS is None:
        ANCHORS = reference_anchors()
    return {
        "before_entry": 0,
        "mid_body": ANCHORS["ActionEntered"] + 1,
        "mid_resolution": ANCHORS["ExceptionRaised"] + 1,
        "mid_exit": ANCHORS["Outcome"] - 1,
    }


@pytest.mark.parametrize("point", ["before_entry", "mid_body",
                                   "mid_resolution", "mid_exit"])
@pytest.mark.parametrize("target_role,is_leader", [("tf1", True), ("fb", False)])
def test_crash_matrix_always_reaches_done(point, target_role, is_leader):
    at = crash_times()[point]
    plan = FaultPlan([FaultRecord(at=at, kind="crash",
                                  target=f"manager:LoadTable.{target_role}")])
    cfg = co.RunConfig(heartbeats=True)
    store = cell_store()
    coord = make_coordinator(store, plan=plan, config=cfg)
    rec = ia.activate(matrix_def(), BINDING, coord)
    bound = coord.tick_bound(rec)
    out = ia.run_to_outcome(rec)
    assert rec.done
    assert out.kind in (ia.NORMAL, ia.EXCEPTIONAL, ia.ABORT, ia.FAILURE)
    assert rec.done_at is not None and rec.done_at <= bound
    elections = coord.log.kinds().count("LeaderElected")
    if is_leader:
        assert elections == 1
    else:
        assert elections == 0


def test_leader_crash_mid_resolution_resolves_same_exception():
    cfg = co.RunConfig(heartbeats=True)
    _, coord0, rec0, _ = run_def(matrix_def(), config=cfg)
    baseline = rec0.resolutions

    at = crash_times()["mid_resolution"]
    plan = FaultPlan([FaultRecord(at=at, kind="crash",
                                  target="manager:LoadTable.tf1")])
    store, coord, rec, out = run_def(matrix_def(), plan=plan, config=cfg)
    assert rec.done
    resolved_events = [r.payload["exception"] for r in coord.log.records
                       if r.kind == "Resolved"]
    # re-collection after the election reaches the same resolution id
    assert len(set(resolved_events)) == 1
    assert baseline and resolved_events[0] == baseline[0]


def test_total_crash_recorded_as_failure():
    plan = FaultPlan([FaultRecord(at=0, kind="crash",
                                  target=f"manager:LoadTable.{r}")
                      for r in ("tf1", "fb", "t")])
    store, coord, rec, out = run_def(matrix_def(), plan=plan)
    assert out == ia.Outcome.failure()
    assert rec.done


def test_role_crash_is_reported_by_its_manager():
    plan = FaultPlan([FaultRecord(at=0, kind="crash", target="role:LoadTable.fb")])
    _, coord, rec, out = run_def(load_table_def(default_handler=recovery_bodies(),
                                                post=False), plan=plan)
    assert rec.done
    assert rec.raised.get("fb") == "CrashedRoleException"
    assert out.kind in (ia.NORMAL, ia.ABORT, ia.FAILURE)


# -- transport ----------------------------------------------------------------------------

def collect(received):
    return lambda msg: received.append(msg)


def test_transport_zero_fault_fifo_order():
    sched = Scheduler()
    tr = SimTransport(sched)
    got = []
    tr.register(1, collect(got))
    for i in range(5):
        tr.send("Heartbeat", sender=0, receiver=1, activation_id=0, n=i)
    delivered = tr.step(100)
    assert [m.payload["n"] for m in delivered] == list(range(5))
    assert [m.seq for m in got] == sorted(m.seq for m in got)


def test_transport_delay_fault_shifts_delivery():
    def handler_start_time(extra_plan):
        cfg = co.RunConfig(step_costs={"TrafficLight": 10, "FeedBelt": 1,
                                       "Table": 1})
        d = load_table_def(handlers={"FeedBeltTable": recovery_bodies()},
                           bodies={"tf1": [ia.StateTransition(("tf1",), "green")],
                                   "fb": [ia.RaiseException("FeedBeltStuck")],
                                   "t": [ia.RaiseException("TableAngle")]},
                           post=False)
        _, coord, _, _ = run_def(d, plan=extra_plan, config=cfg)
        starts = [t for t, verb, m in coord.transport.trace
                  if verb == "recv" and m.kind == "Resolved" and m.receiver == 0]
        return min(starts)

    base = handler_start_time(None)
    delayed = handler_start_time(parse_fault_plan(
        "at=0 kind=delay target=role:LoadTable.tf1 match=Resolved duration=10\n"))
    assert delayed >= base + 10


def test_identical_seed_and_plan_identical_trace():
    def one():
        cfg = co.RunConfig(seed=99, jitter=3)
        _, coord, _, _ = run_def(matrix_def(), config=cfg)
        return "\n".join(coord.transport.trace_lines()), coord.log.dump()
    assert one() == one()


def test_threaded_executor_matches_inline_trace():
    logs = {}
    for executor in ("inline", "threads"):
        cfg = co.RunConfig(executor=executor)
        _, coord, _, out = run_def(matrix_def(), config=cfg)
        logs[executor] = coord.log.dump()
        assert out.kind in (ia.NORMAL, ia.ABORT)
    assert logs["inline"] == logs["threads"]
