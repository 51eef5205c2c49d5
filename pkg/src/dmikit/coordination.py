"""Manager/leader protocol driving every activation.

Each activation spawns one manager per role; the manager with the lowest
ordinal leads. The leader runs the entry barrier, collects exception
notices, interrupts still-running roles, resolves the exception set,
activates handler interactions, tallies outcome votes, and commits or
rolls back the external objects. Managers exchange messages only through
the simulated transport, so a run is a pure function of (seed, fault plan),
and any manager can take over leadership when the leader's heartbeats stop.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from typing import Callable

from . import hierarchy as hx
from . import interaction as ia
from . import transport as tp
from .errors import (
    DuplicateRaise,
    DuplicateRegistration,
    GuardFalse,
    NestingLimitExceeded,
    ParticipantBusy,
    PhaseViolation,
    StrictAssertStop,
)
from .events import EventLog
from .faults import FaultPlan
from .objects import ObjectStore, SharedObject
from .sim import Scheduler
from .transport import SimTransport, elect_leader

__all__ = [
    "RunConfig", "Coordinator", "CrashDetector", "Manager", "elect_leader",
]


@dataclass
class RunConfig:
    seed: int = 0
    base_delay: int = 1
    jitter: int = 0
    step_cost: int = 2
    step_costs: dict[str, int] = field(default_factory=dict)   # class or role key
    entry_timeout: int = 40
    stall_timeout: int = 60
    heartbeat_period: int = 5
    heartbeat_tolerance: int = 3
    heartbeats: bool | None = None      # None: enabled iff the plan crashes someone
    strict_asserts: bool = False
    max_nesting: int = 8
    nested_allowance: int = 200
    keep_trace: bool = True
    tick_slack: int = 400
    executor: str = "inline"            # or "threads"


class CrashDetector:
    """Declares a peer crashed after `tolerance` silent periods; declarations
    are stable for the lifetime of the detector."""

    def __init__(self, period: int, tolerance: int):
        self.period = period
        self.tolerance = tolerance
        self.last_heard: dict[int, int] = {}
        self.declared: set[int] = set()

    def watch(self, peer: int, now: int) -> None:
        self.last_heard.setdefault(peer, now)

    def beat(self, peer: int, now: int) -> None:
        if peer not in self.declared:
            self.last_heard[peer] = now

    def check(self, now: int) -> list[int]:
        """Peers newly declared crashed as of ``now``."""
        fresh = []
        for peer, heard in self.last_heard.items():
            if peer in self.declared:
                continue
            if now - heard >= self.period * self.tolerance:
                self.declared.add(peer)
                fresh.append(peer)
        return fresh


class _ThreadedSteps:
    """Executes step thunks on a dedicated thread per role, one at a time.

    Admission order is still dictated by the scheduler, so outcomes and
    traces are identical to inline execution; the point is to run body code
    on independent execution contexts."""

    def __init__(self):
        self._boxes: dict[str, tuple] = {}

    def run(self, key: str, thunk: Callable[[], None]) -> None:
        if key not in self._boxes:
            import queue
            q: "queue.Queue" = queue.Queue()

            def loop():
                while True:
                    item = q.get()
                    if item is None:
                        return
                    fn, done = item
                    try:
                        fn()
                    finally:
                        done.set()

            t = threading.Thread(target=loop, daemon=True)
            t.start()
            self._boxes[key] = (q, t)
        q, _ = self._boxes[key]
        done = threading.Event()
        q.put((thunk, done))
        done.wait()

    def stop(self) -> None:
        for q, _ in self._boxes.values():
            q.put(None)
        self._boxes.clear()


class Manager:
    """State machine for one role of one activation."""

    def __init__(self, group: "ActivationGroup", ordinal: int, role: str,
                 participant_class: str):
        self.group = group
        self.coord = group.coord
        self.ordinal = ordinal
        self.role = role
        self.participant_class = participant_class
        self.role_key = f"{group.record.interaction}.{role}"
        self.registered = False
        self.arrived = False
        self.crashed = False
        self.role_crashed = False
        self.role_crash_reported = False
        # per-phase execution state
        self.body_phase: tuple | None = None    # (phase, handler exc)
        self.queue: list = []
        self.signalled: ia.Outcome | None = None
        self.raised: str | None = None
        self.interrupted = False
        self.vote: ia.Outcome | None = None
        self.observed: ia.Outcome | None = None
        self.running = False
        self._step_handle = None
        self.detector = CrashDetector(self.coord.config.heartbeat_period,
                                      self.coord.config.heartbeat_tolerance)
        self.is_leader = ordinal == group.leader_ordinal

    # -- plumbing ---------------------------------------------------------

    @property
    def record(self) -> ia.ActivationRecord:
        return self.group.record

    def send(self, kind: str, receiver: int, **payload) -> None:
        self.coord.transport.send(kind, self.ordinal, receiver,
                                  self.record.activation_id, **payload)

    def to_leader(self, kind: str, **payload) -> None:
        self.send(kind, self.group.leader_ordinal, **payload)

    def alive(self) -> bool:
        return not self.crashed

    # -- entry -----------------------------------------------------------------

    def start(self) -> None:
        if self.crashed:
            return
        self.to_leader(tp.REGISTER, role=self.role)
        self.to_leader(tp.ARRIVED, role=self.role)
        if self.group.heartbeats_on:
            now = self.coord.scheduler.now
            if self.is_leader:
                for m in self.group.managers.values():
                    if m.ordinal != self.ordinal:
                        self.detector.watch(m.ordinal, now)
            else:
                self.detector.watch(self.group.leader_ordinal, now)
            self._schedule_heartbeat()

    # -- message handling ----------------------------------------------------------

    def on_message(self, msg: tp.Message) -> None:
        if self.crashed or msg.activation_id != self.record.activation_id:
            return
        kind = msg.kind
        if kind == tp.HEARTBEAT:
            self.detector.beat(msg.sender, self.coord.scheduler.now)
        elif kind == tp.BARRIER_RELEASE:
            self._start_body((ia.RUNNING_NORMAL, None),
                             self.record.definition.body_for(self.role))
        elif kind == tp.INTERRUPT:
            self._on_interrupt()
        elif kind == tp.RESOLVED:
            self._on_resolved(str(msg.payload["exception"]))
        elif kind == tp.ROLL_BACK:
            self._stop_body()
        elif kind == tp.COMMIT:
            self._on_commit(ia.Outcome.parse(str(msg.payload["outcome"])))
        elif kind == tp.LEADER_IS:
            self._on_leader_is(msg.sender)
        elif kind == tp.ELECT_LEADER:
            if (msg.payload.get("candidate") == self.ordinal
                    and not self.is_leader):
                self.group.become_leader(self)
        elif self.is_leader:
            self.group.leader_message(self, msg)

    # -- body execution ----------------------------------------------------------------

    def _start_body(self, phase: tuple, steps) -> None:
        if self.body_phase == phase:
            return                      # duplicate release/resolved: idempotent
        self.body_phase = phase
        self.queue = list(steps)
        self.signalled = None
        self.raised = None
        self.interrupted = False
        self.vote = None
        self.running = True
        self._schedule_step()

    def _stop_body(self) -> None:
        self.running = False
        if self._step_handle is not None:
            self._step_handle.cancel()
            self._step_handle = None

    def _schedule_step(self) -> None:
        if not self.queue:
            self._finish_body()
            return
        cost = self.coord.step_cost_for(self)
        self._step_handle = self.coord.scheduler.after(cost, self._step_event)

    def _step_event(self) -> None:
        self._step_handle = None
        if self.crashed or not self.running or self.record.done:
            return
        phase, handler = self.body_phase
        if self.record.phase not in (phase, ia.RESOLVING):
            return                       # the activation moved on without us
        if self.role_crashed:
            if not self.role_crash_reported:
                self.role_crash_reported = True
                self._raise(hx.CRASHED_ROLE)
            return
        if self.coord.config.executor == "threads":
            self.coord.threaded.run(f"{self.record.activation_id}.{self.role}",
                                    self._execute_one)
        else:
            self._execute_one()

    def _execute_one(self) -> None:
        step = self.queue.pop(0)
        if isinstance(step, ia.StateTransition):
            self._do_transition(step)
        elif isinstance(step, ia.AssertStep):
            self._do_assert(step)
        elif isinstance(step, ia.RaiseException):
            self._raise(step.exception)
            return
        elif isinstance(step, ia.SignalOutcome):
            self.signalled = step.outcome
            self.queue = []
            self._finish_body()
            return
        elif isinstance(step, ia.Conditional):
            branch = step.then_steps if step.predicate.eval(
                self.coord.working_state(self.group), self.record.binding) \
                else step.else_steps
            self.queue = list(branch) + self.queue
            self._schedule_step()
            return
        elif isinstance(step, ia.StartNested):
            self._do_nested(step)
            return
        else:
            raise TypeError(f"unknown step {step!r}")
        if self.running and self.raised is None:
            self._schedule_step()

    def _do_transition(self, step: ia.StateTransition) -> None:
        attached = step.attached
        if attached is not None:
            fault = self.coord.plan.injection(self.coord.scheduler.now,
                                              self.role_key, attached)
            if fault is not None:
                self.coord.log.emit(self.coord.scheduler.now, "FaultInjected",
                                    activation=self.record.activation_id,
                                    role=self.role, exception=attached)
                self._raise(attached)
                return
        obj_id = ia.resolve_path(step.path, self.record.binding)
        obj = self.coord.store[obj_id]
        group = step.group or self.coord.group_of(obj, step.state)
        obj.write(self.group.tokens[obj_id], group, step.state)

    def _do_assert(self, step: ia.AssertStep) -> None:
        ok = step.predicate.eval(self.coord.working_state(self.group),
                                 self.record.binding)
        if ok:
            return
        attached = step.attached
        if attached is None:
            if self.coord.config.strict_asserts:
                self.coord.halt(f"assert failed in {self.role_key}")
                return
            attached = hx.POST_CONDITION
        self._raise(attached)

    def _do_nested(self, step: ia.StartNested) -> None:
        try:
            child = self.coord.begin_activation(step.definition, step.participants,
                                                depth=self.record.depth + 1)
        except GuardFalse:
            self._raise(hx.PRE_CONDITION)
            return
        except (ParticipantBusy, NestingLimitExceeded):
            self._raise(hx.FAILURE)
            return

        def resume():
            out = child.outcome
            if out.kind == ia.NORMAL:
                self._schedule_step()
            elif out.kind == ia.EXCEPTIONAL:
                self._raise(out.exception)
            elif out.kind == ia.ABORT:
                self._raise(hx.ABORT)
            else:
                self._raise(hx.FAILURE)

        self.coord.on_done(child, resume)

    def _finish_body(self) -> None:
        self.running = False
        vote = self.signalled or ia.Outcome.normal()
        phase, _ = self.body_phase
        if phase == ia.RUNNING_NORMAL and vote.kind == ia.EXCEPTIONAL:
            # exceptional termination of a normal body routes through
            # resolution and handling; only handlers signal outward
            self._raise(vote.exception)
            return
        self.vote = vote
        self.to_leader(tp.OUTCOME_VOTE, role=self.role, outcome=str(vote))

    def _raise(self, exception: str) -> None:
        if self.raised is not None:
            return                               # one raise per role per phase
        self.raised = exception
        self._stop_body()
        self.to_leader(tp.EXCEPTION_NOTICE, role=self.role, exception=exception)

    # -- reactions --------------------------------------------------------------------

    def _on_interrupt(self) -> None:
        if self.raised is not None or self.vote is not None:
            return
        self._stop_body()
        self.interrupted = True
        self.to_leader(tp.INTERRUPTED, role=self.role)

    def _on_resolved(self, exception: str) -> None:
        _, table = self.record.definition.handler_for(exception)
        steps = table.get(self.role, ()) if table else ()
        self._start_body((ia.RUNNING_HANDLER, exception), steps)

    def _on_commit(self, outcome: ia.Outcome) -> None:
        self.observed = outcome
        self.record.role_outcomes[self.role] = outcome
        self._stop_body()

    def _on_leader_is(self, leader: int) -> None:
        self.group.leader_ordinal = leader
        self.is_leader = leader == self.ordinal
        if self.is_leader:
            return
        self.detector.watch(leader, self.coord.scheduler.now)
        # replay protocol state so the new leader can re-derive decisions
        self.to_leader(tp.REGISTER, role=self.role)
        if self.arrived or self.vote or self.raised or self.interrupted:
            self.to_leader(tp.ARRIVED, role=self.role)
        if self.raised is not None:
            self.to_leader(tp.EXCEPTION_NOTICE, role=self.role, exception=self.raised)
        if self.interrupted:
            self.to_leader(tp.INTERRUPTED, role=self.role)
        if self.vote is not None:
            self.to_leader(tp.OUTCOME_VOTE, role=self.role, outcome=str(self.vote))

    # -- heartbeats ---------------------------------------------------------------------

    def _schedule_heartbeat(self) -> None:
        self.coord.scheduler.after(self.coord.config.heartbeat_period,
                                   self._heartbeat_event)

    def _heartbeat_event(self) -> None:
        if self.crashed or self.record.done:
            return
        now = self.coord.scheduler.now
        if self.is_leader:
            for m in self.group.managers.values():
                if m.ordinal != self.ordinal:
                    self.send(tp.HEARTBEAT, m.ordinal)
            for dead in self.detector.check(now):
                self.group.member_crashed(self, dead)
        else:
            self.to_leader(tp.HEARTBEAT)
            if self.group.leader_ordinal in self.detector.check(now):
                survivors = {m.ordinal for m in self.group.managers.values()
                             if m.ordinal not in self.detector.declared
                             and not m.crashed}
                survivors.discard(self.group.leader_ordinal)
                if survivors:
                    winner = elect_leader(survivors)
                    if winner == self.ordinal:
                        self.group.become_leader(self)
                    else:
                        self.send(tp.ELECT_LEADER, winner, candidate=winner)
        self._schedule_heartbeat()


class ActivationGroup:
    """Leader-side protocol state plus the shared per-activation plumbing."""

    def __init__(self, coord: "Coordinator", record: ia.ActivationRecord,
                 tokens: dict, first_ordinal: int):
        self.coord = coord
        self.record = record
        self.tokens = tokens
        self.leader_ordinal = first_ordinal
        self.managers: dict[int, Manager] = {}
        self.by_role: dict[str, int] = {}
        self.shared: list[SharedObject] = []
        self.heartbeats_on = coord.heartbeats_enabled
        self.on_done: list[Callable[[], None]] = []
        self.start_time = coord.scheduler.now
        # leader working sets, rebuilt by any newly elected leader
        self.membership: dict[str, int] = {}
        self.arrived: set[str] = set()
        self.notices: dict[str, str] = {}
        self.acked: set[str] = set()
        self.votes: dict[str, ia.Outcome] = {}
        self.collecting = False
        self.collection_phase: str | None = None
        self.released = False
        self._entry_handle = None
        self._stall_handle = None
        self.elections = 0

    # -- setup ------------------------------------------------------------------

    def spawn_managers(self) -> None:
        rec = self.record
        for i, (role, cls) in enumerate(rec.definition.roles):
            ordinal = self.leader_ordinal + i
            m = Manager(self, ordinal, role, cls)
            self.managers[ordinal] = m
            self.by_role[role] = ordinal
            self.coord.transport.register(ordinal, m.on_message, m.role_key)
        for m in self.managers.values():
            for fault in self.coord.due_crashes(m):
                self.coord.apply_crash(self, m, fault)
        for m in self.managers.values():
            m.start()
        self._entry_handle = self.coord.scheduler.after(
            self.coord.config.entry_timeout, self._entry_deadline)

    def leader(self) -> Manager:
        return self.managers[self.leader_ordinal]

    def live_roles(self) -> list[str]:
        dead = self.leader().detector.declared
        return [r for r, o in self.by_role.items() if o not in dead]

    # -- leader message handling ---------------------------------------------------

    def leader_message(self, leader: Manager, msg: tp.Message) -> None:
        kind = msg.kind
        role = str(msg.payload.get("role", ""))
        if kind == tp.REGISTER:
            if role in self.membership and self.membership[role] != msg.sender:
                raise DuplicateRegistration(role)
            self.membership[role] = msg.sender
        elif kind == tp.ARRIVED:
            self.arrived.add(role)
            self._check_barrier()
        elif kind == tp.EXCEPTION_NOTICE:
            self._on_notice(role, str(msg.payload["exception"]))
        elif kind == tp.INTERRUPTED:
            if role not in self.acked:
                self.acked.add(role)
                self.coord.log.emit(self.coord.scheduler.now, "RoleInterrupted",
                                    activation=self.record.activation_id, role=role)
            self._check_collection()
        elif kind == tp.OUTCOME_VOTE:
            self.votes[role] = ia.Outcome.parse(str(msg.payload["outcome"]))
            self._progress()
            if self.collecting:
                self._check_collection()
            else:
                self._check_votes()

    # -- entry barrier -------------------------------------------------------------

    def _check_barrier(self) -> None:
        if self.released or self.record.phase != ia.ENTRY:
            return
        if set(self.live_roles()) <= self.arrived:
            self.released = True
            if self._entry_handle:
                self._entry_handle.cancel()
            rec = self.record
            rec.move(self.coord.scheduler.now, ia.RUNNING_NORMAL)
            rec.entered_at = self.coord.scheduler.now
            binding = ",".join(f"{r}:{o}" for r, o in sorted(rec.binding.items()))
            self.coord.log.emit(self.coord.scheduler.now, "ActionEntered",
                                activation=rec.activation_id,
                                interaction=rec.interaction,
                                participants=binding)
            self._broadcast(tp.BARRIER_RELEASE)
            self._progress()

    def _entry_deadline(self) -> None:
        if self.released or self.record.done or self.leader().crashed:
            return
        missing = [r for r in self.live_roles() if r not in self.arrived]
        if not missing:
            return
        for role in missing:
            self.leader().detector.declared.add(self.by_role[role])
            self._on_notice(role, hx.CRASHED_ROLE)

    # -- exception collection ---------------------------------------------------------

    def _on_notice(self, role: str, exception: str) -> None:
        rec = self.record
        if rec.done:
            return
        self.coord.log.emit(self.coord.scheduler.now, "ExceptionRaised",
                            activation=rec.activation_id, role=role or None,
                            exception=exception)
        rec.raised[role] = exception
        self.notices[role] = exception
        self._progress()
        if exception == hx.FAILURE:
            self.finalize(ia.Outcome.failure(), commit=True)
            return
        if exception == hx.ABORT:
            self._roll_back()
            return
        if not self.collecting:
            self.collecting = True
            self.collection_phase = rec.phase if rec.phase != ia.RESOLVING \
                else self.collection_phase
            if rec.phase in (ia.ENTRY, ia.RUNNING_NORMAL, ia.RUNNING_HANDLER):
                self.collection_phase = rec.phase
                rec.move(self.coord.scheduler.now, ia.RESOLVING)
            for r in self.live_roles():
                if r not in self.notices and r not in self.votes:
                    self.leader().send(tp.INTERRUPT, self.by_role[r], role=r)
        self._check_collection()

    def _check_collection(self) -> None:
        if not self.collecting or self.record.done:
            return
        for r in self.live_roles():
            if r not in self.notices and r not in self.acked and r not in self.votes:
                return
        self.collecting = False
        raised = set(self.notices.values())
        if self.acked:
            raised.add(hx.INTERRUPTED)
            for r in self.acked:
                self.record.interrupted.append(r)
        self.notices.clear()
        self.acked.clear()
        self.votes.clear()
        if self.collection_phase == ia.RUNNING_HANDLER:
            # a raise during recovery can only abort (or fail) the action
            self._roll_back()
            return
        resolved = self.coord.resolution_hook(sorted(raised),
                                              self.record.definition.hierarchy)
        self.record.definition.hierarchy.require(resolved)
        self.record.resolutions.append(resolved)
        self.coord.log.emit(self.coord.scheduler.now, "Resolved",
                            activation=self.record.activation_id,
                            exception=resolved)
        if resolved == hx.FAILURE:
            self.finalize(ia.Outcome.failure(), commit=True)
            return
        if resolved == hx.ABORT:
            self._roll_back()
            return
        key, table = self.record.definition.handler_for(resolved)
        if table is None:
            self._roll_back()
            return
        self.record.move(self.coord.scheduler.now, ia.RUNNING_HANDLER,
                         handler=resolved)
        self.coord.log.emit(self.coord.scheduler.now, "HandlerStarted",
                            activation=self.record.activation_id,
                            exception=resolved)
        self._broadcast(tp.RESOLVED, exception=resolved)
        self._progress()

    # -- exit barrier ---------------------------------------------------------------------

    def _check_votes(self) -> None:
        rec = self.record
        if rec.done or rec.phase not in (ia.RUNNING_NORMAL, ia.RUNNING_HANDLER):
            return
        live = self.live_roles()
        if not all(r in self.votes for r in live):
            return
        votes = [self.votes[r] for r in live]
        if any(v.kind == ia.FAILURE for v in votes):
            self.finalize(ia.Outcome.failure(), commit=True)
            return
        if any(v.kind == ia.ABORT for v in votes):
            self._roll_back()
            return
        if len({str(v) for v in votes}) != 1:
            self._roll_back()                      # outcome disagreement
            return
        agreed = votes[0]
        if agreed.kind == ia.NORMAL and rec.phase == ia.RUNNING_NORMAL:
            post = rec.definition.post
            if post is not None and not ia.evaluate_post(
                    rec.definition, self.coord.working_state(self), rec.binding):
                attached = post[1]
                if attached is None:
                    if self.coord.config.strict_asserts:
                        self.coord.halt(f"post-condition failed in {rec.interaction}")
                        return
                    attached = hx.POST_CONDITION
                # a failed post-condition raises its exception in every role
                self.votes.clear()
                for role in live:
                    self._on_notice(role, attached)
                return
        self.finalize(ia.Outcome(agreed.kind, agreed.exception), commit=True)

    # -- rollback and finalization ------------------------------------------------------------

    def _roll_back(self) -> None:
        rec = self.record
        if rec.done:
            return
        rec.move(self.coord.scheduler.now, ia.ROLLING_BACK)
        self._broadcast(tp.ROLL_BACK)
        for obj_id in self.tokens:
            fault = self.coord.plan.rollback_failure(obj_id)
            if fault is not None:
                self.coord.store[obj_id].fail_next_rollback = True
                self.coord.log.emit(self.coord.scheduler.now, "FaultInjected",
                                    activation=rec.activation_id, object=obj_id,
                                    exception="RollbackFailure")
        failed = self.coord.store.rollback_all(list(self.tokens.values()))
        self.tokens.clear()
        if failed:
            self.finalize(ia.Outcome.failure(), commit=False)
        else:
            self.finalize(ia.Outcome.abort(), commit=False)

    def finalize(self, outcome: ia.Outcome, commit: bool) -> None:
        rec = self.record
        if rec.done:
            return
        now = self.coord.scheduler.now
        if commit and self.tokens:
            deltas = self.coord.store.commit_all(list(self.tokens.values()))
            for obj_id in sorted(deltas):
                for grp in sorted(deltas[obj_id]):
                    _, new = deltas[obj_id][grp]
                    self.coord.log.emit(now, "StateChanged",
                                        activation=rec.activation_id,
                                        object=obj_id, group=grp, state=new)
            self.tokens.clear()
        rec.move(now, ia.DONE, outcome=outcome)
        self.coord.log.emit(now, "Outcome", activation=rec.activation_id,
                            interaction=rec.interaction, outcome=str(outcome))
        if self._entry_handle:
            self._entry_handle.cancel()
        if self._stall_handle:
            self._stall_handle.cancel()
        self._broadcast(tp.COMMIT, outcome=str(outcome))
        for sh in self.shared:
            sh.retire()
        for cb in self.on_done:
            self.coord.scheduler.after(0, cb)
        self.on_done = []

    # -- crash handling ---------------------------------------------------------------------

    def member_crashed(self, leader: Manager, ordinal: int) -> None:
        role = next((r for r, o in self.by_role.items() if o == ordinal), None)
        if role is None or self.record.done:
            return
        if role not in self.notices:
            self._on_notice(role, hx.CRASHED_MANAGER)

    def become_leader(self, m: Manager) -> None:
        if m.crashed or self.record.done or self.leader_ordinal == m.ordinal:
            return
        self.elections += 1
        m.detector.declared.add(self.leader_ordinal)
        self.leader_ordinal = m.ordinal
        m.is_leader = True
        self.coord.log.emit(self.coord.scheduler.now, "LeaderElected",
                            activation=self.record.activation_id,
                            leader=m.ordinal)
        # working sets are rebuilt from the members' replayed state
        self.membership = {m.role: m.ordinal}
        self.arrived = {m.role} if m.arrived or self.released else set()
        self.notices = dict()
        self.acked = set()
        self.votes = {}
        self.collecting = self.record.phase == ia.RESOLVING
        if self.collecting:
            self.collection_phase = self.collection_phase or ia.RUNNING_NORMAL
        if m.raised is not None:
            self.notices[m.role] = m.raised
        if m.interrupted:
            self.acked.add(m.role)
        if m.vote is not None:
            self.votes[m.role] = m.vote
        now = self.coord.scheduler.now
        for peer in self.managers.values():
            if peer.ordinal != m.ordinal and peer.ordinal not in m.detector.declared:
                m.detector.watch(peer.ordinal, now)
        self._broadcast(tp.LEADER_IS)
        if not self.released:
            if self._entry_handle:
                self._entry_handle.cancel()
            self._entry_handle = self.coord.scheduler.after(
                self.coord.config.entry_timeout, self._entry_deadline)
        self._progress()

    # -- stall detection -----------------------------------------------------------------------

    def _progress(self) -> None:
        """Re-arm the leader's stall deadline; expiry declares laggards crashed."""
        if self._stall_handle:
            self._stall_handle.cancel()
        wait = self.coord.config.stall_timeout + self.max_body_ticks()
        self._stall_handle = self.coord.scheduler.after(wait, self._stalled)

    def _stalled(self) -> None:
        rec = self.record
        if rec.done or self.leader().crashed:
            return
        pending = [r for r in self.live_roles()
                   if r not in self.votes and r not in self.notices
                   and r not in self.acked]
        if not pending:
            return
        for role in pending:
            self.leader().detector.declared.add(self.by_role[role])
            self._on_notice(role, hx.CRASHED_ROLE)
        self._check_collection()
        if not self.collecting:
            self._check_votes()

    def max_body_ticks(self) -> int:
        total = 0
        for role, _ in self.record.definition.roles:
            m = self.managers.get(self.by_role.get(role, -1))
            cost = self.coord.step_cost_for(m) if m else self.coord.config.step_cost
            n = len(self.record.definition.body_for(role))
            for table in self.record.definition.handlers.values():
                n = max(n, len(table.get(role, ())))
            nested = any(isinstance(s, ia.StartNested)
                         for s in self.record.definition.body_for(role))
            total = max(total, n * cost + (self.coord.config.nested_allowance
                                           if nested else 0))
        return total

    def _broadcast(self, kind: str, **payload) -> None:
        leader = self.leader()
        for ordinal in self.managers:
            leader.send(kind, ordinal, **payload)


class Coordinator:
    """Owns the scheduler, transport, store, log, and all activations."""

    def __init__(self, store: ObjectStore | None = None,
                 config: RunConfig | None = None,
                 plan: FaultPlan | None = None,
                 hierarchy: hx.ExceptionHierarchy | None = None,
                 log: EventLog | None = None,
                 resolution_hook: Callable | None = None):
        self.config = config or RunConfig()
        self.store = store or ObjectStore()
        self.plan = plan or FaultPlan()
        self.hierarchy = hierarchy or hx.build_hierarchy()
        if log is None:
            declared = [(c, p) for c, p in self.hierarchy.edges()
                        if c not in hx.RESERVED or p != hx.ROOT]
            log = EventLog(header=[f"hierarchy child={c} parent={p}"
                                   for c, p in declared])
        self.log = log
        self.scheduler = Scheduler()
        self.rng = random.Random(self.config.seed)
        self.transport = SimTransport(self.scheduler, rng=self.rng,
                                      base_delay=self.config.base_delay,
                                      jitter=self.config.jitter,
                                      plan=self.plan,
                                      keep_trace=self.config.keep_trace)
        self.resolution_hook = resolution_hook or \
            (lambda raised, h: hx.resolve(set(raised), h))
        self.heartbeats_enabled = (self.config.heartbeats
                                   if self.config.heartbeats is not None
                                   else self.plan.has_crashes())
        self.threaded = _ThreadedSteps()
        self.groups: dict[int, ActivationGroup] = {}
        self._next_activation = 0
        self._next_ordinal = 0
        self._halted: str | None = None

    # -- configuration helpers -------------------------------------------------------

    def step_cost_for(self, m: Manager) -> int:
        costs = self.config.step_costs
        return costs.get(m.role_key, costs.get(m.participant_class,
                                               self.config.step_cost))

    def group_of(self, obj, state: str) -> str:
        for group, states in obj.groups.items():
            if state in states:
                return group
        return state                       # groupless objects: key by state name

    def working_state(self, group: ActivationGroup) -> ia.SystemState:
        view = {}
        for obj_id in group.record.external_ids:
            view[obj_id] = self.store[obj_id].working_view()
        return view

    def halt(self, reason: str) -> None:
        self._halted = reason

    # -- activation lifecycle ---------------------------------------------------------

    def begin_activation(self, definition: ia.InteractionDef,
                         participants: dict[str, str],
                         externals: list[str] | None = None,
                         depth: int = 0) -> ia.ActivationRecord:
        if depth > self.config.max_nesting:
            raise NestingLimitExceeded(definition.name)
        missing = [r for r in definition.role_names() if r not in participants]
        if missing:
            raise GuardFalse(f"unbound roles {missing}")
        targets = set(participants.values())
        if len(targets) != len(participants):
            raise ParticipantBusy("participants must be distinct")
        object_ids: list[str] = []
        for obj in sorted(targets | set(externals or [])):
            for oid in self.store.with_components(obj):
                if oid not in object_ids:
                    object_ids.append(oid)

        activation_id = self._next_activation
        tokens = {}
        try:
            for oid in object_ids:
                tokens[oid] = self.store[oid].try_acquire(activation_id)
        except ParticipantBusy:
            self.store.rollback_all(list(tokens.values()))
            raise
        self._next_activation += 1

        entry = {oid: self.store[oid].entry_view() for oid in object_ids}
        if not ia.evaluate_guard(definition, entry, participants):
            self.store.rollback_all(list(tokens.values()))
            self._next_activation -= 1
            raise GuardFalse(definition.name)

        record = ia.ActivationRecord(definition=definition,
                                     activation_id=activation_id,
                                     binding=dict(participants),
                                     external_ids=object_ids,
                                     depth=depth)
        record._coordinator = self
        first = self._next_ordinal
        self._next_ordinal += len(definition.roles)
        group = ActivationGroup(self, record, tokens, first)
        self.groups[activation_id] = group
        group.spawn_managers()
        return record

    def run_activation(self, record: ia.ActivationRecord) -> ia.Outcome:
        bound = self.scheduler.now + self.tick_bound(record)
        self.scheduler.run(until=lambda: record.done or self._halted is not None,
                           max_time=bound)
        if self._halted is not None:
            reason, self._halted = self._halted, None
            raise StrictAssertStop(reason)
        if not record.done:
            group = self.groups[record.activation_id]
            if all(m.crashed for m in group.managers.values()):
                # nobody left to decide: the harness records the failure
                record.outcome = ia.Outcome.failure()
                record.phase_history.append((self.scheduler.now, ia.DONE))
                record.phase = ia.DONE
                self.log.emit(self.scheduler.now, "Outcome",
                              activation=record.activation_id,
                              interaction=record.interaction,
                              outcome=str(ia.Outcome.failure()))
                self.store.rollback_all(list(group.tokens.values()))
                group.tokens.clear()
            else:
                raise RuntimeError(
                    f"activation {record.activation_id} exceeded its tick bound")
        else:
            # let the outcome broadcast reach every surviving manager
            group = self.groups[record.activation_id]
            self.scheduler.run(
                until=lambda: all(m.observed is not None or m.crashed
                                  for m in group.managers.values()),
                max_time=self.scheduler.now + 20 * self.config.base_delay
                + len(group.managers) + 2)
        return record.outcome

    def tick_bound(self, record: ia.ActivationRecord) -> int:
        c = self.config
        group = self.groups.get(record.activation_id)
        body = group.max_body_ticks() if group else 100
        n = len(record.definition.roles)
        hb = c.heartbeat_period * c.heartbeat_tolerance
        return (c.entry_timeout + 3 * (body + c.stall_timeout) + 4 * hb
                + 10 * c.base_delay * (n + 2) + c.tick_slack)

    def raise_in_role(self, record: ia.ActivationRecord, role: str,
                      exception: str) -> None:
        if record.phase not in (ia.RUNNING_NORMAL, ia.RUNNING_HANDLER, ia.RESOLVING):
            raise PhaseViolation(f"{record.phase} permits no raises")
        group = self.groups[record.activation_id]
        manager = group.managers[group.by_role[role]]
        if manager.raised is not None:
            raise DuplicateRaise(f"{role} already raised {manager.raised}")
        record.definition.hierarchy.require(exception)
        manager._raise(exception)

    def on_done(self, record: ia.ActivationRecord, callback: Callable[[], None]) -> None:
        group = self.groups[record.activation_id]
        if record.done:
            self.scheduler.after(0, callback)
        else:
            group.on_done.append(callback)

    # -- shared objects ----------------------------------------------------------------

    def create_shared(self, record: ia.ActivationRecord, object_id: str) -> SharedObject:
        sh = SharedObject(object_id, record.activation_id)
        self.groups[record.activation_id].shared.append(sh)
        return sh

    # -- fault plumbing ----------------------------------------------------------------

    def due_crashes(self, m: Manager):
        out = []
        for r in self.plan.records:
            if r.kind != "crash" or r.fired:
                continue
            if r.target_scope in ("manager", "role") and r.target_name == m.role_key:
                out.append(r)
        return out

    def apply_crash(self, group: ActivationGroup, m: Manager, fault) -> None:
        def fire():
            if fault.fired or group.record.done:
                return
            fault.fired = True
            self.log.emit(self.scheduler.now, "FaultInjected",
                          activation=group.record.activation_id,
                          role=m.role, fault=f"crash:{fault.target}")
            if fault.target_scope == "manager":
                m.crashed = True
                self.transport.crash(m.ordinal)
            else:
                m.role_crashed = True
        self.scheduler.at(fault.at, fire)
