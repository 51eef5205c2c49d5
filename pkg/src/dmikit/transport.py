"""Simulated message transport between managers.

Delivery is FIFO per sender-receiver pair and serialized per receiver (a
receiver handles at most one message per tick), so barrier and resolution
rounds scale with participant count the way a real coordinator would.
Delivery order is a pure function of (seed, fault plan); drops are silent.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .faults import DELAY, FaultPlan
from .sim import Scheduler

# Protocol message kinds. BarrierRelease is the leader's entry-release signal;
# managers cannot observe "all arrived" without it.
REGISTER = "Register"
ARRIVED = "Arrived"
BARRIER_RELEASE = "BarrierRelease"
EXCEPTION_NOTICE = "ExceptionNotice"
INTERRUPT = "Interrupt"
INTERRUPTED = "Interrupted"
RESOLVED = "Resolved"
OUTCOME_VOTE = "OutcomeVote"
COMMIT = "Commit"
ROLL_BACK = "RollBack"
HEARTBEAT = "Heartbeat"
ELECT_LEADER = "ElectLeader"
LEADER_IS = "LeaderIs"


@dataclass(frozen=True)
class Message:
    kind: str
    sender: int
    receiver: int
    activation_id: int
    seq: int                      # strictly increasing per sender
    payload: dict = field(default_factory=dict, compare=False)

    def describe(self) -> str:
        extra = " ".join(f"{k}={v}" for k, v in sorted(self.payload.items()))
        return (f"{self.kind} {self.sender}->{self.receiver} "
                f"act={self.activation_id}" + (f" {extra}" if extra else ""))


class SimTransport:
    def __init__(self, scheduler: Scheduler, rng: random.Random | None = None,
                 base_delay: int = 1, jitter: int = 0,
                 plan: FaultPlan | None = None, keep_trace: bool = True):
        self.scheduler = scheduler
        self.rng = rng or random.Random(0)
        self.base_delay = base_delay
        self.jitter = jitter
        self.plan = plan or FaultPlan()
        self.keep_trace = keep_trace
        self.trace: list[tuple[int, str, Message]] = []
        self._handlers: dict[int, Callable[[Message], None]] = {}
        self._role_keys: dict[int, str] = {}
        self._crashed: set[int] = set()
        self._send_seq: dict[int, int] = {}
        self._pair_last: dict[tuple[int, int], int] = {}
        self._busy_until: dict[int, int] = {}
        self.delivered: list[Message] = []

    # -- endpoint management ---------------------------------------------

    def register(self, manager_id: int, handler: Callable[[Message], None],
                 role_key: str | None = None) -> None:
        self._handlers[manager_id] = handler
        if role_key:
            self._role_keys[manager_id] = role_key

    def crash(self, manager_id: int) -> None:
        self._crashed.add(manager_id)

    def is_crashed(self, manager_id: int) -> bool:
        return manager_id in self._crashed

    # -- sending ------------------------------------------------------------

    def send(self, kind: str, sender: int, receiver: int, activation_id: int,
             **payload) -> Message | None:
        if sender in self._crashed:
            return None
        seq = self._send_seq.get(sender, 0)
        self._send_seq[sender] = seq + 1
        msg = Message(kind=kind, sender=sender, receiver=receiver,
                      activation_id=activation_id, seq=seq, payload=payload)
        self._trace("send", msg)

        fault = self.plan.message_fault(
            self.scheduler.now, kind,
            self._role_keys.get(sender), self._role_keys.get(receiver))
        if fault is not None and fault.kind != DELAY:
            self._trace("drop", msg)
            return msg
        extra = fault.duration if fault is not None else 0

        delay = self.base_delay + extra
        if self.jitter:
            delay += self.rng.randrange(self.jitter + 1)
        t = self.scheduler.now + max(delay, 1)
        t = max(t, self._pair_last.get((sender, receiver), 0))
        t = max(t, self._busy_until.get(receiver, 0) + 1)
        self._pair_last[(sender, receiver)] = t
        self._busy_until[receiver] = t
        self.scheduler.at(t, lambda: self._deliver(msg))
        return msg

    def broadcast(self, kind: str, sender: int, receivers, activation_id: int,
                  **payload) -> None:
        for r in receivers:
            self.send(kind, sender, r, activation_id, **payload)

    def _deliver(self, msg: Message) -> None:
        if msg.receiver in self._crashed or msg.sender in self._crashed:
            return
        handler = self._handlers.get(msg.receiver)
        if handler is None:
            return
        self._trace("recv", msg)
        self.delivered.append(msg)
        handler(msg)

    def step(self, until_time: int) -> list[Message]:
        """Advance the clock, returning the messages delivered on the way."""
        mark = len(self.delivered)
        self.scheduler.run_until_time(until_time)
        return self.delivered[mark:]

    def _trace(self, verb: str, msg: Message) -> None:
        if self.keep_trace:
            self.trace.append((self.scheduler.now, verb, msg))

    def trace_lines(self) -> list[str]:
        return [f"t={t} {verb} {msg.describe()}" for t, verb, msg in self.trace]


def elect_leader(surviving: set[int]) -> int:
    """Deterministic choice among survivors: the lowest ordinal wins."""
    from .errors import TotalCrash
    if not surviving:
        raise TotalCrash("no surviving managers")
    return min(surviving)
