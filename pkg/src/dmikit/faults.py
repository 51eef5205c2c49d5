"""Fault plans: scheduled crashes, message drops/delays, and exception injection.

A plan is a structured-text document, one fault per line:

    at=5  kind=crash   target=manager:LoadTable.t
    at=0  kind=crash   target=role:LoadTable.fb
    at=0  kind=drop    target=role:LoadTable.tf1 match=Arrived
    at=0  kind=delay   target=role:LoadTable.tf1 match=Resolved duration=10
    at=0  kind=inject  target=role:LoadTable.t   exception=Table.angle
    at=9  kind=inject  target=object:t           exception=RollbackFailure

Targets name a role (``role:<interaction>.<role>``), the manager of a role
(``manager:<interaction>.<role>``), or an object path (``object:<path>``).
Drop, delay, and inject faults are one-shot: each record fires at most once,
on the first match at or after its scheduled tick. Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CRASH = "crash"
DROP = "drop"
DELAY = "delay"
INJECT = "inject"

_KINDS = (CRASH, DROP, DELAY, INJECT)


@dataclass
class FaultRecord:
    at: int
    kind: str
    target: str                 # role:<i>.<r> | manager:<i>.<r> | object:<path>
    match: str | None = None    # message kind, for drop/delay
    duration: int = 0           # extra ticks, for delay
    exception: str | None = None
    fired: bool = False

    def __post_init__(self):
        if self.at < 0:
            raise ValueError(f"negative fault time {self.at}")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.kind in (DROP, DELAY) and not self.match:
            raise ValueError(f"{self.kind} fault needs match=<message kind>")
        if self.kind == INJECT and not self.exception:
            raise ValueError("inject fault needs exception=<id>")

    @property
    def target_scope(self) -> str:
        return self.target.partition(":")[0]

    @property
    def target_name(self) -> str:
        return self.target.partition(":")[2]

    def line(self) -> str:
        parts = [f"at={self.at}", f"kind={self.kind}", f"target={self.target}"]
        if self.match:
            parts.append(f"match={self.match}")
        if self.kind == DELAY:
            parts.append(f"duration={self.duration}")
        if self.exception:
            parts.append(f"exception={self.exception}")
        return " ".join(parts)


@dataclass
class FaultPlan:
    records: list[FaultRecord] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def add(self, record: FaultRecord) -> None:
        self.records.append(record)

    def has_crashes(self) -> bool:
        return any(r.kind == CRASH for r in self.records)

    def crashes_due(self, now: int) -> list[FaultRecord]:
        due = [r for r in self.records
               if r.kind == CRASH and not r.fired and r.at <= now]
        for r in due:
            r.fired = True
        return due

    def message_fault(self, now: int, kind: str,
                      sender_key: str | None,
                      receiver_key: str | None) -> FaultRecord | None:
        """First unfired drop/delay matching this message.

        A role target matches when either endpoint is that role's manager;
        drops of outbound barrier messages and delays of inbound broadcasts
        are both expressible this way."""
        for r in self.records:
            if r.fired or r.kind not in (DROP, DELAY) or r.at > now:
                continue
            if r.match != kind:
                continue
            if (r.target_scope in ("role", "manager")
                    and r.target_name not in (sender_key, receiver_key)):
                continue
            r.fired = True
            return r
        return None

    def injection(self, now: int, role_key: str, exception: str) -> FaultRecord | None:
        """Unfired injection armed for this role and attached exception."""
        for r in self.records:
            if r.fired or r.kind != INJECT or r.at > now:
                continue
            if r.target_scope != "role" or r.target_name != role_key:
                continue
            if r.exception != exception:
                continue
            r.fired = True
            return r
        return None

    def rollback_failure(self, object_id: str) -> FaultRecord | None:
        for r in self.records:
            if (not r.fired and r.kind == INJECT and r.target_scope == "object"
                    and r.target_name == object_id and r.exception == "RollbackFailure"):
                r.fired = True
                return r
        return None

    def dump(self) -> str:
        return "\n".join(r.line() for r in self.records) + ("\n" if self.records else "")


def parse_fault_line(line: str) -> FaultRecord:
    fields: dict[str, str] = {}
    for part in line.split():
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"bad fault field {part!r}")
        fields[key] = value
    return FaultRecord(
        at=int(fields.pop("at", "0")),
        kind=fields.pop("kind"),
        target=fields.pop("target"),
        match=fields.pop("match", None),
        duration=int(fields.pop("duration", "0")),
        exception=fields.pop("exception", None),
    )


def parse_fault_plan(text: str) -> FaultPlan:
    plan = FaultPlan()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        plan.add(parse_fault_line(line))
    return plan


def load_fault_plan(path) -> FaultPlan:
    with open(path, encoding="utf-8") as fh:
        return parse_fault_plan(fh.read())
