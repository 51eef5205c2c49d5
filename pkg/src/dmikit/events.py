"""Event records, the append-only event log, and log replay.

One record per line, fixed field order, whitespace-free values. The format is
deliberately diffable: determinism tests compare whole logs byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# Canonical payload field order (after seq/t/kind). Never reorder: logs are
# compared byte-identically across runs.
_FIELD_ORDER = (
    "activation", "interaction", "role", "exception", "object", "group",
    "state", "outcome", "leader", "fault", "participants", "detail",
)

KINDS = frozenset({
    "ActionEntered", "ExceptionRaised", "RoleInterrupted", "Resolved",
    "HandlerStarted", "Outcome", "StateChanged", "FaultInjected",
    "LeaderElected", "Heartbeat",
})


@dataclass(frozen=True)
class EventRecord:
    seq: int
    t: int
    kind: str
    payload: dict[str, str | int]

    def line(self) -> str:
        parts = [f"seq={self.seq}", f"t={self.t}", f"kind={self.kind}"]
        for key in _FIELD_ORDER:
            if key in self.payload:
                parts.append(f"{key}={self.payload[key]}")
        return " ".join(parts)


def parse_line(line: str) -> EventRecord:
    fields: dict[str, str] = {}
    for part in line.split():
        key, _, value = part.partition("=")
        fields[key] = value
    seq = int(fields.pop("seq"))
    t = int(fields.pop("t"))
    kind = fields.pop("kind")
    return EventRecord(seq=seq, t=t, kind=kind, payload=fields)


class EventLog:
    """Append-only sequence of EventRecords with strictly increasing seq.

    Header lines (the declared exception hierarchy, for one) are written
    as ``#`` comments ahead of the records and ignored by the reader."""

    def __init__(self, header: list[str] | None = None):
        self.header = list(header or [])
        self.records: list[EventRecord] = []

    def emit(self, t: int, kind: str, **payload) -> EventRecord:
        assert kind in KINDS, kind
        rec = EventRecord(seq=len(self.records), t=t, kind=kind,
                          payload={k: v for k, v in payload.items() if v is not None})
        self.records.append(rec)
        return rec

    def since(self, seq: int) -> list[EventRecord]:
        return self.records[seq:]

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]

    def dump(self) -> str:
        out = [f"# {line}" for line in self.header] + self.lines()
        return "\n".join(out) + ("\n" if out else "")

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dump())

    def kinds(self) -> list[str]:
        return [r.kind for r in self.records]


def load_log(path) -> list[EventRecord]:
    with open(path, encoding="utf-8") as fh:
        return [parse_line(line) for line in fh
                if line.strip() and not line.startswith("#")]


def replay_states(records: list[EventRecord],
                  initial: dict[str, dict[str, str]] | None = None) -> dict[str, dict[str, str]]:
    """Fold StateChanged records over an initial valuation.

    Feeding a full recorded log reproduces the final committed system state;
    state changes are only ever logged at commit time, so replay cannot
    observe intermediate working states.
    """
    state: dict[str, dict[str, str]] = {
        obj: dict(groups) for obj, groups in (initial or {}).items()
    }
    for rec in records:
        if rec.kind != "StateChanged":
            continue
        obj = str(rec.payload["object"])
        state.setdefault(obj, {})[str(rec.payload["group"])] = str(rec.payload["state"])
    return state


@dataclass
class TraceCursor:
    """Incremental reader over a shared log, one per stream consumer."""

    log: EventLog
    seq: int = 0
    _batch: list[EventRecord] = field(default_factory=list, repr=False)

    def poll(self) -> list[EventRecord]:
        fresh = self.log.since(self.seq)
        self.seq += len(fresh)
        return fresh
