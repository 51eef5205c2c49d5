"""Multi-role interaction definitions, predicates, body steps, and records.

An interaction has a fixed set of roles filled by variable participants,
one guard, one body per role, an optional post-condition, and a table of
handler interactions keyed by exception id. Execution is driven by a
coordinator (see ``coordination``); this module owns the data model and
the pure operations over it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import hierarchy as hx
from .errors import (
    HandlerForAbortOrFailure,
    MissingRoleBody,
    UnboundReference,
    UnknownException,
    UnknownExceptionInHandler,
)

# -- outcomes -------------------------------------------------------------------

NORMAL = "Normal"
EXCEPTIONAL = "Exceptional"
ABORT = "Abort"
FAILURE = "Failure"


@dataclass(frozen=True)
class Outcome:
    kind: str
    exception: str | None = None

    @staticmethod
    def normal() -> "Outcome":
        return Outcome(NORMAL)

    @staticmethod
    def exceptional(exception: str) -> "Outcome":
        assert exception not in (hx.ABORT, hx.FAILURE)
        return Outcome(EXCEPTIONAL, exception)

    @staticmethod
    def abort() -> "Outcome":
        return Outcome(ABORT)

    @staticmethod
    def failure() -> "Outcome":
        return Outcome(FAILURE)

    def __str__(self) -> str:
        if self.kind == EXCEPTIONAL:
            return f"{EXCEPTIONAL}:{self.exception}"
        return self.kind

    @staticmethod
    def parse(text: str) -> "Outcome":
        kind, _, exc = text.partition(":")
        return Outcome(kind, exc or None)


# -- predicates -------------------------------------------------------------------

SystemState = dict[str, dict[str, str]]     # object path -> group -> state


class Predicate:
    def eval(self, snapshot: SystemState, binding: dict[str, str]) -> bool:
        raise NotImplementedError

    def refs(self) -> list[tuple[tuple[str, ...], str]]:
        return []


@dataclass(frozen=True)
class TruePred(Predicate):
    def eval(self, snapshot, binding):
        return True


@dataclass(frozen=True)
class StateIs(Predicate):
    """``path`` names a participant (plus component fields); true iff some
    state group of that object currently holds ``state``."""

    path: tuple[str, ...]
    state: str
    group: str | None = None

    def eval(self, snapshot, binding):
        obj = resolve_path(self.path, binding)
        if obj not in snapshot:
            raise UnboundReference(obj)
        groups = snapshot[obj]
        if self.group is not None:
            if self.group not in groups:
                raise UnboundReference(f"{obj}.{self.group}")
            return groups[self.group] == self.state
        return self.state in groups.values()

    def refs(self):
        return [(self.path, self.state)]


@dataclass(frozen=True)
class Not(Predicate):
    inner: Predicate

    def eval(self, snapshot, binding):
        return not self.inner.eval(snapshot, binding)

    def refs(self):
        return self.inner.refs()


@dataclass(frozen=True)
class And(Predicate):
    terms: tuple[Predicate, ...]

    def eval(self, snapshot, binding):
        return all(t.eval(snapshot, binding) for t in self.terms)

    def refs(self):
        return [r for t in self.terms for r in t.refs()]


@dataclass(frozen=True)
class Or(Predicate):
    terms: tuple[Predicate, ...]

    def eval(self, snapshot, binding):
        return any(t.eval(snapshot, binding) for t in self.terms)

    def refs(self):
        return [r for t in self.terms for r in t.refs()]


def resolve_path(path: tuple[str, ...], binding: dict[str, str]) -> str:
    """Map a role-relative dotted path onto a store object id."""
    head = binding.get(path[0], path[0])
    return ".".join((head, *path[1:]))


# -- body steps ---------------------------------------------------------------------

@dataclass(frozen=True)
class StateTransition:
    path: tuple[str, ...]
    state: str
    group: str | None = None
    attached: str | None = None       # exception injected in place of the change


@dataclass(frozen=True)
class AssertStep:
    predicate: Predicate
    attached: str | None = None


@dataclass(frozen=True)
class RaiseException:
    exception: str


@dataclass(frozen=True)
class SignalOutcome:
    outcome: Outcome


@dataclass(frozen=True)
class Conditional:
    predicate: Predicate
    then_steps: tuple = ()
    else_steps: tuple = ()


@dataclass(frozen=True)
class StartNested:
    """Run a child interaction from inside this role's body; a non-normal
    child outcome is raised here as an exception (severity ids included)."""

    definition: "InteractionDef"
    participants: dict[str, str]


Step = object   # any of the step dataclasses above


# -- roles and definitions ------------------------------------------------------------

@dataclass(frozen=True)
class RoleId:
    interaction: str
    role: str
    index: int

    @property
    def key(self) -> str:
        return f"{self.interaction}.{self.role}"


@dataclass(frozen=True)
class InteractionDef:
    name: str
    roles: tuple[tuple[str, str], ...]               # (role name, participant class)
    guard: Predicate
    bodies: dict[str, tuple[Step, ...]]
    post: tuple[Predicate, str | None] | None = None
    handlers: dict[str, dict[str, tuple[Step, ...]]] = field(default_factory=dict)
    default_handler: dict[str, tuple[Step, ...]] | None = None
    hierarchy: hx.ExceptionHierarchy = field(default_factory=hx.build_hierarchy)

    def role_names(self) -> list[str]:
        return [r for r, _ in self.roles]

    def role_ids(self) -> list[RoleId]:
        return [RoleId(self.name, r, i) for i, (r, _) in enumerate(self.roles)]

    def body_for(self, role: str) -> tuple[Step, ...]:
        return self.bodies.get(role, ())

    def handler_for(self, exception: str) -> tuple[str | None, dict | None]:
        """Lookup order: exact, nearest strict ancestor below the root,
        the default handler, then a root-level handler; None when unhandled."""
        chain = self.hierarchy.ancestors(exception)
        for anc in chain[:-1]:                  # exclude the root for now
            if anc in self.handlers:
                return anc, self.handlers[anc]
        if self.default_handler is not None:
            return None, self.default_handler
        if hx.ROOT in self.handlers:
            return hx.ROOT, self.handlers[hx.ROOT]
        return None, None


def define_interaction(name: str,
                       roles: list[tuple[str, str]],
                       guard: Predicate | None = None,
                       bodies: dict[str, list] | None = None,
                       post: tuple[Predicate, str | None] | None = None,
                       handlers: dict[str, dict[str, list]] | None = None,
                       default_handler: dict[str, list] | None = None,
                       hierarchy: hx.ExceptionHierarchy | None = None) -> InteractionDef:
    """Validate and freeze an interaction definition."""
    if not roles:
        raise MissingRoleBody(f"{name}: at least one role required")
    h = hierarchy if hierarchy is not None else hx.build_hierarchy()
    role_names = [r for r, _ in roles]
    if len(set(role_names)) != len(role_names):
        raise MissingRoleBody(f"{name}: duplicate role names")

    def freeze(table: dict[str, list] | None, where: str, total: bool) -> dict[str, tuple]:
        table = table or {}
        unknown = set(table) - set(role_names)
        if unknown:
            raise MissingRoleBody(f"{name}: {where} names unknown roles {sorted(unknown)}")
        if total:
            missing = set(role_names) - set(table)
            if missing:
                raise MissingRoleBody(f"{name}: {where} missing roles {sorted(missing)}")
        return {r: tuple(steps) for r, steps in table.items()}

    frozen_handlers: dict[str, dict[str, tuple]] = {}
    for exc, table in (handlers or {}).items():
        if exc in (hx.ABORT, hx.FAILURE):
            raise HandlerForAbortOrFailure(f"{name}: handler for {exc}")
        try:
            h.require(exc)
        except UnknownException as e:
            raise UnknownExceptionInHandler(f"{name}: {exc}") from e
        frozen_handlers[exc] = freeze(table, f"handler {exc}", total=True)

    frozen_default = None
    if default_handler is not None:
        frozen_default = freeze(default_handler, "default handler", total=True)

    return InteractionDef(
        name=name,
        roles=tuple(roles),
        guard=guard if guard is not None else TruePred(),
        bodies=freeze(bodies, "bodies", total=False),
        post=post,
        handlers=frozen_handlers,
        default_handler=frozen_default,
        hierarchy=h,
    )


def evaluate_guard(definition: InteractionDef, snapshot: SystemState,
                   binding: dict[str, str] | None = None) -> bool:
    """Pure guard check over a frozen snapshot. No side effects."""
    b = binding if binding is not None else {r: r for r in definition.role_names()}
    return definition.guard.eval(snapshot, b)


def evaluate_post(definition: InteractionDef, snapshot: SystemState,
                  binding: dict[str, str] | None = None) -> bool:
    if definition.post is None:
        return True
    b = binding if binding is not None else {r: r for r in definition.role_names()}
    return definition.post[0].eval(snapshot, b)


# -- activation records ------------------------------------------------------------------

ENTRY = "Entry"
RUNNING_NORMAL = "RunningNormal"
RESOLVING = "Resolving"
RUNNING_HANDLER = "RunningHandler"
ROLLING_BACK = "RollingBack"
DONE = "Done"

_EDGES = {
    ENTRY: {RUNNING_NORMAL, RESOLVING, DONE},
    RUNNING_NORMAL: {DONE, RESOLVING, ROLLING_BACK},
    RESOLVING: {RUNNING_HANDLER, ROLLING_BACK, DONE},
    RUNNING_HANDLER: {DONE, RESOLVING, ROLLING_BACK},
    ROLLING_BACK: {DONE},
}

_DONE_FROM = {
    ENTRY: {FAILURE},                       # total crash before entry
    RUNNING_NORMAL: {NORMAL, FAILURE},
    RESOLVING: {FAILURE},
    RUNNING_HANDLER: {NORMAL, EXCEPTIONAL, FAILURE},
    ROLLING_BACK: {ABORT, FAILURE},
}


@dataclass
class ActivationRecord:
    """Mutable per-activation state, updated only by the coordinator."""

    definition: InteractionDef
    activation_id: int
    binding: dict[str, str]                     # role -> object id
    external_ids: list[str]
    depth: int = 0
    phase: str = ENTRY
    handler_exception: str | None = None
    phase_history: list[tuple[int, str]] = field(default_factory=list)
    raised: dict[str, str] = field(default_factory=dict)      # role -> exception
    interrupted: list[str] = field(default_factory=list)
    resolutions: list[str] = field(default_factory=list)
    role_outcomes: dict[str, Outcome] = field(default_factory=dict)
    outcome: Outcome | None = None
    entered_at: int | None = None
    done_at: int | None = None

    @property
    def interaction(self) -> str:
        return self.definition.name

    def move(self, t: int, phase: str, outcome: Outcome | None = None,
             handler: str | None = None) -> None:
        assert phase in _EDGES[self.phase] if phase != self.phase else True, \
            f"illegal phase move {self.phase} -> {phase}"
        if phase == DONE:
            assert outcome is not None and outcome.kind in _DONE_FROM[self.phase], \
                f"outcome {outcome} illegal from {self.phase}"
            self.outcome = outcome
            self.done_at = t
        if phase != self.phase:
            self.phase_history.append((t, phase))
        self.phase = phase
        self.handler_exception = handler if phase == RUNNING_HANDLER else None

    @property
    def done(self) -> bool:
        return self.phase == DONE

    def phases_seen(self) -> list[str]:
        return [p for _, p in self.phase_history]


def activate(definition: InteractionDef, participants: dict[str, str],
             coordinator, externals: list[str] | None = None,
             depth: int = 0) -> ActivationRecord:
    """Synchronized entry: acquire participants, freeze the entry snapshot,
    check the guard, and start the manager group. Raises GuardFalse or
    ParticipantBusy without side effects when entry cannot happen."""
    return coordinator.begin_activation(definition, participants,
                                        externals=externals, depth=depth)


def run_to_outcome(record: ActivationRecord, coordinator=None) -> Outcome:
    """Drive the activation through its full lifecycle and return the
    agreed outcome. The coordinator handle is taken from the record when
    not supplied."""
    coord = coordinator if coordinator is not None else record._coordinator
    return coord.run_activation(record)


def raise_in_role(record: ActivationRecord, role: str, exception: str,
                  coordinator=None):
    """Raise an exception from one role of a live activation."""
    coord = coordinator if coordinator is not None else record._coordinator
    return coord.raise_in_role(record, role, exception)
