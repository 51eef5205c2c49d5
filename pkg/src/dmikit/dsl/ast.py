"""AST for the action-system DSL.

Locations are carried for diagnostics but excluded from equality, so a
parse -> print -> reparse round trip compares equal node for node.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Loc:
    line: int = 0
    col: int = 0


def loc_field():
    return field(default=Loc(), compare=False, repr=False)


@dataclass(frozen=True)
class Path:
    parts: tuple[str, ...]
    loc: Loc = loc_field()

    def __str__(self) -> str:
        return ".".join(self.parts)


POST_CONDITION_REF = Path(("post-condition",))


# -- predicates --------------------------------------------------------------

@dataclass(frozen=True)
class PredAtom:
    path: Path
    loc: Loc = loc_field()


@dataclass(frozen=True)
class PredNot:
    inner: "Pred"
    loc: Loc = loc_field()


@dataclass(frozen=True)
class PredAnd:
    terms: tuple["Pred", ...]
    loc: Loc = loc_field()


@dataclass(frozen=True)
class PredOr:
    terms: tuple["Pred", ...]
    loc: Loc = loc_field()


Pred = object


# -- statements ---------------------------------------------------------------

@dataclass(frozen=True)
class TransitionStmt:
    target: Path
    attached: Path | None = None
    loc: Loc = loc_field()


@dataclass(frozen=True)
class IfStmt:
    cond: Pred
    then_steps: tuple = ()
    else_steps: tuple = ()
    loc: Loc = loc_field()


# -- declarations --------------------------------------------------------------

@dataclass(frozen=True)
class StateGroupDecl:
    states: tuple[str, ...]
    initials: tuple[str, ...]          # exactly one after checking
    loc: Loc = loc_field()

    @property
    def name(self) -> str:
        """Groups are anonymous in source; they are keyed by first state."""
        return self.states[0]


@dataclass(frozen=True)
class ExcDecl:
    name: str
    parent: Path | None = None
    loc: Loc = loc_field()


@dataclass(frozen=True)
class ComponentDecl:
    names: tuple[str, ...]
    class_name: str
    loc: Loc = loc_field()


@dataclass(frozen=True)
class ClassDecl:
    name: str
    groups: tuple[StateGroupDecl, ...] = ()
    exceptions: tuple[ExcDecl, ...] = ()
    components: tuple[ComponentDecl, ...] = ()
    members: tuple = ()                 # declaration order, for printing
    loc: Loc = loc_field()


@dataclass(frozen=True)
class ByClause:
    role: str
    class_name: str
    steps: tuple = ()
    loc: Loc = loc_field()


@dataclass(frozen=True)
class AssertClause:
    predicate: Pred
    attached: Path | None = None       # POST_CONDITION_REF for ":: post-condition"
    loc: Loc = loc_field()


@dataclass(frozen=True)
class ActionDecl:
    name: str
    roles: tuple[tuple[str, str], ...]
    when: Pred
    split: bool = True                  # False: single body after "do"
    by_clauses: tuple[ByClause, ...] = ()
    body: tuple = ()
    assert_clause: AssertClause | None = None
    loc: Loc = loc_field()


@dataclass(frozen=True)
class HandlingDecl:
    action_name: str
    for_ref: Path | None = None         # None: the default handler
    by_clauses: tuple[ByClause, ...] = ()
    loc: Loc = loc_field()


@dataclass(frozen=True)
class ObjectDecl:
    names: tuple[str, ...]
    class_name: str
    loc: Loc = loc_field()


@dataclass(frozen=True)
class ExceptionsDecl:
    items: tuple[ExcDecl, ...]
    loc: Loc = loc_field()


@dataclass(frozen=True)
class Spec:
    decls: tuple = ()
    source_name: str = field(default="<string>", compare=False)

    def classes(self) -> dict[str, ClassDecl]:
        return {d.name: d for d in self.decls if isinstance(d, ClassDecl)}

    def actions(self) -> dict[str, ActionDecl]:
        return {d.name: d for d in self.decls if isinstance(d, ActionDecl)}

    def handlers(self) -> list[HandlingDecl]:
        return [d for d in self.decls if isinstance(d, HandlingDecl)]

    def objects(self) -> list[ObjectDecl]:
        return [d for d in self.decls if isinstance(d, ObjectDecl)]

    def global_exceptions(self) -> list[ExcDecl]:
        return [item for d in self.decls if isinstance(d, ExceptionsDecl)
                for item in d.items]
