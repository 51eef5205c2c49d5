"""Static checks: name resolution, initial states, handler coverage.

check() returns diagnostics instead of raising; an empty list means the
spec is executable. Formatting follows ``file:line:col: CODE: message``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import hierarchy as hx
from ..errors import CycleError, DuplicateName, ReservedNameViolation, UnknownException
from . import ast


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    loc: ast.Loc
    source: str = "<string>"

    def __str__(self) -> str:
        return (f"{self.source}:{self.loc.line}:{self.loc.col}: "
                f"{self.code}: {self.message}")


class Resolver:
    """Shared name-resolution logic for the checker and the compiler."""

    def __init__(self, spec: ast.Spec):
        self.spec = spec
        self.classes = spec.classes()
        self.global_exc = {e.name: e for e in spec.global_exceptions()}

    # -- class structure ---------------------------------------------------

    def class_states(self, cls: ast.ClassDecl) -> dict[str, str]:
        """state name -> group key (first state of its group)."""
        out = {}
        for g in cls.groups:
            for s in g.states:
                out.setdefault(s, g.name)
        return out

    def component_class(self, cls: ast.ClassDecl, name: str) -> str | None:
        for comp in cls.components:
            if name in comp.names:
                return comp.class_name
        return None

    def class_exceptions(self, cls: ast.ClassDecl) -> set[str]:
        return {e.name for e in cls.exceptions}

    def walk(self, head_class: str, parts: tuple[str, ...]) -> tuple[str | None, str | None]:
        """Follow component fields; returns (class at end, failing part)."""
        cur = head_class
        for part in parts:
            cls = self.classes.get(cur)
            if cls is None:
                return None, part
            nxt = self.component_class(cls, part)
            if nxt is None:
                return cur, part
            cur = nxt
        return cur, None

    # -- hierarchy ------------------------------------------------------------

    def exception_id(self, cls_name: str, exc_name: str) -> str:
        return f"{cls_name}.{exc_name}"

    def hierarchy_edges(self) -> list[tuple[str, str, ast.Loc]]:
        """(child id, parent id, loc); parents default to the root."""
        edges = []
        for item in self.spec.global_exceptions():
            parent = self.resolve_parent(item.parent)
            edges.append((item.name, parent or hx.ROOT, item.loc))
        for cls in self.classes.values():
            for item in cls.exceptions:
                parent = self.resolve_parent(item.parent)
                edges.append((self.exception_id(cls.name, item.name),
                              parent or hx.ROOT, item.loc))
        return edges

    def resolve_parent(self, ref: ast.Path | None) -> str | None:
        if ref is None:
            return None
        if len(ref.parts) == 1:
            name = ref.parts[0]
            if name in self.global_exc or name in hx.RESERVED:
                return name
            return None if name == "" else name   # validated by build
        if len(ref.parts) == 2:
            cls, exc = ref.parts
            if cls in self.classes and exc in self.class_exceptions(self.classes[cls]):
                return self.exception_id(cls, exc)
        return f"{'.'.join(ref.parts)}"

    def resolve_exception_ref(self, ref: ast.Path,
                              roles: dict[str, str]) -> str | None:
        """Map an annotation like ``t.angle``, ``r.arm1.magnet``,
        ``FeedBeltTable`` or ``post-condition`` onto a hierarchy id."""
        parts = ref.parts
        if len(parts) == 1:
            name = parts[0]
            if name == "post-condition":
                return hx.POST_CONDITION
            if name in self.global_exc or name in hx.RESERVED:
                return name
            return None
        head = parts[0]
        if head in roles:
            cls_name, missing = self.walk(roles[head], parts[1:-1])
            if cls_name is None or missing is not None:
                return None
            cls = self.classes.get(cls_name)
            if cls is not None and parts[-1] in self.class_exceptions(cls):
                return self.exception_id(cls_name, parts[-1])
            return None
        if head in self.classes and len(parts) == 2:
            if parts[1] in self.class_exceptions(self.classes[head]):
                return self.exception_id(head, parts[1])
        return None

    def resolve_state_ref(self, ref: ast.Path,
                          roles: dict[str, str]) -> tuple[tuple[str, ...], str, str] | None:
        """Map ``t.lower`` or ``r.arm1.free`` onto (path, state, group key)."""
        parts = ref.parts
        if len(parts) < 2 or parts[0] not in roles:
            return None
        cls_name, missing = self.walk(roles[parts[0]], parts[1:-1])
        if cls_name is None or missing is not None:
            return None
        cls = self.classes.get(cls_name)
        if cls is None:
            return None
        group = self.class_states(cls).get(parts[-1])
        if group is None:
            return None
        return parts[:-1], parts[-1], group


def check(spec: ast.Spec) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    src = spec.source_name
    r = Resolver(spec)

    def bad(code: str, message: str, loc: ast.Loc) -> None:
        out.append(Diagnostic(code=code, message=message, loc=loc, source=src))

    # classes
    seen_classes: set[str] = set()
    for d in spec.decls:
        if not isinstance(d, ast.ClassDecl):
            continue
        if d.name in seen_classes:
            bad("DuplicateClass", f"class {d.name} declared twice", d.loc)
        seen_classes.add(d.name)
        states_seen: set[str] = set()
        for g in d.groups:
            if len(g.initials) != 1:
                bad("InitialStateCount",
                    f"group {g.states} needs exactly one initial state, "
                    f"found {len(g.initials)}", g.loc)
            for s in g.states:
                if s in states_seen:
                    bad("DuplicateState",
                        f"state {s} declared twice in class {d.name}", g.loc)
                states_seen.add(s)
        excs_seen: set[str] = set()
        for e in d.exceptions:
            if e.name in excs_seen:
                bad("DuplicateException",
                    f"exception {e.name} declared twice in class {d.name}", e.loc)
            excs_seen.add(e.name)
        for comp in d.components:
            if comp.class_name not in r.classes:
                bad("UnknownClass",
                    f"component class {comp.class_name} is not declared", comp.loc)

    # objects
    objects_seen: set[str] = set()
    for d in spec.objects():
        if d.class_name not in r.classes:
            bad("UnknownClass", f"object class {d.class_name} is not declared", d.loc)
        for name in d.names:
            if name in objects_seen:
                bad("DuplicateObject", f"object {name} declared twice", d.loc)
            objects_seen.add(name)

    # the exception hierarchy must assemble into a tree
    edges = [(c, p) for c, p, _ in r.hierarchy_edges()]
    try:
        hierarchy = hx.build_hierarchy(edges)
    except (CycleError, DuplicateName, ReservedNameViolation, UnknownException) as e:
        bad(type(e).__name__, str(e), ast.Loc())
        hierarchy = hx.build_hierarchy()

    # actions
    def check_pred(pred, roles, loc) -> None:
        if isinstance(pred, ast.PredAtom):
            if r.resolve_state_ref(pred.path, roles) is None:
                bad("UnknownState",
                    f"{pred.path} does not name a participant state", pred.loc)
        elif isinstance(pred, ast.PredNot):
            check_pred(pred.inner, roles, loc)
        elif isinstance(pred, (ast.PredAnd, ast.PredOr)):
            for t in pred.terms:
                check_pred(t, roles, loc)

    def check_steps(steps, roles) -> None:
        for s in steps:
            if isinstance(s, ast.TransitionStmt):
                if r.resolve_state_ref(s.target, roles) is None:
                    bad("UnknownState",
                        f"{s.target} does not name a participant state", s.loc)
                if s.attached is not None:
                    if s.attached.parts == ("post-condition",):
                        bad("BadAnnotation",
                            "post-condition may only annotate an assert", s.loc)
                    elif r.resolve_exception_ref(s.attached, roles) is None:
                        bad("UnknownException",
                            f"{s.attached} does not name a declared exception",
                            s.loc)
            elif isinstance(s, ast.IfStmt):
                check_pred(s.cond, roles, s.loc)
                check_steps(s.then_steps, roles)
                check_steps(s.else_steps, roles)

    actions_seen: set[str] = set()
    for d in spec.decls:
        if not isinstance(d, ast.ActionDecl):
            continue
        if d.name in actions_seen:
            bad("DuplicateAction", f"action {d.name} declared twice", d.loc)
        actions_seen.add(d.name)
        roles: dict[str, str] = {}
        for role, cls in d.roles:
            if role in roles:
                bad("DuplicateRole", f"role {role} bound twice in {d.name}", d.loc)
            if cls not in r.classes:
                bad("UnknownClass", f"role {role} has unknown class {cls}", d.loc)
            roles[role] = cls
        if not d.roles:
            bad("NoRoles", f"action {d.name} declares no roles", d.loc)
        check_pred(d.when, roles, d.loc)
        if d.split:
            for b in d.by_clauses:
                check_steps(b.steps, roles)
        else:
            check_steps(d.body, roles)
        if d.assert_clause is not None:
            a = d.assert_clause
            check_pred(a.predicate, roles, a.loc)
            if a.attached is not None and a.attached.parts != ("post-condition",):
                if r.resolve_exception_ref(a.attached, roles) is None:
                    bad("UnknownException",
                        f"{a.attached} does not name a declared exception", a.loc)

    # handling actions
    defaults_seen: set[str] = set()
    handlers_seen: set[tuple[str, str]] = set()
    actions = spec.actions()
    for d in spec.handlers():
        action = actions.get(d.action_name)
        if action is None:
            bad("UnknownAction",
                f"handling action for undeclared action {d.action_name}", d.loc)
            continue
        roles = dict(action.roles)
        declared = {(b.role, b.class_name) for b in d.by_clauses}
        if declared != set(action.roles):
            bad("HandlerRoleMismatch",
                f"handling action {d.action_name} must cover roles "
                f"{sorted(dict(action.roles))}", d.loc)
        for b in d.by_clauses:
            check_steps(b.steps, roles)
        if d.for_ref is None:
            if d.action_name in defaults_seen:
                bad("DuplicateDefaultHandler",
                    f"two default handlers for {d.action_name}", d.loc)
            defaults_seen.add(d.action_name)
            continue
        resolved = r.resolve_exception_ref(d.for_ref, roles)
        if resolved is None:
            bad("UnknownException",
                f"{d.for_ref} does not name a declared exception", d.loc)
        elif resolved not in hierarchy:
            bad("UnknownException",
                f"{resolved} is not in the exception hierarchy", d.loc)
        else:
            if (d.action_name, resolved) in handlers_seen:
                bad("DuplicateHandler",
                    f"two handlers for {resolved} on {d.action_name}", d.loc)
            handlers_seen.add((d.action_name, resolved))

    return out
