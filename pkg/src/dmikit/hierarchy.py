"""Exception identifiers, the rooted exception hierarchy, and concurrent resolution.

The hierarchy is a strict tree rooted at ``Exception``. ``Abort`` and
``Failure`` are reserved children of the root that outrank every internal
exception and never take part in the common-ancestor search; the remaining
reserved ids are ordinary internal exceptions that default to sitting
directly under the root but may be re-parented by a declaration edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    CycleError,
    DuplicateName,
    ReservedNameViolation,
    UnknownException,
)

ROOT = "Exception"
ABORT = "Abort"
FAILURE = "Failure"
INTERRUPTED = "InterruptedException"
CRASHED_MANAGER = "CrashedManagerException"
CRASHED_ROLE = "CrashedRoleException"
PRE_CONDITION = "PreConditionException"
POST_CONDITION = "PostConditionException"

#: Ids present in every hierarchy.
RESERVED = frozenset({
    ROOT, ABORT, FAILURE, INTERRUPTED,
    CRASHED_MANAGER, CRASHED_ROLE, PRE_CONDITION, POST_CONDITION,
})

#: Severity outcomes: never handleable, never part of the ancestor search.
SEVERITY_IDS = frozenset({ABORT, FAILURE})

#: Reserved ids that a declaration may re-parent (they are internal and
#: resolvable, so models may place them below a domain-specific ancestor).
MOVABLE_RESERVED = RESERVED - SEVERITY_IDS - {ROOT}


@dataclass(frozen=True)
class ExceptionHierarchy:
    """Immutable rooted tree of exception ids; safe for concurrent reads."""

    parent: dict[str, str]          # every id except ROOT -> its parent
    depth: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.depth:
            depths = {ROOT: 0}
            for name in self.parent:
                self._fill_depth(name, depths)
            object.__setattr__(self, "depth", depths)

    def _fill_depth(self, name: str, depths: dict[str, int]) -> int:
        if name in depths:
            return depths[name]
        d = self._fill_depth(self.parent[name], depths) + 1
        depths[name] = d
        return d

    def __contains__(self, name: str) -> bool:
        return name == ROOT or name in self.parent

    def require(self, name: str) -> None:
        if name not in self:
            raise UnknownException(name)

    def ids(self) -> set[str]:
        return {ROOT, *self.parent}

    def ancestors(self, name: str) -> list[str]:
        """Path from ``name`` to the root, inclusive of both ends."""
        self.require(name)
        chain = [name]
        while chain[-1] != ROOT:
            chain.append(self.parent[chain[-1]])
        return chain

    def edges(self) -> list[tuple[str, str]]:
        """(child, parent) pairs in deterministic order, for serialization."""
        return sorted(self.parent.items())


def build_hierarchy(edges: list[tuple[str, str]] | None = None) -> ExceptionHierarchy:
    """Build a hierarchy from (child, parent) declarations.

    Reserved ids are always present; Abort and Failure sit directly under the
    root and accept no children. A declaration naming a movable reserved id
    re-parents it; naming the root, Abort, or Failure as a child is rejected.
    """
    edges = list(edges or [])
    parent: dict[str, str] = {name: ROOT for name in RESERVED - {ROOT}}
    user_declared: set[str] = set()

    declared_children = {child for child, _ in edges}
    for child, par in edges:
        if not child or not par:
            raise DuplicateName("empty exception name")
        if child == ROOT or child in SEVERITY_IDS:
            raise ReservedNameViolation(child)
        if par in SEVERITY_IDS:
            raise ReservedNameViolation(f"{child} under {par}")
        if child in user_declared:
            raise DuplicateName(child)
        if par != ROOT and par not in declared_children and par not in RESERVED:
            raise UnknownException(f"undeclared parent {par!r} of {child!r}")
        user_declared.add(child)
        parent[child] = par

    # Every node must reach the root without revisiting itself.
    for name in parent:
        seen = {name}
        cur = name
        while cur != ROOT:
            cur = parent[cur]
            if cur in seen:
                raise CycleError(name)
            seen.add(cur)

    return ExceptionHierarchy(parent=parent)


def is_ancestor(h: ExceptionHierarchy, a: str, b: str) -> bool:
    """True iff ``a`` lies on the path from ``b`` to the root, ``b`` included."""
    h.require(a)
    return a in h.ancestors(b)


def resolve(raised: set[str] | frozenset[str], h: ExceptionHierarchy) -> str:
    """Pick the single exception to handle for a set of concurrent raises.

    Failure outranks Abort outranks everything internal; otherwise the result
    is the deepest id that is an ancestor-or-self of every raised id (the
    root when nothing lower is common). Pure and permutation-invariant.
    """
    if not raised:
        raise UnknownException("empty raised set")
    for name in raised:
        h.require(name)
    if FAILURE in raised:
        return FAILURE
    if ABORT in raised:
        return ABORT
    common: set[str] | None = None
    for name in raised:
        chain = set(h.ancestors(name))
        common = chain if common is None else common & chain
    assert common, "root is an ancestor of everything"
    return max(common, key=lambda n: h.depth[n])
