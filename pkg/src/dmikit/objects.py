"""External and shared objects: serialized access, snapshots, commit/rollback.

External objects carry system state across interactions and provide the
transactional behavior every activation relies on: an entry snapshot is
taken when the lock is granted, working changes stay private, and only
commit publishes them. All committed-state mutation and observation runs
under one store-wide mutex, so an activation touching several objects
commits them as a single atomic change; observers polling committed state
can never see a half-committed activation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

from .errors import ForeignAccess, ParticipantBusy, RollbackFailure


@dataclass
class LockToken:
    object_id: str
    activation_id: int
    released: bool = False


class ExternalObject:
    """One device or resource: a finite-state valuation per state group."""

    def __init__(self, object_id: str, state: dict[str, str],
                 groups: dict[str, list[str]] | None = None):
        self.object_id = object_id
        self.committed: dict[str, str] = dict(state)
        self.groups = {g: list(states) for g, states in (groups or {}).items()}
        self.working: dict[str, str] | None = None
        self.snapshot: dict[str, str] | None = None
        self.lock_holder: int | None = None
        self._token: LockToken | None = None
        self._waiters: list[tuple[int, Callable]] = []   # FIFO acquisition queue
        self._mutex = threading.Lock()                   # store-shared once added
        self.fail_next_rollback = False

    # -- locking ------------------------------------------------------------

    def try_acquire(self, activation_id: int) -> LockToken:
        """Non-blocking acquisition; reentrant for the holding activation."""
        with self._mutex:
            if self.lock_holder is not None:
                if self.lock_holder == activation_id:
                    return self._token
                raise ParticipantBusy(self.object_id)
            return self._grant(activation_id)

    def acquire(self, activation_id: int, granted: Callable[[LockToken], None] | None = None):
        """Queued acquisition: grants now or calls ``granted`` later, FIFO."""
        with self._mutex:
            if self.lock_holder is None or self.lock_holder == activation_id:
                token = self._token if self.lock_holder == activation_id \
                    else self._grant(activation_id)
                if granted is not None:
                    granted(token)
                return token
            if granted is None:
                raise ParticipantBusy(self.object_id)
            self._waiters.append((activation_id, granted))
            return None

    def _grant(self, activation_id: int) -> LockToken:
        self.lock_holder = activation_id
        self.snapshot = dict(self.committed)
        self.working = dict(self.committed)
        self._token = LockToken(self.object_id, activation_id)
        return self._token

    def _release_locked(self) -> None:
        self.lock_holder = None
        self.snapshot = None
        self.working = None
        if self._token is not None:
            self._token.released = True
            self._token = None
        if self._waiters:
            activation_id, granted = self._waiters.pop(0)
            granted(self._grant(activation_id))

    # -- state access ----------------------------------------------------------

    def read(self, group: str) -> str:
        src = self.working if self.working is not None else self.committed
        return src[group]

    def working_view(self) -> dict[str, str]:
        return dict(self.working if self.working is not None else self.committed)

    def entry_view(self) -> dict[str, str]:
        return dict(self.snapshot if self.snapshot is not None else self.committed)

    def write(self, token: LockToken, group: str, state: str) -> None:
        self._check(token)
        if self.groups and state not in self.groups.get(group, [state]):
            raise ValueError(f"{state!r} not in group {group!r} of {self.object_id}")
        self.working[group] = state

    def committed_view(self) -> dict[str, str]:
        with self._mutex:
            return dict(self.committed)

    # -- outcome -----------------------------------------------------------------

    def commit(self, token: LockToken) -> dict[str, tuple[str, str]]:
        """Publish the working state atomically; returns {group: (old, new)}."""
        with self._mutex:
            return self._commit_locked(token)

    def _commit_locked(self, token: LockToken) -> dict[str, tuple[str, str]]:
        self._check(token)
        delta = {g: (self.snapshot[g], s) for g, s in self.working.items()
                 if self.snapshot[g] != s}
        self.committed = dict(self.working)
        self._release_locked()
        return delta

    def rollback(self, token: LockToken) -> None:
        """Restore the entry snapshot exactly; fails only under injection."""
        with self._mutex:
            self._rollback_locked(token)

    def _rollback_locked(self, token: LockToken) -> None:
        self._check(token)
        if self.fail_next_rollback:
            self.fail_next_rollback = False
            # restoration failed: the working state is what the object holds now
            self.committed = dict(self.working)
            self._release_locked()
            raise RollbackFailure(self.object_id)
        self.committed = dict(self.snapshot)
        self._release_locked()

    def _check(self, token: LockToken | None) -> None:
        if token is None or token.released or token is not self._token:
            raise ParticipantBusy(f"invalid token for {self.object_id}")


class SharedObject:
    """Cooperation state visible only to the owning activation's roles."""

    def __init__(self, object_id: str, owner_activation: int):
        self.object_id = object_id
        self.owner_activation = owner_activation
        self.values: dict[str, object] = {}
        self.op_order: list[tuple[str, str, object]] = []
        self.retired = False

    def _check(self, activation_id: int) -> None:
        if self.retired or activation_id != self.owner_activation:
            raise ForeignAccess(self.object_id)

    def shared_read(self, activation_id: int, key: str):
        self._check(activation_id)
        self.op_order.append(("read", key, self.values.get(key)))
        return self.values.get(key)

    def shared_write(self, activation_id: int, key: str, value) -> None:
        self._check(activation_id)
        self.values[key] = value
        self.op_order.append(("write", key, value))

    def retire(self) -> None:
        self.retired = True


class ObjectStore:
    """All declared external objects, their component links, and atomic
    whole-store snapshots for observers."""

    def __init__(self):
        self.objects: dict[str, ExternalObject] = {}
        self.components: dict[str, list[str]] = {}
        self.version = 0
        self._mutex = threading.Lock()

    def add(self, obj: ExternalObject, parent: str | None = None) -> ExternalObject:
        obj._mutex = self._mutex          # one lock spans every committed view
        self.objects[obj.object_id] = obj
        if parent is not None:
            self.components.setdefault(parent, []).append(obj.object_id)
        return obj

    def __getitem__(self, object_id: str) -> ExternalObject:
        return self.objects[object_id]

    def __contains__(self, object_id: str) -> bool:
        return object_id in self.objects

    def with_components(self, object_id: str) -> list[str]:
        out = [object_id]
        for child in self.components.get(object_id, []):
            out.extend(self.with_components(child))
        return out

    # -- activation-scoped outcomes ------------------------------------------

    def commit_all(self, tokens: list[LockToken]) -> dict[str, dict[str, tuple[str, str]]]:
        """Commit every object of one activation under a single lock hold."""
        with self._mutex:
            deltas = {}
            for token in tokens:
                delta = self.objects[token.object_id]._commit_locked(token)
                if delta:
                    deltas[token.object_id] = delta
            self.version += 1
            return deltas

    def rollback_all(self, tokens: list[LockToken]) -> list[str]:
        """Roll back every object; returns ids whose restore failed."""
        failed = []
        with self._mutex:
            for token in tokens:
                try:
                    self.objects[token.object_id]._rollback_locked(token)
                except RollbackFailure:
                    failed.append(token.object_id)
            self.version += 1
        return failed

    # -- observation --------------------------------------------------------------

    def snapshot(self) -> tuple[int, dict[str, dict[str, str]]]:
        """Committed valuation of every object, with its version, atomically."""
        with self._mutex:
            return self.version, {
                oid: dict(obj.committed) for oid, obj in sorted(self.objects.items())
            }

    def triples(self) -> list[tuple[str, str, str]]:
        _, snap = self.snapshot()
        return [(oid, group, state)
                for oid, groups in snap.items()
                for group, state in sorted(groups.items())]
