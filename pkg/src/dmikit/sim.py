"""Deterministic discrete-event scheduler over an integer virtual clock.

All runtime behavior (message delivery, body steps, timeouts, heartbeats)
is driven from this queue. Ties at the same tick are broken by insertion
order, which makes any run a pure function of (seed, fault plan).
"""

from __future__ import annotations

import heapq
from typing import Callable


class Cancelled:
    __slots__ = ("flag",)

    def __init__(self):
        self.flag = False

    def cancel(self):
        self.flag = True


class Scheduler:
    def __init__(self):
        self.now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Cancelled, Callable[[], None]]] = []

    def at(self, t: int, fn: Callable[[], None]) -> Cancelled:
        if t < self.now:
            t = self.now
        handle = Cancelled()
        heapq.heappush(self._queue, (t, self._seq, handle, fn))
        self._seq += 1
        return handle

    def after(self, delay: int, fn: Callable[[], None]) -> Cancelled:
        return self.at(self.now + delay, fn)

    def pending(self) -> bool:
        return any(not h.flag for _, _, h, _ in self._queue)

    def step(self) -> bool:
        """Run the next event; False when the queue is exhausted."""
        while self._queue:
            t, _, handle, fn = heapq.heappop(self._queue)
            if handle.flag:
                continue
            self.now = max(self.now, t)
            fn()
            return True
        return False

    def run(self, until: Callable[[], bool] | None = None,
            max_time: int | None = None) -> None:
        """Drain events until the predicate holds, the horizon passes, or idle."""
        while self._queue:
            if until is not None and until():
                return
            t = self._next_time()
            if t is None:
                return
            if max_time is not None and t > max_time:
                return
            self.step()

    def run_until_time(self, t: int) -> None:
        """Advance through every event scheduled at or before t."""
        while self._queue:
            nxt = self._next_time()
            if nxt is None or nxt > t:
                break
            self.step()
        self.now = max(self.now, t)

    def _next_time(self) -> int | None:
        while self._queue and self._queue[0][2].flag:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None
