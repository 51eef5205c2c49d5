"""Interaction-cost benchmark: empty interactions and all-raise interactions
against a bare-barrier rendezvous baseline.

Latency is measured in virtual ticks, which are deterministic for a given
seed and therefore assertable in tests; wall-clock times are reported for
orientation only. The report path writes a tab-separated table and renders
a latency-vs-participants figure next to it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import interaction as ia
from . import transport as tp
from .coordination import Coordinator, RunConfig
from .hierarchy import build_hierarchy
from .objects import ExternalObject, ObjectStore
from .sim import Scheduler
from .transport import SimTransport

VARIANTS = ("Rendezvous", "EmptyDMI", "AllRaiseDMI")


@dataclass(frozen=True)
class BenchResult:
    variant: str
    participants: int
    samples: int
    mean_ticks: float
    mean_wall_ms: float

    def row(self) -> str:
        return (f"{self.variant}\t{self.participants}\t{self.samples}\t"
                f"{self.mean_ticks:.2f}\t{self.mean_wall_ms:.4f}")


class _Rendezvous:
    """Bare synchronisation: entry barrier plus exit barrier, nothing else."""

    def __init__(self, n: int, seed: int = 0):
        self.n = n
        self.scheduler = Scheduler()
        self.transport = SimTransport(self.scheduler, keep_trace=False)
        self.done = False
        self.entered: set[int] = set()
        self.exited: set[int] = set()
        for i in range(n):
            self.transport.register(i, self._make_handler(i))

    def _make_handler(self, i: int):
        def handle(msg):
            if msg.kind == tp.ARRIVED:
                self.entered.add(msg.sender)
                if len(self.entered) == self.n:
                    self.transport.broadcast(tp.BARRIER_RELEASE, 0,
                                             range(self.n), msg.activation_id)
            elif msg.kind == tp.BARRIER_RELEASE:
                self.transport.send(tp.OUTCOME_VOTE, i, 0, msg.activation_id)
            elif msg.kind == tp.OUTCOME_VOTE:
                self.exited.add(msg.sender)
                if len(self.exited) == self.n:
                    self.transport.broadcast(tp.COMMIT, 0, range(self.n),
                                             msg.activation_id)
            elif msg.kind == tp.COMMIT and i == self.n - 1:
                self.done = True
        return handle

    def run_once(self, activation_id: int) -> int:
        self.done = False
        self.entered.clear()
        self.exited.clear()
        start = self.scheduler.now
        for i in range(self.n):
            self.transport.send(tp.ARRIVED, i, 0, activation_id)
        self.scheduler.run(until=lambda: self.done)
        return self.scheduler.now - start


def _bench_store(n: int) -> ObjectStore:
    store = ObjectStore()
    for i in range(n):
        store.add(ExternalObject(f"slot{i}", {"s": "idle"}, {"s": ["idle", "busy"]}))
    return store


def _empty_def(n: int) -> ia.InteractionDef:
    return ia.define_interaction(
        "EmptyDMI", roles=[(f"r{i}", "Slot") for i in range(n)])


def _all_raise_def(n: int) -> ia.InteractionDef:
    h = build_hierarchy([("BenchFault", "Exception")]
                        + [(f"Fault{i}", "BenchFault") for i in range(n)])
    handler = {f"r{i}": [] for i in range(n)}
    bodies = {f"r{i}": [ia.RaiseException(f"Fault{i}")] for i in range(n)}
    return ia.define_interaction(
        "AllRaiseDMI", roles=[(f"r{i}", "Slot") for i in range(n)],
        bodies=bodies, handlers={"BenchFault": handler}, hierarchy=h)


def bench_run(participants: int, variant: str, samples: int = 30,
              seed: int = 0, warmup: int = 3) -> BenchResult:
    """Mean completion latency of one interaction variant at a role count."""
    assert 2 <= participants <= 16, "participant count out of range"
    assert variant in VARIANTS, variant
    ticks: list[int] = []
    wall: list[float] = []

    if variant == "Rendezvous":
        group = _Rendezvous(participants, seed=seed)
        for k in range(warmup + samples):
            t0 = time.perf_counter()
            dt = group.run_once(k)
            t1 = time.perf_counter()
            if k >= warmup:
                ticks.append(dt)
                wall.append(t1 - t0)
    else:
        definition = _empty_def(participants) if variant == "EmptyDMI" \
            else _all_raise_def(participants)
        config = RunConfig(seed=seed, keep_trace=False, step_cost=1)
        coord = Coordinator(store=_bench_store(participants), config=config,
                            hierarchy=definition.hierarchy)
        binding = {f"r{i}": f"slot{i}" for i in range(participants)}
        for k in range(warmup + samples):
            t0 = time.perf_counter()
            start = coord.scheduler.now
            rec = coord.begin_activation(definition, binding)
            coord.run_activation(rec)
            dt = rec.done_at - start
            t1 = time.perf_counter()
            if k >= warmup:
                ticks.append(dt)
                wall.append(t1 - t0)

    return BenchResult(variant=variant, participants=participants,
                       samples=samples,
                       mean_ticks=sum(ticks) / len(ticks),
                       mean_wall_ms=1000.0 * sum(wall) / len(wall))


def run_bench(participant_counts=(2, 4, 8, 16), variants=VARIANTS,
              samples: int = 30, seed: int = 0) -> list[BenchResult]:
    return [bench_run(n, v, samples=samples, seed=seed)
            for v in variants for n in participant_counts]


def growth_exponent(results: list[BenchResult], variant: str) -> float:
    """Least-squares slope of log(mean ticks) against log(participants)."""
    import numpy as np
    pts = sorted((r.participants, r.mean_ticks) for r in results
                 if r.variant == variant)
    xs = np.log([p for p, _ in pts])
    ys = np.log([t for _, t in pts])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def table_lines(results: list[BenchResult]) -> list[str]:
    header = "variant\tparticipants\tsamples\tmean_virtual_ticks\tmean_wall_ms"
    return [header] + [r.row() for r in results]


def write_table(results: list[BenchResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(table_lines(results)) + "\n")


def write_figure(results: list[BenchResult], path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    markers = {"Rendezvous": "o", "EmptyDMI": "s", "AllRaiseDMI": "^"}
    for variant in VARIANTS:
        pts = sorted((r.participants, r.mean_ticks) for r in results
                     if r.variant == variant)
        if not pts:
            continue
        ax.plot([p for p, _ in pts], [t for _, t in pts],
                marker=markers.get(variant, "o"), label=variant)
    ax.set_xlabel("participants")
    ax.set_ylabel("mean completion latency (virtual ticks)")
    ax.set_title("Interaction cost vs participants")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
