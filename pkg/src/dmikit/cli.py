"""Command-line interface: check, run, bench, serve.

`run` writes the event log as line-delimited records plus an optional
activation-timeline figure; `bench` writes a tab-separated latency table
plus the latency-vs-participants figure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench as benchmod
from . import cell as cellmod
from . import dsl
from .coordination import RunConfig
from .errors import DmikitError, StrictAssertStop
from .faults import load_fault_plan


def _load_spec(path: str):
    if path in ("production-cell", "cell"):
        return dsl.parse(cellmod.model_source(), "production_cell.disco")
    text = Path(path).read_text(encoding="utf-8")
    return dsl.parse(text, path)


def _load_plan(arg: str | None):
    if arg is None:
        return None
    p = Path(arg)
    if p.exists():
        return load_fault_plan(p)
    try:
        return cellmod.named_fault_plan(arg)
    except FileNotFoundError:
        raise SystemExit(f"fault plan not found: {arg}")


def _parse_step_costs(items) -> dict[str, int]:
    costs = {}
    for item in items or []:
        key, _, value = item.partition("=")
        if not value:
            raise SystemExit(f"bad --step-cost {item!r}, expected CLASS=N")
        costs[key] = int(value)
    return costs


def cmd_check(args) -> int:
    status = 0
    for path in args.paths:
        try:
            spec = _load_spec(path)
        except DmikitError as e:
            print(f"{path}: {e}")
            status = 1
            continue
        diagnostics = dsl.check(spec)
        for d in diagnostics:
            print(d)
        if diagnostics:
            status = 1
        else:
            print(f"{path}: ok "
                  f"({len(spec.classes())} classes, {len(spec.actions())} actions)")
    return status


def cmd_run(args) -> int:
    config = RunConfig(strict_asserts=args.strict,
                       step_costs=_parse_step_costs(args.step_cost))
    if args.path in ("production-cell", "cell"):
        model = cellmod.build_cell()
    else:
        model = cellmod.CellModel(
            compiled=dsl.compile_spec(_load_spec(args.path)),
            binding_table=None)
    plan = _load_plan(args.plan)
    try:
        run = cellmod.run_cell(model, seed=args.seed, plan=plan,
                               max_steps=args.steps, plates_in=args.plates,
                               config=config)
    except StrictAssertStop as e:
        print(f"stopped: assertion failed: {e}")
        return 3

    out = Path(args.out)
    run.log.write(out)
    outcomes = [str(r.outcome) for r in run.results]
    print(f"steps: {len(run.results)}")
    print(f"events: {len(run.log.records)} -> {out}")
    for kind in sorted(set(outcomes)):
        print(f"  outcome {kind}: {outcomes.count(kind)}")
    safety = cellmod.check_safety(run.log.records)
    liveness = cellmod.check_liveness(run.log.records, budget=args.budget)
    print(f"plates: in={run.tracker.spawned} out={run.tracker.exited} "
          f"resident={len(run.tracker.resident_plates())}")
    print(f"safety violations: {len(safety)}")
    for v in safety[:10]:
        print(f"  {v}")
    print(f"liveness violations: {len(liveness)}")
    for v in liveness[:10]:
        print(f"  {v}")
    if args.figure:
        fig_path = out.with_suffix(".png")
        _timeline_figure(run, fig_path)
        print(f"figure: {fig_path}")
    return 0 if not safety else 1


def _timeline_figure(run, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = sorted({r.action for r in run.results})
    lanes = {n: i for i, n in enumerate(names)}
    fig, ax = plt.subplots(figsize=(8, 0.4 * len(names) + 1.6))
    for res in run.results:
        rec = res.record
        y = lanes[res.action]
        color = {"Normal": "tab:green", "Exceptional": "tab:orange",
                 "Abort": "tab:red", "Failure": "black"}[rec.outcome.kind]
        ax.plot([rec.entered_at, rec.done_at], [y, y], color=color, lw=3,
                solid_capstyle="butt")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("virtual time (ticks)")
    ax.set_title("Activation timeline")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cmd_bench(args) -> int:
    counts = [int(n) for n in args.participants.split(",")]
    results = benchmod.run_bench(participant_counts=counts,
                                 samples=args.samples, seed=args.seed)
    for line in benchmod.table_lines(results):
        print(line)
    out = Path(args.out)
    benchmod.write_table(results, out)
    print(f"table: {out}")
    if args.figure:
        fig_path = out.with_suffix(".png")
        benchmod.write_figure(results, fig_path)
        print(f"figure: {fig_path}")
    return 0


def cmd_serve(args) -> int:
    from .service import SimulationService, serve

    plan_text = ""
    if args.plan:
        p = Path(args.plan)
        plan_text = p.read_text() if p.exists() else cellmod.plan_source(
            args.plan if args.plan.endswith(".plan") else args.plan + ".plan")
    config = RunConfig(strict_asserts=args.strict,
                       step_costs=_parse_step_costs(args.step_cost))
    source = None if args.path in ("production-cell", "cell") \
        else Path(args.path).read_text(encoding="utf-8")
    service = SimulationService(source=source, seed=args.seed,
                                plan_text=plan_text, config=config,
                                plates=args.plates,
                                ticks_per_second=args.rate)
    try:
        server = serve(service, args.port)
    except OSError as e:
        print(f"cannot bind port {args.port}: {e}", file=sys.stderr)
        return 1
    print(f"serving on http://127.0.0.1:{args.port} "
          f"(paused; POST /control cmd=resume to start)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
        server.server_close()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dmikit",
        description="Dependable multiparty interactions: check, run, "
                    "benchmark, and serve action-system models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="parse and check .disco sources")
    p_check.add_argument("paths", nargs="+",
                         help=".disco files or 'production-cell'")
    p_check.set_defaults(fn=cmd_check)

    p_run = sub.add_parser("run", help="run a model, write the event log")
    p_run.add_argument("path", nargs="?", default="production-cell")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--plan", help="fault plan file or built-in name")
    p_run.add_argument("--steps", type=int, default=200)
    p_run.add_argument("--plates", type=int, default=1)
    p_run.add_argument("--budget", type=int, default=150,
                       help="liveness budget in activations")
    p_run.add_argument("--strict", action="store_true",
                       help="stop the system on unannotated assert failure")
    p_run.add_argument("--step-cost", action="append", metavar="CLASS=N",
                       help="virtual ticks per body step for a device class")
    p_run.add_argument("--out", default="events.log")
    p_run.add_argument("--figure", action="store_true",
                       help="render an activation timeline next to the log")
    p_run.set_defaults(fn=cmd_run)

    p_bench = sub.add_parser("bench", help="latency benchmark and figure")
    p_bench.add_argument("--participants", default="2,4,8,16")
    p_bench.add_argument("--samples", type=int, default=30)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="bench.tsv")
    p_bench.add_argument("--figure", dest="figure", action="store_true",
                         default=True)
    p_bench.add_argument("--no-figure", dest="figure", action="store_false")
    p_bench.set_defaults(fn=cmd_bench)

    p_serve = sub.add_parser("serve", help="run the live service")
    p_serve.add_argument("path", nargs="?", default="production-cell")
    p_serve.add_argument("--port", type=int, default=8642)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--plan")
    p_serve.add_argument("--plates", type=int, default=0)
    p_serve.add_argument("--rate", type=float, default=10.0,
                         help="virtual ticks per wall second")
    p_serve.add_argument("--strict", action="store_true")
    p_serve.add_argument("--step-cost", action="append", metavar="CLASS=N")
    p_serve.set_defaults(fn=cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
