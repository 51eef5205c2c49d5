"""Live simulation service: the control panel's server side.

The simulation advances on a background thread, paced by a virtual-tick
rate. Every mutation (pause, resume, step, reset, plate and fault
injection) travels through one command queue drained between steps, so
API readers only ever observe committed state: GET /state serves the
store's atomic snapshot and GET /events serves the append-only log.

Endpoints (text bodies, one `key=value` record per line):

    GET  /state            committed (object, group, state) triples
    GET  /actions          activation records, newest last
    GET  /events?since=N   event log records with seq >= N
    POST /plates           add one plate if the entry light is green
    POST /faults           schedule fault records, effective immediately
    POST /control          cmd=pause | resume | step [n=K] | reset
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import cell as cellmod
from .coordination import RunConfig
from .errors import DmikitError
from .faults import parse_fault_line


@dataclass
class _Command:
    kind: str
    payload: dict = field(default_factory=dict)
    done: threading.Event = field(default_factory=threading.Event)
    result: object = None
    error: str | None = None

    def finish(self, result=None, error=None):
        self.result = result
        self.error = error
        self.done.set()


class SimulationService:
    """Owns one cell run and serializes every mutation through a queue."""

    def __init__(self, source: str | None = None, seed: int = 0,
                 plan_text: str = "", config: RunConfig | None = None,
                 plates: int = 0, ticks_per_second: float = 10.0,
                 heartbeat_every: int = 5):
        self.source = source
        self.seed = seed
        self.plan_text = plan_text
        self.config = config
        self.plates = plates
        self.ticks_per_second = ticks_per_second
        self.heartbeat_every = heartbeat_every
        self.model = cellmod.build_cell(source)
        self.commands: "queue.Queue[_Command]" = queue.Queue()
        self.paused = True
        self.pending_steps = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._build_run()

    # -- lifecycle -----------------------------------------------------------

    def _build_run(self) -> None:
        from .faults import parse_fault_plan
        self.run = cellmod.CellRun(model=self.model, interp=None,
                                   tracker=cellmod.PlateTracker(),
                                   plates_in=self.plates)
        tracker = self.run.tracker
        run = self.run

        def gate(name, binding):
            if name == "AddPlate":
                return tracker.spawned < run.plates_in
            return True

        from .dsl.run import Interpreter
        self.run.interp = Interpreter(self.model.compiled, seed=self.seed,
                                      plan=parse_fault_plan(self.plan_text),
                                      config=self.config,
                                      binding_table=self.model.binding_table,
                                      candidate_filter=gate)
        self._cursor = 0

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    # -- the single mutation thread ----------------------------------------------

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                cmd = self.commands.get(timeout=0.02)
                self._apply(cmd)
                continue
            except queue.Empty:
                pass
            if self.paused and self.pending_steps == 0:
                continue
            self._step_once()

    def _apply(self, cmd: _Command) -> None:
        try:
            if cmd.kind == "pause":
                self.paused = True
                cmd.finish("paused")
            elif cmd.kind == "resume":
                self.paused = False
                cmd.finish("running")
            elif cmd.kind == "step":
                self.pending_steps += int(cmd.payload.get("n", 1))
                cmd.finish("stepping")
            elif cmd.kind == "reset":
                self._build_run()
                self.paused = True
                self.pending_steps = 0
                cmd.finish("reset")
            elif cmd.kind == "plate":
                state = self.run.interp.system_state()
                if state["tf1"]["green"] != "green":
                    cmd.finish(error="entry light is red")
                else:
                    self.run.plates_in += 1
                    cmd.finish(f"plates={self.run.plates_in}")
            elif cmd.kind == "fault":
                applied = []
                now = self.run.interp.coordinator.scheduler.now
                for record in cmd.payload["records"]:
                    record.at = max(record.at, now)
                    self.run.interp.coordinator.plan.add(record)
                    applied.append(record.at)
                cmd.finish("scheduled " +
                           " ".join(f"at={t}" for t in applied))
            else:
                cmd.finish(error=f"unknown command {cmd.kind}")
        except Exception as e:            # the loop must survive bad input
            cmd.finish(error=str(e))

    def _step_once(self) -> None:
        interp = self.run.interp
        before = interp.coordinator.scheduler.now
        res = interp.step()
        fresh = interp.log.since(self._cursor)
        self._cursor += len(fresh)
        self.run.tracker.feed(fresh)
        if res is None:
            if self.pending_steps:
                self.pending_steps -= 1
            time.sleep(0.05)
            return
        self.run.results.append(res)
        if self.pending_steps:
            self.pending_steps -= 1
        if self.heartbeat_every and len(self.run.results) % self.heartbeat_every == 0:
            interp.log.emit(interp.coordinator.scheduler.now, "Heartbeat",
                            detail=f"steps={len(self.run.results)}")
            self._cursor += 1
        if not self.paused and self.ticks_per_second > 0:
            delta = interp.coordinator.scheduler.now - before
            time.sleep(delta / self.ticks_per_second)

    # -- API used by the HTTP layer (and tests, in process) --------------------------

    def submit(self, kind: str, timeout: float = 5.0, **payload):
        cmd = _Command(kind=kind, payload=payload)
        self.commands.put(cmd)
        if not cmd.done.wait(timeout):
            raise TimeoutError(kind)
        return cmd

    def state_lines(self) -> list[str]:
        version, snap = self.run.interp.store.snapshot()
        tick = self.run.interp.coordinator.scheduler.now
        lines = [f"# version={version} tick={tick} "
                 f"paused={int(self.paused)} plates={self.run.plates_in}"]
        for obj, groups in snap.items():
            for group, state in sorted(groups.items()):
                lines.append(f"object={obj} group={group} state={state}")
        return lines

    def action_lines(self) -> list[str]:
        lines = []
        for res in self.run.results[-200:]:
            rec = res.record
            binding = ",".join(f"{r}:{o}" for r, o in sorted(rec.binding.items()))
            lines.append(
                f"activation={rec.activation_id} interaction={rec.interaction} "
                f"phase={rec.phase} outcome={rec.outcome or '-'} "
                f"participants={binding}")
        return lines

    def event_lines(self, since: int = 0) -> list[str]:
        return [r.line() for r in self.run.interp.log.since(since)]


class _Handler(BaseHTTPRequestHandler):
    service: SimulationService = None

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, text: str) -> None:
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> str:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length).decode("utf-8") if length else ""

    def do_GET(self):
        url = urlparse(self.path)
        svc = self.service
        if url.path == "/state":
            self._send(200, "\n".join(svc.state_lines()) + "\n")
        elif url.path == "/actions":
            self._send(200, "\n".join(svc.action_lines()) + "\n")
        elif url.path == "/events":
            since = int(parse_qs(url.query).get("since", ["0"])[0])
            self._send(200, "\n".join(svc.event_lines(since)) + "\n")
        else:
            self._send(404, "unknown path\n")

    def do_POST(self):
        url = urlparse(self.path)
        svc = self.service
        try:
            if url.path == "/plates":
                cmd = svc.submit("plate")
                if cmd.error:
                    self._send(409, cmd.error + "\n")
                else:
                    self._send(200, str(cmd.result) + "\n")
            elif url.path == "/faults":
                records = []
                for line in self._body().splitlines():
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    records.append(parse_fault_line(line))
                if not records:
                    self._send(400, "no fault records in body\n")
                    return
                errors = self._validate_faults(records)
                if errors:
                    self._send(400, "\n".join(errors) + "\n")
                    return
                cmd = svc.submit("fault", records=records)
                self._send(200, str(cmd.result) + "\n")
            elif url.path == "/control":
                fields = dict(part.split("=", 1)
                              for part in self._body().split() if "=" in part)
                kind = fields.pop("cmd", "")
                if kind not in ("pause", "resume", "step", "reset"):
                    self._send(400, f"unknown control {kind!r}\n")
                    return
                cmd = svc.submit(kind, **fields)
                self._send(200, str(cmd.result) + "\n")
            else:
                self._send(404, "unknown path\n")
        except (ValueError, DmikitError) as e:
            self._send(400, f"{e}\n")

    def _validate_faults(self, records) -> list[str]:
        svc = self.service
        errors = []
        hierarchy = svc.model.compiled.hierarchy
        role_keys = {f"{name}.{role}"
                     for name, d in svc.model.compiled.defs.items()
                     for role, _ in d.roles}
        for r in records:
            if r.target_scope in ("role", "manager"):
                if r.target_name not in role_keys:
                    errors.append(f"unknown role target {r.target}")
            elif r.target_scope == "object":
                if r.target_name not in svc.model.compiled.object_classes:
                    errors.append(f"unknown object target {r.target}")
            else:
                errors.append(f"bad target scope {r.target}")
            if r.exception and r.exception != "RollbackFailure" \
                    and r.exception not in hierarchy:
                errors.append(f"unknown exception {r.exception}")
        return errors


def serve(service: SimulationService, port: int,
          host: str = "127.0.0.1") -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    service.start()
    return server
