"""Event log format, replay, the HTTP service, and the CLI surfaces."""

import threading
import time
import urllib.request

import pytest

from dmikit import cell as cellmod
from dmikit import cli
from dmikit.events import EventLog, load_log, parse_line, replay_states
from dmikit.service import SimulationService, serve


# -- event log ------------------------------------------------------------------

def test_record_line_round_trip():
    log = EventLog()
    log.emit(3, "Resolved", activation=7, exception="FeedBeltTable")
    line = log.lines()[0]
    assert line == "seq=0 t=3 kind=Resolved activation=7 exception=FeedBeltTable"
    rec = parse_line(line)
    assert rec.seq == 0 and rec.t == 3 and rec.kind == "Resolved"
    assert rec.payload["exception"] == "FeedBeltTable"


def test_seq_strictly_increasing_and_outcome_preceded_by_entry():
    run = cellmod.run_cell(seed=2, plates_in=2, max_steps=60)
    records = run.log.records
    assert [r.seq for r in records] == list(range(len(records)))
    entered = set()
    for r in records:
        if r.kind == "ActionEntered":
            entered.add(r.payload["activation"])
        elif r.kind == "Outcome":
            assert r.payload["activation"] in entered


def test_replay_reproduces_final_state(tmp_path):
    run = cellmod.run_cell(seed=4, plates_in=3, max_steps=80)
    path = tmp_path / "events.log"
    run.log.write(path)
    initial = cellmod.build_cell().compiled.build_store().snapshot()[1]
    replayed = replay_states(load_log(path), initial)
    assert replayed == run.state()


# -- service ----------------------------------------------------------------------

@pytest.fixture
def service_url():
    svc = SimulationService(seed=1, plates=0, ticks_per_second=0,
                            heartbeat_every=0)
    server = serve(svc, port=0)
    port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{port}", svc
    server.shutdown()
    svc.stop()
    server.server_close()


def _get(url: str) -> tuple[int, str]:
    with urllib.request.urlopen(url) as resp:
        return resp.status, resp.read().decode()


def _post(url: str, body: str = "") -> tuple[int, str]:
    req = urllib.request.Request(url, data=body.encode(), method="POST")
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as e:
        return e.code, e.read().decode()


def test_state_serves_committed_triples(service_url):
    url, _ = service_url
    status, text = _get(url + "/state")
    assert status == 200
    lines = text.strip().splitlines()
    assert lines[0].startswith("# version=")
    assert "object=tf1 group=green state=green" in lines


def test_add_plate_gated_by_entry_light(service_url):
    url, svc = service_url
    status, text = _post(url + "/plates")
    assert status == 200 and text.strip() == "plates=1"
    # drive the cell until the light turns red (plate added, not yet loaded)
    _post(url + "/control", "cmd=step n=1")
    deadline = time.time() + 5
    while time.time() < deadline:
        _, state = _get(url + "/state")
        if "object=tf1 group=green state=red" in state:
            break
        time.sleep(0.02)
    status, text = _post(url + "/plates")
    assert status == 409


def test_step_contract_advances_exactly_n(service_url):
    url, svc = service_url
    _post(url + "/plates")
    before = len(svc.run.results)
    _post(url + "/control", "cmd=step n=3")
    deadline = time.time() + 5
    while len(svc.run.results) < before + 3 and time.time() < deadline:
        time.sleep(0.02)
    assert len(svc.run.results) == before + 3
    _, actions = _get(url + "/actions")
    assert "interaction=AddPlate" in actions


def test_fault_post_validation(service_url):
    url, _ = service_url
    status, text = _post(url + "/faults",
                         "at=0 kind=inject target=role:LoadTable.t "
                         "exception=Table.bogus")
    assert status == 400
    status, text = _post(url + "/faults",
                         "at=0 kind=inject target=role:Nope.t "
                         "exception=Table.angle")
    assert status == 400
    status, text = _post(url + "/faults",
                         "at=0 kind=inject target=role:LoadTable.t "
                         "exception=Table.angle")
    assert status == 200 and text.startswith("scheduled")


def test_injected_fault_drives_handler_through_service(service_url):
    url, svc = service_url
    _post(url + "/faults",
          "at=0 kind=inject target=role:LoadTable.t exception=Table.angle")
    _post(url + "/plates")
    _post(url + "/control", "cmd=step n=3")
    deadline = time.time() + 10
    seen = ""
    while time.time() < deadline:
        _, seen = _get(url + "/events?since=0")
        if "kind=Outcome" in seen and "kind=HandlerStarted" in seen:
            break
        time.sleep(0.05)
    assert "kind=Resolved" in seen and "exception=Table.angle" in seen
    _, state = _get(url + "/state")
    assert "object=t group=pos_feedbelt state=pos_error" in state


def test_events_cursor(service_url):
    url, _ = service_url
    _post(url + "/plates")
    _post(url + "/control", "cmd=step n=1")
    deadline = time.time() + 5
    while time.time() < deadline:
        _, text = _get(url + "/events?since=0")
        if text.strip():
            break
        time.sleep(0.02)
    n = len(text.strip().splitlines())
    _, tail = _get(f"{url}/events?since={n}")
    assert tail.strip() == ""
    _, again = _get(f"{url}/events?since={n - 1}")
    assert len(again.strip().splitlines()) == 1


def test_reset_restores_initial_state(service_url):
    url, _ = service_url
    _post(url + "/plates")
    _post(url + "/control", "cmd=step n=2")
    time.sleep(0.2)
    _post(url + "/control", "cmd=reset")
    deadline = time.time() + 5
    while time.time() < deadline:
        _, state = _get(url + "/state")
        if "object=tf1 group=green state=green" in state \
                and "object=fb group=free state=free" in state:
            break
        time.sleep(0.02)
    _, events = _get(url + "/events?since=0")
    assert events.strip() == ""


# -- cli --------------------------------------------------------------------------------

def test_cli_check_production_cell_ok(capsys):
    assert cli.main(["check", "production-cell"]) == 0
    out = capsys.readouterr().out
    assert "ok" in out and "12 actions" in out


def test_cli_check_bad_source(tmp_path, capsys):
    bad = tmp_path / "bad.disco"
    bad.write_text("class C is state *a, *b; end;")
    assert cli.main(["check", str(bad)]) == 1
    assert "InitialStateCount" in capsys.readouterr().out


def test_cli_run_writes_log_and_figure(tmp_path, capsys):
    out = tmp_path / "events.log"
    rc = cli.main(["run", "production-cell", "--seed", "3", "--plates", "2",
                   "--steps", "60", "--out", str(out), "--figure"])
    assert rc == 0
    assert out.exists()
    assert out.with_suffix(".png").exists()
    text = capsys.readouterr().out
    assert "safety violations: 0" in text


def test_cli_run_with_named_plan(tmp_path, capsys):
    out = tmp_path / "events.log"
    rc = cli.main(["run", "production-cell", "--plan", "table_angle",
                   "--steps", "20", "--out", str(out)])
    assert rc == 0
    assert "Exceptional" in capsys.readouterr().out or out.exists()


def test_cli_bench_writes_table_and_figure(tmp_path, capsys):
    out = tmp_path / "bench.tsv"
    rc = cli.main(["bench", "--participants", "2,4", "--samples", "5",
                   "--out", str(out)])
    assert rc == 0
    assert out.exists() and out.with_suffix(".png").exists()
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("variant\tparticipants")
    assert len(lines) == 1 + 2 * 3
