"""Shared fixtures: a small three-role interaction over real external objects.

The scenario mirrors the table-loading step of the production cell: a
traffic light, a feed belt, and a rotary table cooperate; the belt and the
table can fail concurrently, and a common-ancestor handler recovers.
"""

import pytest

from dmikit import coordination as co
from dmikit import interaction as ia
from dmikit.hierarchy import build_hierarchy
from dmikit.objects import ExternalObject, ObjectStore


def belt_table_hierarchy(interrupt_under_common=True):
    edges = [
        ("FeedBeltTable", "Exception"),
        ("FeedBeltStuck", "FeedBeltTable"),
        ("TableAngle", "FeedBeltTable"),
        ("LampDark", "Exception"),
    ]
    if interrupt_under_common:
        edges.append(("InterruptedException", "FeedBeltTable"))
    return build_hierarchy(edges)


def cell_store() -> ObjectStore:
    store = ObjectStore()
    store.add(ExternalObject("tf1", {"light": "red"}, {"light": ["green", "red"]}))
    store.add(ExternalObject("fb", {"load": "loaded"},
                             {"load": ["free", "loaded", "error"]}))
    store.add(ExternalObject(
        "t",
        {"pos": "pos_feedbelt", "height": "lower", "load": "free"},
        {"pos": ["pos_feedbelt", "pos_robot", "pos_error"],
         "height": ["lower", "upper"],
         "load": ["free", "loaded"]}))
    return store


def p(name, state):
    return ia.StateIs((name,), state)


def load_table_def(hierarchy=None, handlers=None, default_handler=None,
                   post=True, bodies=None):
    h = hierarchy or belt_table_hierarchy()
    guard = ia.And((p("tf1", "red"), p("fb", "loaded"), p("t", "free")))
    if bodies is None:
        bodies = {
            "tf1": [ia.StateTransition(("tf1",), "green")],
            "fb": [ia.StateTransition(("fb",), "free", attached="FeedBeltStuck")],
            "t": [ia.StateTransition(("t",), "lower"),
                  ia.StateTransition(("t",), "pos_feedbelt", attached="TableAngle"),
                  ia.StateTransition(("t",), "loaded")],
        }
    post_pred = None
    if post:
        post_pred = (ia.And((p("t", "lower"), p("t", "pos_feedbelt"),
                             p("t", "loaded"), p("fb", "free"),
                             p("tf1", "green"))), None)
    return ia.define_interaction(
        "LoadTable",
        roles=[("tf1", "TrafficLight"), ("fb", "FeedBelt"), ("t", "Table")],
        guard=guard,
        bodies=bodies,
        post=post_pred,
        handlers=handlers,
        default_handler=default_handler,
        hierarchy=h,
    )


def recovery_bodies():
    """Common-ancestor handler: light green, plate back on belt, table parked."""
    return {
        "tf1": [ia.StateTransition(("tf1",), "green")],
        "fb": [ia.StateTransition(("fb",), "loaded")],
        "t": [ia.StateTransition(("t",), "free"),
              ia.StateTransition(("t",), "pos_error")],
    }


@pytest.fixture
def store():
    return cell_store()


def make_coordinator(store, plan=None, config=None, **kw):
    cfg = config or co.RunConfig()
    return co.Coordinator(store=store, config=cfg, plan=plan, **kw)


def raise_when_running(coord, rec, role, exception):
    """Raise from a role at the first tick after the bodies have started."""
    def attempt():
        if rec.done:
            return
        if rec.phase == ia.RUNNING_NORMAL:
            mgr_group = coord.groups[rec.activation_id]
            manager = mgr_group.managers[mgr_group.by_role[role]]
            if manager.raised is None:
                ia.raise_in_role(rec, role, exception)
            return
        coord.scheduler.after(1, attempt)
    coord.scheduler.after(1, attempt)
