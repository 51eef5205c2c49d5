"""Parsing, checking, printing, compiling, and interpreting `.disco` sources."""

import importlib.resources as resources

import pytest

from dmikit import dsl
from dmikit import interaction as ia
from dmikit.coordination import RunConfig
from dmikit.errors import DslSyntaxError, StrictAssertStop
from dmikit.faults import parse_fault_plan


def model_text(name: str) -> str:
    return (resources.files("dmikit") / "models" / name).read_text()


@pytest.fixture(scope="module")
def basic_spec():
    return dsl.parse(model_text("table_basic.disco"), "table_basic.disco")


@pytest.fixture(scope="module")
def extended_spec():
    return dsl.parse(model_text("table_extended.disco"), "table_extended.disco")


# -- parsing ---------------------------------------------------------------------

def test_basic_table_class_shape(basic_spec):
    table = basic_spec.classes()["Table"]
    assert len(table.groups) == 3
    assert table.groups[0].initials == ("pos_feedbelt",)
    assert table.groups[1].states == ("lower", "upper")


def test_extended_table_class_has_exceptions(extended_spec):
    table = extended_spec.classes()["Table"]
    names = [e.name for e in table.exceptions]
    assert names == ["lower_sensor", "upper_sensor", "plate_sensor", "angle"]
    angle = table.exceptions[-1]
    assert str(angle.parent) == "FeedBeltTable"


def test_extended_action_is_split_with_post_annotation(extended_spec):
    act = extended_spec.actions()["LoadTable"]
    assert act.split
    assert [b.role for b in act.by_clauses] == ["tf1", "fb", "t"]
    assert str(act.assert_clause.attached) == "post-condition"
    t_steps = act.by_clauses[2].steps
    assert str(t_steps[1].target) == "t.pos_feedbelt"
    assert str(t_steps[1].attached) == "t.angle"


def test_basic_action_single_body(basic_spec):
    act = basic_spec.actions()["UnloadTable"]
    assert not act.split
    assert act.roles == (("t", "Table"), ("r", "Robot"))
    assert len(act.body) == 3


def test_unicode_operators_parse_like_ascii():
    a = dsl.parse("class C is state *x, y; end;\n"
                  "action A by c:C is when c.x ∧ ¬c.y do → c.y; end;")
    b = dsl.parse("class C is state *x, y; end;\n"
                  "action A by c:C is when c.x and not c.y do -> c.y; end;")
    assert a == b


def test_syntax_error_carries_location():
    with pytest.raises(DslSyntaxError) as err:
        dsl.parse("class is end;")
    assert err.value.line == 1


# -- checking ----------------------------------------------------------------------

def test_paper_listings_check_clean(basic_spec, extended_spec):
    assert dsl.check(basic_spec) == []
    assert dsl.check(extended_spec) == []


def test_two_initial_states_flagged():
    spec = dsl.parse("class C is state *a, *b; end;")
    diags = dsl.check(spec)
    assert any(d.code == "InitialStateCount" for d in diags)


def test_handler_for_undeclared_exception_flagged(extended_spec):
    src = model_text("table_extended.disco") + (
        "\nhandling action LoadTable for t.bogus is\n"
        "by tf1:TrafficLight;\nby fb:FeedBelt;\nby t:Table\nend;\n")
    diags = dsl.check(dsl.parse(src))
    assert any(d.code == "UnknownException" for d in diags)


def test_handler_missing_role_flagged():
    src = model_text("table_extended.disco") + (
        "\nhandling action LoadTable for t.plate_sensor is\n"
        "by tf1:TrafficLight;\n  -> tf1.green;\n"
        "by t:Table\n  -> t.free;\nend;\n")
    diags = dsl.check(dsl.parse(src))
    assert any(d.code == "HandlerRoleMismatch" for d in diags)


def test_diagnostic_format():
    spec = dsl.parse("class C is state *a, *b; end;", source_name="m.disco")
    d = dsl.check(spec)[0]
    assert str(d).startswith("m.disco:1:12: InitialStateCount:")


# -- printing round trip --------------------------------------------------------------

@pytest.mark.parametrize("name", ["table_basic.disco", "table_extended.disco",
                                  "production_cell.disco"])
def test_print_reparse_round_trip(name):
    spec = dsl.parse(model_text(name), name)
    printed = dsl.print_spec(spec)
    again = dsl.parse(printed, name)
    assert again == spec
    assert dsl.print_spec(again) == printed


# -- compiling and stepping --------------------------------------------------------------

MINI = """
exceptions BeltFault;

class TrafficLight is
  state *green, red;
end;

class FeedBelt is
  state *free, loaded, error;
  exceptions stuck :: BeltFault;
end;

tf: TrafficLight;
fb: FeedBelt;

action AddPlate is
when tf.green and fb.free do
by tf:TrafficLight;
  -> tf.red;
by fb:FeedBelt;
  -> fb.loaded :: fb.stuck;
end;

action Drain is
when fb.loaded do
by fb:FeedBelt;
  -> fb.free;
end;

action ResetLight is
when tf.red and fb.free do
by tf:TrafficLight;
  -> tf.green;
by fb:FeedBelt;
end;

handling action AddPlate for fb.stuck is
by tf:TrafficLight;
  -> tf.red;
by fb:FeedBelt;
  -> fb.error;
end;
"""


def mini_interp(seed=0, plan=None, config=None):
    compiled = dsl.compile_spec(dsl.parse(MINI))
    return dsl.Interpreter(compiled, seed=seed, plan=plan, config=config)


def test_compiled_hierarchy_qualifies_class_exceptions():
    compiled = dsl.compile_spec(dsl.parse(MINI))
    assert compiled.hierarchy.parent["FeedBelt.stuck"] == "BeltFault"


def test_enabled_actions_initial_state():
    interp = mini_interp()
    names = {name for name, _ in interp.enabled()}
    assert names == {"AddPlate"}


def test_step_cycle_runs_deterministically():
    results = [r.action for r in mini_interp(seed=7).run(9)]
    again = [r.action for r in mini_interp(seed=7).run(9)]
    assert results == again
    assert results[:3] == ["AddPlate", "Drain", "ResetLight"]


def test_quiescence_returns_none():
    interp = mini_interp()
    interp.candidate_filter = lambda name, binding: False
    assert interp.step() is None


def test_injected_fault_fires_attached_exception_and_handler():
    plan = parse_fault_plan(
        "at=0 kind=inject target=role:AddPlate.fb exception=FeedBelt.stuck\n")
    interp = mini_interp(plan=plan)
    res = interp.step()
    assert res.action == "AddPlate"
    assert res.record.raised == {"fb": "FeedBelt.stuck"}
    assert res.outcome == ia.Outcome.normal()
    assert interp.system_state()["fb"]["free"] == "error"


def test_empty_plan_never_fires_attached_exceptions():
    interp = mini_interp(seed=3)
    results = interp.run(50)
    assert all(r.record.raised == {} for r in results)


def test_variable_participants_enumerated():
    src = MINI + "\ntf2: TrafficLight;\n"
    compiled = dsl.compile_spec(dsl.parse(src))
    state = dsl.build_store(src and compiled.spec).snapshot()[1]
    enabled = dsl.enabled_actions(compiled, state)
    add_bindings = [b for name, b in enabled if name == "AddPlate"]
    assert {b["tf"] for b in add_bindings} == {"tf", "tf2"}


def test_scheduler_fairness_over_seeds():
    src = """
class C is
  state *on, off;
end;
a, b, c: C;

action X is
when a.on do
by a:C;
end;

action Y is
when b.on do
by b:C;
end;

action Z is
when c.on do
by c:C;
end;
"""
    compiled = dsl.compile_spec(dsl.parse(src))
    interp = dsl.Interpreter(compiled, seed=11)
    seen = set()
    for _ in range(200):
        res = interp.step()
        seen.add(res.action)
        if seen == {"X", "Y", "Z"}:
            break
    assert seen == {"X", "Y", "Z"}


def test_strict_assert_stop():
    src = """
class C is
  state *on, off;
end;
a: C;

action Break is
when a.on do
by a:C;
  -> a.off;
assert a.on
end;
"""
    compiled = dsl.compile_spec(dsl.parse(src))
    interp = dsl.Interpreter(compiled, config=RunConfig(strict_asserts=True))
    with pytest.raises(StrictAssertStop):
        interp.step()


def test_conditional_steps_execute_by_predicate():
    src = """
class C is
  state *cold, warm, hot;
end;
a: C;

action Heat is
when a.cold or a.warm do
by a:C;
  if a.cold then
    -> a.warm;
  else
    -> a.hot;
  end;
end;
"""
    compiled = dsl.compile_spec(dsl.parse(src))
    interp = dsl.Interpreter(compiled)
    interp.step()
    assert interp.system_state()["a"]["cold"] == "warm"
    interp.step()
    assert interp.system_state()["a"]["cold"] == "hot"
