"""Compilation to interaction definitions and the nondeterministic step loop."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .. import hierarchy as hx
from .. import interaction as ia
from ..coordination import Coordinator, RunConfig
from ..errors import DmikitError
from ..events import EventLog
from ..faults import FaultPlan
from ..objects import ExternalObject, ObjectStore
from . import ast
from .check import Resolver, check


class SpecError(DmikitError):
    """The spec has diagnostics and cannot be compiled."""

    def __init__(self, diagnostics):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass
class CompiledSpec:
    spec: ast.Spec
    hierarchy: hx.ExceptionHierarchy
    defs: dict[str, ia.InteractionDef]
    object_classes: dict[str, str]              # object id -> class name
    resolver: Resolver = field(repr=False, default=None)

    def build_store(self) -> ObjectStore:
        return build_store(self.spec, self.resolver)


def _compile_pred(r: Resolver, pred, roles) -> ia.Predicate:
    if isinstance(pred, ast.PredAtom):
        path, state, group = r.resolve_state_ref(pred.path, roles)
        return ia.StateIs(path=path, state=state, group=group)
    if isinstance(pred, ast.PredNot):
        return ia.Not(_compile_pred(r, pred.inner, roles))
    if isinstance(pred, ast.PredAnd):
        return ia.And(tuple(_compile_pred(r, t, roles) for t in pred.terms))
    if isinstance(pred, ast.PredOr):
        return ia.Or(tuple(_compile_pred(r, t, roles) for t in pred.terms))
    raise TypeError(pred)


def _compile_steps(r: Resolver, steps, roles) -> list:
    out = []
    for s in steps:
        if isinstance(s, ast.TransitionStmt):
            path, state, group = r.resolve_state_ref(s.target, roles)
            attached = (r.resolve_exception_ref(s.attached, roles)
                        if s.attached is not None else None)
            out.append(ia.StateTransition(path=path, state=state, group=group,
                                          attached=attached))
        elif isinstance(s, ast.IfStmt):
            out.append(ia.Conditional(
                predicate=_compile_pred(r, s.cond, roles),
                then_steps=tuple(_compile_steps(r, s.then_steps, roles)),
                else_steps=tuple(_compile_steps(r, s.else_steps, roles))))
    return out


def compile_spec(spec: ast.Spec) -> CompiledSpec:
    diagnostics = check(spec)
    if diagnostics:
        raise SpecError(diagnostics)
    r = Resolver(spec)
    hierarchy = hx.build_hierarchy([(c, p) for c, p, _ in r.hierarchy_edges()])

    handler_tables: dict[str, dict[str, dict[str, list]]] = {}
    default_tables: dict[str, dict[str, list]] = {}
    for h in spec.handlers():
        action = spec.actions()[h.action_name]
        roles = dict(action.roles)
        table = {b.role: _compile_steps(r, b.steps, roles) for b in h.by_clauses}
        if h.for_ref is None:
            default_tables[h.action_name] = table
        else:
            exc = r.resolve_exception_ref(h.for_ref, roles)
            handler_tables.setdefault(h.action_name, {})[exc] = table

    defs: dict[str, ia.InteractionDef] = {}
    for name, action in spec.actions().items():
        roles = dict(action.roles)
        if action.split:
            bodies = {b.role: _compile_steps(r, b.steps, roles)
                      for b in action.by_clauses}
        else:
            # single-block actions run their whole body in the first role
            first = action.roles[0][0]
            bodies = {first: _compile_steps(r, action.body, roles)}
        post = None
        if action.assert_clause is not None:
            a = action.assert_clause
            attached = None
            if a.attached is not None:
                attached = r.resolve_exception_ref(a.attached, roles)
            post = (_compile_pred(r, a.predicate, roles), attached)
        defs[name] = ia.define_interaction(
            name, roles=list(action.roles),
            guard=_compile_pred(r, action.when, roles),
            bodies=bodies, post=post,
            handlers=handler_tables.get(name),
            default_handler=default_tables.get(name),
            hierarchy=hierarchy)

    object_classes: dict[str, str] = {}

    def register(obj_id: str, cls_name: str) -> None:
        object_classes[obj_id] = cls_name
        for comp in r.classes[cls_name].components:
            for field_name in comp.names:
                register(f"{obj_id}.{field_name}", comp.class_name)

    for d in spec.objects():
        for obj_name in d.names:
            register(obj_name, d.class_name)

    return CompiledSpec(spec=spec, hierarchy=hierarchy, defs=defs,
                        object_classes=object_classes, resolver=r)


def build_store(spec: ast.Spec, resolver: Resolver | None = None) -> ObjectStore:
    r = resolver or Resolver(spec)
    store = ObjectStore()

    def instantiate(obj_id: str, cls_name: str, parent: str | None) -> None:
        cls = r.classes[cls_name]
        state = {g.name: g.initials[0] for g in cls.groups}
        groups = {g.name: list(g.states) for g in cls.groups}
        store.add(ExternalObject(obj_id, state, groups), parent=parent)
        for comp in cls.components:
            for field_name in comp.names:
                instantiate(f"{obj_id}.{field_name}", comp.class_name, obj_id)

    for d in spec.objects():
        for obj_name in d.names:
            instantiate(obj_name, d.class_name, None)
    return store


def candidate_bindings(compiled: CompiledSpec, definition: ia.InteractionDef,
                       binding_table=None):
    """All injective role -> object assignments with matching classes."""
    if binding_table is not None and definition.name in binding_table:
        yield from binding_table[definition.name]
        return
    pools = []
    for role, cls in definition.roles:
        pool = sorted(o for o, c in compiled.object_classes.items() if c == cls)
        pools.append((role, pool))

    def assign(i, used, acc):
        if i == len(pools):
            yield dict(acc)
            return
        role, pool = pools[i]
        for obj in pool:
            if obj in used:
                continue
            acc.append((role, obj))
            yield from assign(i + 1, used | {obj}, acc)
            acc.pop()

    yield from assign(0, frozenset(), [])


def enabled_actions(compiled: CompiledSpec, state: ia.SystemState,
                    binding_table=None, store: ObjectStore | None = None):
    """(action name, binding) pairs whose guard holds on free participants."""
    out = []
    for name in sorted(compiled.defs):
        definition = compiled.defs[name]
        for binding in candidate_bindings(compiled, definition, binding_table):
            if store is not None:
                busy = any(store[oid].lock_holder is not None
                           for obj in binding.values()
                           for oid in store.with_components(obj))
                if busy:
                    continue
            try:
                if ia.evaluate_guard(definition, state, binding):
                    out.append((name, binding))
            except DmikitError:
                continue
    return out


@dataclass
class StepResult:
    action: str
    binding: dict[str, str]
    outcome: ia.Outcome
    record: ia.ActivationRecord


class Interpreter:
    """Owns the system state and repeatedly fires one enabled action."""

    def __init__(self, compiled: CompiledSpec, seed: int = 0,
                 plan: FaultPlan | None = None, config: RunConfig | None = None,
                 binding_table=None, candidate_filter=None,
                 log: EventLog | None = None):
        self.compiled = compiled
        self.config = config or RunConfig()
        self.config.seed = seed
        self.store = compiled.build_store()
        self.coordinator = Coordinator(store=self.store, config=self.config,
                                       plan=plan, hierarchy=compiled.hierarchy,
                                       log=log)
        self.choice_rng = random.Random(seed)
        self.binding_table = binding_table
        self.candidate_filter = candidate_filter
        self.steps_taken = 0

    @property
    def log(self) -> EventLog:
        return self.coordinator.log

    def system_state(self) -> ia.SystemState:
        return self.store.snapshot()[1]

    def enabled(self):
        cands = enabled_actions(self.compiled, self.system_state(),
                                binding_table=self.binding_table,
                                store=self.store)
        if self.candidate_filter is not None:
            cands = [c for c in cands if self.candidate_filter(*c)]
        return cands

    def step(self) -> StepResult | None:
        """Fire one nondeterministically chosen enabled action; None when
        the system is quiescent."""
        cands = self.enabled()
        if not cands:
            return None
        name, binding = self.choice_rng.choice(cands)
        definition = self.compiled.defs[name]
        record = ia.activate(definition, binding, self.coordinator)
        outcome = ia.run_to_outcome(record)
        self.steps_taken += 1
        return StepResult(action=name, binding=binding, outcome=outcome,
                          record=record)

    def run(self, max_steps: int) -> list[StepResult]:
        results = []
        for _ in range(max_steps):
            res = self.step()
            if res is None:
                break
            results.append(res)
        return results
