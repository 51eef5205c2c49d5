"""Exception hierarchy construction and concurrent-raise resolution."""

import itertools
import random

import pytest
from hypothesis import given, strategies as st

from dmikit import hierarchy as hx
from dmikit.errors import CycleError, DuplicateName, ReservedNameViolation, UnknownException
from dmikit.hierarchy import build_hierarchy, is_ancestor, resolve


def belt_table_tree():
    """The three-user-node tree used by the concurrent-fault scenario."""
    return build_hierarchy([
        ("FeedBeltTable", "Exception"),
        ("FeedBeltStuck", "FeedBeltTable"),
        ("TableAngle", "FeedBeltTable"),
    ])


def test_empty_hierarchy_contains_reserved_ids():
    h = build_hierarchy([])
    assert h.ids() == set(hx.RESERVED)
    assert h.parent[hx.ABORT] == hx.ROOT
    assert h.parent[hx.FAILURE] == hx.ROOT


def test_user_tree_builds():
    h = belt_table_tree()
    assert h.parent["FeedBeltStuck"] == "FeedBeltTable"
    assert h.depth["TableAngle"] == 2


def test_cycle_detected():
    with pytest.raises(CycleError):
        build_hierarchy([("A", "B"), ("B", "A")])


def test_duplicate_name_rejected():
    with pytest.raises(DuplicateName):
        build_hierarchy([("A", "Exception"), ("A", "Exception")])


def test_children_of_abort_and_failure_rejected():
    with pytest.raises(ReservedNameViolation):
        build_hierarchy([("X", "Abort")])
    with pytest.raises(ReservedNameViolation):
        build_hierarchy([("X", "Failure")])


def test_redefining_root_or_severity_ids_rejected():
    for name in ("Exception", "Abort", "Failure"):
        with pytest.raises(ReservedNameViolation):
            build_hierarchy([(name, "Exception")])


def test_movable_reserved_ids_can_be_placed():
    h = build_hierarchy([
        ("FeedBeltTable", "Exception"),
        ("InterruptedException", "FeedBeltTable"),
    ])
    assert h.parent["InterruptedException"] == "FeedBeltTable"


def test_undeclared_parent_rejected():
    with pytest.raises(UnknownException):
        build_hierarchy([("A", "Nowhere")])


def test_resolve_concurrent_pair():
    h = belt_table_tree()
    assert resolve({"FeedBeltStuck", "TableAngle"}, h) == "FeedBeltTable"


def test_resolve_singleton_is_identity():
    h = belt_table_tree()
    for name in h.ids():
        if name not in hx.SEVERITY_IDS:
            assert resolve({name}, h) == name


def test_failure_takes_precedence_over_abort():
    h = belt_table_tree()
    assert resolve({"Failure", "Abort", "TableAngle"}, h) == "Failure"
    assert resolve({"Abort", "TableAngle"}, h) == "Abort"


def test_resolve_rejects_unknown():
    h = belt_table_tree()
    with pytest.raises(UnknownException):
        resolve({"NotDeclared"}, h)


def test_is_ancestor():
    h = belt_table_tree()
    assert is_ancestor(h, "Exception", "FeedBeltStuck")
    assert is_ancestor(h, "FeedBeltTable", "TableAngle")
    assert is_ancestor(h, "TableAngle", "TableAngle")
    assert not is_ancestor(h, "TableAngle", "FeedBeltStuck")
    with pytest.raises(UnknownException):
        is_ancestor(h, "Nope", "TableAngle")


# -- randomized comparison against an exhaustive-scan oracle ----------------------

def random_tree(rng: random.Random, n_user: int):
    names = [f"N{i}" for i in range(n_user)]
    edges = []
    pool = ["Exception"]
    for name in names:
        edges.append((name, rng.choice(pool)))
        pool.append(name)
    return build_hierarchy(edges)


def oracle_resolve(raised, h):
    """Scan every node, keep ancestors-of-all, pick the deepest."""
    if hx.FAILURE in raised:
        return hx.FAILURE
    if hx.ABORT in raised:
        return hx.ABORT
    best, best_depth = None, -1
    for node in h.ids():
        if all(is_ancestor(h, node, r) for r in raised):
            if h.depth[node] > best_depth:
                best, best_depth = node, h.depth[node]
    return best


def test_resolve_matches_oracle_on_random_trees():
    rng = random.Random(20260810)
    for _ in range(1000):
        h = random_tree(rng, rng.randint(1, 12))
        internals = sorted(h.ids() - hx.SEVERITY_IDS)
        k = rng.randint(1, min(4, len(internals)))
        raised = set(rng.sample(internals, k))
        if rng.random() < 0.2:
            raised.add(rng.choice([hx.ABORT, hx.FAILURE]))
        assert resolve(raised, h) == oracle_resolve(raised, h)


def test_severity_exhaustive_small_sets():
    h = belt_table_tree()
    ids = sorted(h.ids())
    for k in (1, 2, 3, 4):
        for combo in itertools.combinations(ids, k):
            raised = set(combo)
            if hx.FAILURE in raised:
                assert resolve(raised, h) == hx.FAILURE
            elif hx.ABORT in raised:
                assert resolve(raised, h) == hx.ABORT


# -- algebraic properties ------------------------------------------------------------

@st.composite
def tree_and_subset(draw):
    n = draw(st.integers(min_value=1, max_value=10))
    rng = random.Random(draw(st.integers(min_value=0, max_value=10_000)))
    h = random_tree(rng, n)
    internals = sorted(h.ids() - hx.SEVERITY_IDS)
    raised = draw(st.sets(st.sampled_from(internals), min_size=1, max_size=5))
    return h, raised


@given(tree_and_subset())
def test_resolution_is_ancestor_of_every_raise(case):
    h, raised = case
    r = resolve(raised, h)
    assert all(is_ancestor(h, r, x) for x in raised)


@given(tree_and_subset())
def test_resolution_permutation_invariant(case):
    h, raised = case
    ordered = sorted(raised)
    assert resolve(set(ordered), h) == resolve(set(reversed(ordered)), h)


@given(tree_and_subset())
def test_unrelated_subtree_does_not_change_resolution(case):
    h, raised = case
    user_edges = [(c, p) for c, p in h.edges() if c not in hx.RESERVED]
    grown = build_hierarchy(user_edges + [
        ("ZZunrelated", "Exception"), ("ZZleaf", "ZZunrelated")])
    assert resolve(raised, grown) == resolve(raised, h)
