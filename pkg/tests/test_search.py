import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bkbsearch.heuristic import compute_cost_sharing, decompose, zero_table
from bkbsearch.model import DUMMY, KnowledgeGraph, Support
from bkbsearch.oracle import enumerate_inferences, min_weight_inference
from bkbsearch.search import (
    CONJUNCTION,
    COST_SHARING,
    COST_SO_FAR,
    HEURISTICS,
    InconsistentEvidence,
    TraceTable,
    cost_so_far,
    expand,
    find_best_inferences,
    frontier_cost,
    initial_state,
    prepare,
)

from .strategies import small_graphs

I1, I2, I3 = "i1=true", "i2=true", "i3=true"


def _setup(g, evidence, heuristic=COST_SHARING):
    _, target, aug, costs = prepare(g, evidence, heuristic)
    return aug, costs, target


def test_initial_state(fig3):
    aug, costs, _ = _setup(fig3, [I3])
    s0 = initial_state(aug, costs, [I3])
    assert s0.frontier == {(I3, DUMMY)}
    assert s0.cost == 3.0
    assert cost_so_far(s0) == 0.0


def test_initial_state_other_evidence(fig3):
    aug, costs, _ = _setup(fig3, [I1])
    assert initial_state(aug, costs, [I1]).cost == pytest.approx(2.0, abs=1e-9)


def test_inconsistent_evidence():
    g = KnowledgeGraph.build({"a": ["x", "y"]}, [Support("s1", (), "a=x", 1.0), Support("s2", (), "a=y", 1.0)])
    with pytest.raises(InconsistentEvidence):
        find_best_inferences(g, ["a=x", "a=y"])


def test_unknown_evidence(fig3):
    with pytest.raises(KeyError):
        find_best_inferences(fig3, ["zz=1"])


def test_table_iterations(fig3):
    aug, costs, _ = _setup(fig3, [I3])
    s0 = initial_state(aug, costs, [I3])
    (s1,) = expand(aug, costs, s0)
    assert s1.cost == 3.0
    assert s1.frontier == {(DUMMY, "s5"), (I1, "s5"), (I2, "s5")}
    succ = expand(aug, costs, s1)
    assert [(s.step[1], s.cost) for s in succ] == [("s1", 12.0), ("s2", 4.0), ("s4", 7.0), ("s3", 4.0)]
    s3 = succ[1]
    # s3 is blocked: its tail i1 is already expanded
    (s7,) = expand(aug, costs, s3)
    assert s7.step == (I2, "s4")
    assert s7.cost == 7.0
    assert cost_so_far(s7) == 7.0
    assert s7.is_goal


def test_dead_end():
    g = KnowledgeGraph.build(
        {"a": ["x"], "b": ["y"]}, [Support("s1", ("b=y",), "a=x", 1.0), Support("s2", ("a=x",), "b=y", 1.0)]
    )
    aug, costs, _ = _setup(g, ["a=x"])
    (s1,) = expand(aug, costs, initial_state(aug, costs, ["a=x"]))
    assert expand(aug, costs, s1) == []
    assert find_best_inferences(g, ["a=x"]).solutions == []


def test_best_inference(fig3):
    r = find_best_inferences(fig3, [I3])
    (sol,) = r.solutions
    assert sol.supports == ("s2", "s4", "s5")
    assert sol.weight == 7.0
    assert sol.stats.expanded == 4
    assert r.status == "complete"
    assert r.largest_component == 4


def test_second_best_matches_oracle(fig3):
    r = find_best_inferences(fig3, [I3], k=2)
    assert [s.supports for s in r.solutions] == [inf.key for inf in enumerate_inferences(fig3, [I3])[:2]]
    assert r.solutions[1].supports == ("s1", "s3", "s5")


@pytest.mark.parametrize("heuristic", HEURISTICS)
def test_all_inferences_in_order(fig3, heuristic):
    r = find_best_inferences(fig3, [I3], k=10, heuristic=heuristic)
    assert [s.weight for s in r.solutions] == [7.0, 12.0, 16.0]
    assert r.status == "exhausted"


def test_unsupportable_evidence():
    g = KnowledgeGraph.build({"a": ["x"], "b": ["y"]}, [Support("s", (), "a=x", 1.0)])
    r = find_best_inferences(g, ["b=y"])
    assert r.solutions == [] and r.status == "exhausted"


def test_trace_matches_table(fig3):
    trace = TraceTable(fig3)
    find_best_inferences(fig3, [I3], trace=trace)
    assert trace.pops() == ["S0", "S1", "S5", "S3", "S7"]
    assert trace.state_costs() == {
        "S0": "3", "S1": "3", "S2": "12", "S3": "4", "S4": "7", "S5": "4", "S6": "12", "S7": "7"
    }
    text = trace.render()
    assert text.splitlines()[0].split("\t") == list(TraceTable.header)
    assert "NONE" in text.splitlines()[-1]


def test_cost_so_far_run(fig3):
    r = find_best_inferences(fig3, [I3], heuristic=COST_SO_FAR)
    assert r.best.weight == 7.0
    assert r.best.state_cost == 7.0


def test_limits(fig3):
    r = find_best_inferences(fig3, [I3], max_states=1)
    assert r.status == "limit" and r.solutions == []
    r = find_best_inferences(fig3, [I3], max_seconds=0.0)
    assert r.status == "limit"
    with pytest.raises(ValueError):
        find_best_inferences(fig3, [I3], k=0)
    with pytest.raises(ValueError):
        find_best_inferences(fig3, [I3], heuristic="greedy")


def test_conjunctive_evidence(fig3):
    r = find_best_inferences(fig3, [I1, I2], k=10)
    assert all(CONJUNCTION not in s.supports for s in r.solutions)
    assert all({I1, I2} <= s.inference.inodes for s in r.solutions)
    assert [s.supports for s in r.solutions] == [i.key for i in enumerate_inferences(fig3, [I1, I2])]


def test_repeatable(fig3):
    a = find_best_inferences(fig3, [I3], k=3)
    b = find_best_inferences(fig3, [I3], k=3)
    assert [(s.supports, s.weight, s.stats) for s in a.solutions] == [(s.supports, s.weight, s.stats) for s in b.solutions]


# -- properties ----------------------------------------------------------------

_graphs = small_graphs(max_vars=5, max_supports=9)


@settings(max_examples=200, deadline=None)
@given(_graphs, st.data())
def test_first_solution_is_optimal(g, data):
    e = data.draw(st.sampled_from(g.inodes))
    best = min_weight_inference(g, [e])
    for h in HEURISTICS:
        r = find_best_inferences(g, [e], heuristic=h)
        if best is None:
            assert r.solutions == []
        else:
            assert r.best.weight == pytest.approx(best.weight, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(_graphs, st.data(), st.integers(1, 6))
def test_k_best_match_enumeration(g, data, k):
    e = data.draw(st.sampled_from(g.inodes))
    expect = [round(i.weight, 9) for i in enumerate_inferences(g, [e])[:k]]
    got = [round(s.weight, 9) for s in find_best_inferences(g, [e], k=k).solutions]
    assert got == expect


@settings(max_examples=150, deadline=None)
@given(_graphs, st.data())
def test_pop_costs_never_decrease(g, data):
    e = data.draw(st.sampled_from(g.inodes))
    r = find_best_inferences(g, [e], k=50)
    pops = r.pop_costs
    assert all(b >= a - 1e-9 for a, b in zip(pops, pops[1:]))


@settings(max_examples=100, deadline=None)
@given(_graphs, st.data())
def test_incremental_cost_matches_frontier(g, data):
    e = data.draw(st.sampled_from(g.inodes))
    aug, costs, target = _setup(g, [e])
    layer = [initial_state(aug, costs, [target])]
    for _ in range(6):
        nxt = []
        for s in layer:
            assert s.cost == pytest.approx(frontier_cost(s, costs), abs=1e-9)
            nxt.extend(expand(aug, costs, s))
        layer = nxt[:40]


@settings(max_examples=100, deadline=None)
@given(_graphs, st.data())
def test_goal_cost_is_weight(g, data):
    e = data.draw(st.sampled_from(g.inodes))
    for h in HEURISTICS:
        for sol in find_best_inferences(g, [e], k=4, heuristic=h).solutions:
            assert sol.state_cost == pytest.approx(sol.weight, abs=1e-9)


def test_zero_table_is_the_cost_so_far_table(fig3):
    aug = decompose(fig3, [I3])
    z = zero_table(fig3, [I3])
    assert all(z.edge_cost[(t, u)] == 0.0 for u in fig3.snodes for t in fig3.tail(u))
    assert compute_cost_sharing(fig3, [I3]).edge_cost[(DUMMY, "s1")] == z.edge_cost[(DUMMY, "s1")]
    assert aug.components
