"""Hypothesis strategies for small knowledge graphs, built without the generator."""

from hypothesis import strategies as st

from bkbsearch.model import KnowledgeGraph, Support, inode_id


@st.composite
def small_graphs(draw, max_vars=4, max_states=3, max_supports=8, integer_weights=False):
    """Arbitrary, possibly cyclic graphs that pass every blocking rule."""
    n_vars = draw(st.integers(1, max_vars))
    variables = {f"x{j}": [f"v{i}" for i in range(draw(st.integers(1, max_states)))] for j in range(n_vars)}
    inodes = [inode_id(var, s) for var, states in variables.items() for s in states]
    weight = st.integers(1, 9).map(float) if integer_weights else st.floats(0.1, 9.0).map(lambda w: round(w, 2))
    supports = []
    for n in range(draw(st.integers(1, max_supports))):
        head = draw(st.sampled_from(inodes))
        others = [var for var in variables if var != head.split("=")[0]]
        tail_vars = draw(st.lists(st.sampled_from(others), unique=True, max_size=min(2, len(others)))) if others else []
        tail = tuple(inode_id(v, draw(st.sampled_from(variables[v]))) for v in tail_vars)
        supports.append(Support(f"s{n}", tail, head, draw(weight)))
    return KnowledgeGraph.build(variables, supports)


def evidence_for(graph, data):
    return data.draw(st.sampled_from(graph.inodes), label="evidence")
