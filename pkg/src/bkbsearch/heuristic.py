"""The cost-sharing heuristic on possibly cyclic knowledge graphs.

Each I-node cost is the cheapest of its supports, each S-node cost is its
weight plus the shares handed down by its tail, and an I-node hands each
child an equal share ``c(v) / k(v)`` where ``k(v)`` bounds how many of its
out-edges one inference can use.  On cycles these equations become a
system; its greatest solution is found one strongly connected component at
a time with a linear program that maximizes the summed I-node costs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from . import lp
from .graphs import has_cycle, tarjan
from .model import DUMMY, Edge, KnowledgeGraph

TOLERANCE = 1e-9


class CostSharingError(RuntimeError):
    def __init__(self, component: Sequence[str], status: str):
        super().__init__(f"linear program for component {sorted(component)} is {status}")
        self.component = tuple(component)
        self.status = status


@dataclass(frozen=True)
class AugmentedGraph:
    """A graph with its dummy edges and evidence-first component order."""

    base: KnowledgeGraph
    evidence: tuple[str, ...]
    dummy_edges: tuple[Edge, ...]
    components: tuple[tuple[str, ...], ...]
    component_of: dict[str, int] = field(repr=False)

    def largest_component(self) -> int:
        return max((len(c) for c in self.components), default=0)

    def is_cyclic(self) -> bool:
        return has_cycle(self.base.inodes + self.base.snodes, self.base.children)


@dataclass(frozen=True)
class CostTable:
    node_cost: dict[str, float]
    edge_cost: dict[Edge, float]
    fanout: dict[str, int]
    cap: float
    evidence: tuple[str, ...] = ()
    capped: frozenset[str] = frozenset()
    relaxed_components: tuple[int, ...] = ()

    def rows(self) -> list[tuple[str, str, float]]:
        """``(node_or_edge, id, cost)`` rows ordered by id."""
        out = [("node", n, c) for n, c in self.node_cost.items()]
        out += [("edge", f"{a}->{b}", c) for (a, b), c in self.edge_cost.items()]
        return sorted(out, key=lambda r: (r[1], r[0]))


def decompose(graph: KnowledgeGraph, evidence: Iterable[str] = ()) -> AugmentedGraph:
    evidence = tuple(dict.fromkeys(evidence))
    for e in evidence:
        if e not in graph.partition:
            raise KeyError(f"evidence {e!r} is not an I-node of the graph")

    nodes = graph.inodes + graph.snodes
    comps = [tuple(sorted(c, key=graph.order)) for c in tarjan(nodes, graph.children)]
    comp_of = {n: i for i, c in enumerate(comps) for n in c}

    succ: list[set[int]] = [set() for _ in comps]
    pred: list[set[int]] = [set() for _ in comps]
    for a, b in graph.edges:
        ca, cb = comp_of[a], comp_of[b]
        if ca != cb:
            succ[ca].add(cb)
            pred[cb].add(ca)

    # components that feed the evidence, found by walking edges backwards
    ev_comps = {comp_of[e] for e in evidence}
    feeding = set(ev_comps)
    stack = list(ev_comps)
    while stack:
        for p in pred[stack.pop()]:
            if p not in feeding:
                feeding.add(p)
                stack.append(p)

    # a component is placed once everything it points to is placed (heads first)
    def rank(i: int) -> tuple[int, int, int]:
        return (i not in ev_comps, i not in feeding, min(graph.order(n) for n in comps[i]))

    remaining = [len(s) for s in succ]
    ready = [(rank(i), i) for i in range(len(comps)) if remaining[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(i)
        for p in pred[i]:
            remaining[p] -= 1
            if remaining[p] == 0:
                heapq.heappush(ready, (rank(p), p))

    components = tuple(comps[i] for i in order)
    component_of = {n: k for k, c in enumerate(components) for n in c}
    dummies = tuple((DUMMY, s) for s in graph.snodes) + tuple((e, DUMMY) for e in evidence)
    return AugmentedGraph(graph, evidence, dummies, components, component_of)


def support_fanout(graph: KnowledgeGraph, v: str) -> int:
    """Upper bound on how many out-edges of ``v`` one inference can hold.

    An inference has one I-node per cell and one support per I-node, so the
    out-edges it keeps reach heads in pairwise distinct cells.
    """
    if v not in graph.partition:
        return 1
    cells = {graph.partition[graph.head(s)] for s in graph.children(v)}
    return max(1, len(cells))


def cost_cap(graph: KnowledgeGraph) -> float:
    return graph.total_weight() + 1.0


def _component_program(
    aug: AugmentedGraph,
    index: int,
    known: dict[str, float],
    fanout: dict[str, int],
    cap: float,
    relax: bool = False,
) -> lp.LinearProgram | None:
    g = aug.base
    members = set(aug.components[index])
    variables = tuple(v for v in aug.components[index] if v in g.partition and g.parents(v))
    if not variables:
        return None
    constraints = []
    for v in variables:
        supports = g.supports_of(v)
        relation = "=" if len(supports) == 1 and not relax else "<="
        for u in supports:
            coeffs: dict[str, float] = {v: 1.0}
            const = g.weights[u]
            for t in g.tail(u):
                if t in members:
                    coeffs[t] = coeffs.get(t, 0.0) - 1.0 / fanout[t]
                else:
                    const += known[t] / fanout[t]
            constraints.append(lp.Constraint(coeffs, relation, const, label=f"{v}<-{u}"))
    return lp.LinearProgram(
        variables,
        tuple(constraints),
        {v: 1.0 for v in variables},
        {v: cap for v in variables},
        name=f"component {index}: {' '.join(aug.components[index])}",
    )


def _solve_components(aug: AugmentedGraph) -> Iterator[tuple[int, lp.LinearProgram | None, dict[str, float], bool]]:
    """Solve component programs from the source end toward the evidence.

    Single-parent rows are equalities.  When they cannot all hold inside the
    cap, or the optimum touches the cap, the component is solved again with
    every row as ``<=``: that program's optimum is the greatest fixpoint of
    the min-equations clamped at the cap.  Away from the cap both programs
    share their optimum.
    """
    g = aug.base
    cap = cost_cap(g)
    fanout = {v: support_fanout(g, v) for v in g.inodes}
    known: dict[str, float] = {}
    for index in reversed(range(len(aug.components))):
        for v in aug.components[index]:
            if v in g.partition and not g.parents(v):
                known[v] = cap
        program = _component_program(aug, index, known, fanout, cap)
        if program is None:
            yield index, None, {}, False
            continue
        solution = lp.solve(program)
        relaxed = False
        if solution.status == lp.INFEASIBLE or (
            solution.optimal and max(solution.values.values()) >= cap - TOLERANCE
        ):
            program = _component_program(aug, index, known, fanout, cap, relax=True)
            solution = lp.solve(program)
            relaxed = True
        if not solution.optimal:
            raise CostSharingError(aug.components[index], solution.status)
        values = {v: min(cap, max(0.0, x)) for v, x in solution.values.items()}
        known.update(values)
        yield index, program, values, relaxed


def build_programs(aug: AugmentedGraph) -> list[lp.LinearProgram]:
    """Component programs in processing order (source components first).

    Later programs embed earlier optima as constants, so building them
    requires solving along the way.
    """
    return [p for _, p, _, _ in _solve_components(aug) if p is not None]


def compute_cost_sharing(graph: KnowledgeGraph, evidence: Iterable[str] = ()) -> CostTable:
    aug = decompose(graph, evidence)
    cap = cost_cap(graph)
    inode_cost: dict[str, float] = {v: cap for v in graph.inodes if not graph.parents(v)}
    relaxed = []
    for index, _, values, was_relaxed in _solve_components(aug):
        inode_cost.update(values)
        if was_relaxed:
            relaxed.append(index)
    return _assemble(graph, aug.evidence, inode_cost, cap, tuple(sorted(relaxed)))


def evaluate_acyclic(graph: KnowledgeGraph, evidence: Iterable[str] = ()) -> CostTable:
    """Single bottom-up pass; only defined when the graph has no cycle."""
    nodes = graph.inodes + graph.snodes
    if has_cycle(nodes, graph.children):
        raise ValueError("graph contains a directed cycle")
    evidence = tuple(dict.fromkeys(evidence))
    for e in evidence:
        if e not in graph.partition:
            raise KeyError(f"evidence {e!r} is not an I-node of the graph")
    cap = cost_cap(graph)
    fanout = {v: support_fanout(graph, v) for v in graph.inodes}
    cost: dict[str, float] = {}
    for (v,) in reversed(tarjan(nodes, graph.children)):
        if v not in graph.partition:
            continue
        best = cap
        for u in graph.parents(v):
            share = graph.weights[u] + sum(cost[t] / fanout[t] for t in graph.tail(u))
            best = min(best, share)
        cost[v] = best
    return _assemble(graph, evidence, cost, cap)


def _assemble(
    graph: KnowledgeGraph,
    evidence: tuple[str, ...],
    inode_cost: dict[str, float],
    cap: float,
    relaxed: tuple[int, ...] = (),
) -> CostTable:
    fanout = {v: support_fanout(graph, v) for v in graph.inodes}
    node_cost = {v: inode_cost[v] for v in graph.inodes}
    edge_cost: dict[Edge, float] = {}
    for s in graph.snodes:
        total = graph.weights[s]
        edge_cost[(DUMMY, s)] = graph.weights[s]
        for t in graph.tail(s):
            share = node_cost[t] / fanout[t]
            edge_cost[(t, s)] = share
            total += share
        node_cost[s] = total
        edge_cost[(s, graph.head(s))] = total
    for e in evidence:
        edge_cost[(e, DUMMY)] = node_cost[e]
    capped = frozenset(v for v in graph.inodes if node_cost[v] >= cap - TOLERANCE)
    return CostTable(node_cost, edge_cost, fanout, cap, evidence, capped, relaxed)


def zero_table(graph: KnowledgeGraph, evidence: Iterable[str] = ()) -> CostTable:
    """The table under which a cut's cost is exactly the weight committed so far."""
    cap = cost_cap(graph)
    edge_cost: dict[Edge, float] = {}
    node_cost = {v: 0.0 for v in graph.inodes}
    for s in graph.snodes:
        edge_cost[(DUMMY, s)] = graph.weights[s]
        for t in graph.tail(s):
            edge_cost[(t, s)] = 0.0
        node_cost[s] = graph.weights[s]
        edge_cost[(s, graph.head(s))] = graph.weights[s]
    evidence = tuple(evidence)
    for e in evidence:
        edge_cost[(e, DUMMY)] = 0.0
    fanout = {v: support_fanout(graph, v) for v in graph.inodes}
    return CostTable(node_cost, edge_cost, fanout, cap, evidence)


# ---------------------------------------------------------------------------
# checking a table against the defining equations


@dataclass(frozen=True)
class EquationViolation:
    equation: str
    target: str
    lhs: float
    rhs: float

    def __str__(self) -> str:
        return f"{self.equation} at {self.target}: {self.lhs!r} != {self.rhs!r}"


def verify_cost_solution(graph: KnowledgeGraph, table: CostTable, tol: float = TOLERANCE) -> list[EquationViolation]:
    """Every instance of the cost equations that ``table`` breaks by more than ``tol``.

    I-nodes sitting at the cap only need to stay below their cheapest support.
    Every entry must be nonnegative.
    """
    out: list[EquationViolation] = []
    nc, ec, cap = table.node_cost, table.edge_cost, table.cap

    def get(mapping, key, label):
        if key not in mapping:
            out.append(EquationViolation("missing", label, math.nan, math.nan))
            return None
        return mapping[key]

    def check(eq: str, target: str, lhs: float | None, rhs: float | None) -> None:
        if lhs is None or rhs is None:
            return
        if not abs(lhs - rhs) <= tol:
            out.append(EquationViolation(eq, target, lhs, rhs))

    # the cap bounds I-nodes only; a support fed by capped tails may exceed it
    for key, val in [*nc.items(), *((f"{a}->{b}", c) for (a, b), c in ec.items())]:
        if val < -tol or (key in graph.partition and val > cap + tol):
            out.append(EquationViolation("bounds", key, val, cap))

    for s in graph.snodes:
        w = graph.weights[s]
        check("dummy-edge", f"*->{s}", get(ec, (DUMMY, s), f"*->{s}"), w)
        shares = [get(ec, (t, s), f"{t}->{s}") for t in graph.tail(s)]
        cs = get(nc, s, s)
        if None not in shares:
            check("s-node", s, cs, w + math.fsum(shares))
        h = graph.head(s)
        check("s-edge", f"{s}->{h}", get(ec, (s, h), f"{s}->{h}"), cs)

    for v in graph.inodes:
        cv = get(nc, v, v)
        if cv is None:
            continue
        k = support_fanout(graph, v)
        if table.fanout.get(v) != k:
            out.append(EquationViolation("fanout", v, float(table.fanout.get(v, math.nan)), float(k)))
        for s in graph.children(v):
            check("i-edge", f"{v}->{s}", get(ec, (v, s), f"{v}->{s}"), cv / k)
        if v in table.evidence:
            check("evidence-edge", f"{v}->*", get(ec, (v, DUMMY), f"{v}->*"), cv)
        incoming = [get(ec, (u, v), f"{u}->{v}") for u in graph.parents(v)]
        if not incoming:
            check("unsupported", v, cv, cap)
            continue
        if None in incoming:
            continue
        least = min(incoming)
        if abs(cv - least) <= tol:
            continue
        if abs(cv - cap) <= tol and cv <= least + tol:
            continue
        out.append(EquationViolation("i-node-min", v, cv, least))
    return out


# ---------------------------------------------------------------------------
# diagnostic: naive propagation


@dataclass(frozen=True)
class Propagation:
    costs: dict[str, float]
    history: list[dict[str, float]]
    converged: bool


def propagate_costs(
    graph: KnowledgeGraph,
    order: Sequence[str] | None = None,
    max_sweeps: int = 100,
    tol: float = TOLERANCE,
) -> Propagation:
    """Repeatedly re-evaluate I-node minima over whichever supports are defined.

    On cycles this only converges in the limit; it is kept as a diagnostic
    with a fixed sweep budget, never as a way to compute the table.
    """
    order = tuple(order) if order is not None else graph.inodes
    fanout = {v: support_fanout(graph, v) for v in graph.inodes}
    cost: dict[str, float] = {}
    history = []
    converged = False
    for _ in range(max_sweeps):
        change = 0.0
        for v in order:
            options = [
                graph.weights[u] + sum(cost[t] / fanout[t] for t in graph.tail(u))
                for u in graph.parents(v)
                if all(t in cost for t in graph.tail(u))
            ]
            if not options:
                continue
            new = min(options)
            old = cost.get(v, math.inf)
            change = max(change, abs(old - new) if math.isfinite(old) else math.inf)
            cost[v] = new
        history.append(dict(cost))
        if change <= tol:
            converged = True
            break
    return Propagation(cost, history, converged)
