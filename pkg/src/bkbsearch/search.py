"""Best-first search for the least-weight inferences containing the evidence.

A state is a cut: the pending edges still to be explained, the I-nodes
already expanded, and the supports chosen so far (each contributes its dummy
edge to the frontier).  Expanding an I-node picks one of its supports,
removes the node's out-edges and adds the support's tail edges in one step.
A state with nothing pending is a solution.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .heuristic import AugmentedGraph, CostTable, compute_cost_sharing, decompose, zero_table
from .model import DUMMY, Edge, Inference, KnowledgeGraph, Support, inference_from_supports, require_searchable

COST_SHARING = "cost-sharing"
COST_SO_FAR = "cost-so-far"
HEURISTICS = (COST_SHARING, COST_SO_FAR)

QUERY_VARIABLE = "__query__"
QUERY_NODE = f"{QUERY_VARIABLE}=all"
CONJUNCTION = "__conjunction__"

COMPLETE = "complete"  # k solutions found
EXHAUSTED = "exhausted"  # agenda ran dry first: fewer than k inferences exist
LIMIT = "limit"  # state or time budget ran out


class InconsistentEvidence(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SearchState:
    id: int
    pending: frozenset[Edge]
    expanded: frozenset[str]
    assignment: Mapping[str, str]
    chosen: tuple[str, ...]
    cost: float
    committed: float
    parent: int | None = None
    step: tuple[str, str] | None = None  # (expanded I-node, chosen support)

    @property
    def frontier(self) -> frozenset[Edge]:
        return self.pending | {(DUMMY, u) for u in self.chosen}

    @property
    def chosen_supports(self) -> frozenset[str]:
        return frozenset(self.chosen)

    @property
    def is_goal(self) -> bool:
        return not self.pending


def cost_so_far(state: SearchState) -> float:
    """Weight of the supports the state has already committed to."""
    return state.committed


def frontier_cost(state: SearchState, costs: CostTable) -> float:
    """The state's cost re-derived from scratch over its frontier."""
    return math.fsum(costs.edge_cost[e] for e in sorted(state.frontier))


def conjoin_evidence(graph: KnowledgeGraph, evidence: Iterable[str]) -> tuple[KnowledgeGraph, str]:
    """Add a zero-weight support from all evidence to a fresh query node."""
    evidence = tuple(evidence)
    variables = {var: [n.split("=", 1)[1] for n in nodes] for var, nodes in graph.cells().items()}
    variables[QUERY_VARIABLE] = ["all"]
    supports = [*graph.supports(), Support(CONJUNCTION, evidence, QUERY_NODE, 0.0)]
    return KnowledgeGraph.build(variables, supports, (QUERY_NODE,)), QUERY_NODE


def check_evidence(graph: KnowledgeGraph, evidence: Iterable[str]) -> tuple[str, ...]:
    evidence = tuple(dict.fromkeys(evidence))
    if not evidence:
        raise ValueError("evidence must name at least one I-node")
    seen: dict[str, str] = {}
    for e in evidence:
        if e not in graph.partition:
            raise KeyError(f"evidence {e!r} is not an I-node of the graph")
        cell = graph.partition[e]
        if cell in seen:
            raise InconsistentEvidence(f"evidence {seen[cell]} and {e} lie in the same cell {cell}")
        seen[cell] = e
    return evidence


class Expander:
    """Successor generation for one (graph, table) pair."""

    def __init__(self, aug: AugmentedGraph, costs: CostTable):
        g = aug.base
        self.aug = aug
        self.graph = g
        self.costs = costs
        self.component = aug.component_of
        self.cell = g.partition
        self.order = {v: g.order(v) for v in g.inodes}
        ec = costs.edge_cost
        self.options = {
            v: tuple(
                (u, g.tail(u), g.weights[u], g.weights[u] + sum(ec[(t, u)] for t in g.tail(u)))
                for u in g.supports_of(v)
            )
            for v in g.inodes
        }
        self._ids = itertools.count()

    def next_id(self) -> int:
        return next(self._ids)

    def initial(self, evidence: str) -> SearchState:
        edge = (evidence, DUMMY)
        return SearchState(
            self.next_id(),
            frozenset({edge}),
            frozenset(),
            {self.cell[evidence]: evidence},
            (),
            self.costs.edge_cost[edge],
            0.0,
        )

    def current_nodes(self, state: SearchState) -> list[str]:
        """Unexpanded I-nodes with pending out-edges in the first such component."""
        sources = {a for a, _ in state.pending}
        if not sources:
            return []
        current = min(self.component[a] for a in sources)
        return sorted((v for v in sources if self.component[v] == current), key=self.order.__getitem__)

    def expand(self, state: SearchState) -> list[SearchState]:
        out = []
        ec = self.costs.edge_cost
        for v in self.current_nodes(state):
            removed = [e for e in state.pending if e[0] == v]
            kept = state.pending.difference(removed)
            base = state.cost - sum(ec[e] for e in removed)
            expanded = state.expanded | {v}
            for u, tail, weight, added in self.options[v]:
                if any(t in expanded for t in tail):
                    continue
                assignment = state.assignment
                clash = False
                for t in tail:
                    held = assignment.get(self.cell[t])
                    if held is None:
                        if assignment is state.assignment:
                            assignment = dict(assignment)
                        assignment[self.cell[t]] = t
                    elif held != t:
                        clash = True
                        break
                if clash:
                    continue
                out.append(
                    SearchState(
                        self.next_id(),
                        kept.union((t, u) for t in tail),
                        expanded,
                        assignment,
                        state.chosen + (u,),
                        base + added,
                        state.committed + weight,
                        state.id,
                        (v, u),
                    )
                )
        return out


@dataclass(frozen=True)
class SearchStats:
    expanded: int
    generated: int
    peak_agenda: int


@dataclass(frozen=True)
class Solution:
    inference: Inference
    weight: float
    supports: tuple[str, ...]
    state_cost: float
    stats: SearchStats

    @property
    def probability(self) -> float:
        return math.exp(-self.weight)


@dataclass
class SearchResult:
    solutions: list[Solution]
    status: str
    stats: SearchStats
    heuristic: str
    precompute_seconds: float
    search_seconds: float
    largest_component: int
    pop_costs: list[float] = field(default_factory=list, repr=False)

    @property
    def complete(self) -> bool:
        return self.status != LIMIT

    @property
    def best(self) -> Solution | None:
        return self.solutions[0] if self.solutions else None


TraceHook = Callable[[dict], None]


def prepare(graph: KnowledgeGraph, evidence: Iterable[str], heuristic: str = COST_SHARING):
    """Search graph, its single evidence node, augmented graph and cost table."""
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}")
    require_searchable(graph)
    evidence = check_evidence(graph, evidence)
    if len(evidence) == 1:
        search_graph, target = graph, evidence[0]
    else:
        search_graph, target = conjoin_evidence(graph, evidence)
    aug = decompose(search_graph, (target,))
    if heuristic == COST_SHARING:
        costs = compute_cost_sharing(search_graph, (target,))
    else:
        costs = zero_table(search_graph, (target,))
    return search_graph, target, aug, costs


def initial_state(aug: AugmentedGraph, costs: CostTable, evidence: Iterable[str]) -> SearchState:
    (target,) = check_evidence(aug.base, evidence)
    return Expander(aug, costs).initial(target)


def expand(aug: AugmentedGraph, costs: CostTable, state: SearchState) -> list[SearchState]:
    return Expander(aug, costs).expand(state)


def find_best_inferences(
    graph: KnowledgeGraph,
    evidence: Iterable[str],
    k: int = 1,
    heuristic: str = COST_SHARING,
    max_states: int | None = None,
    max_seconds: float | None = None,
    trace: TraceHook | None = None,
) -> SearchResult:
    """The ``k`` lightest distinct inferences containing ``evidence``, lightest first.

    Pops are bounded by ``max_states``; on any limit the solutions found so
    far come back with status ``"limit"``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    t0 = time.perf_counter()
    search_graph, target, aug, costs = prepare(graph, evidence, heuristic)
    t1 = time.perf_counter()
    deadline = t1 + max_seconds if max_seconds is not None else math.inf

    expander = Expander(aug, costs)
    start = expander.initial(target)
    agenda: list[tuple[float, int, SearchState]] = []
    seq = itertools.count()

    def push(s: SearchState) -> None:
        # equal costs (to 1e-9) pop most recent first
        heapq.heappush(agenda, (round(s.cost, 9), -next(seq), s))

    push(start)
    if trace:
        trace({"iteration": 0, "kind": "start", "state": start})
    n_expanded = 0
    generated = 1
    pops = 0
    peak = 1
    seen: set[frozenset[str]] = set()
    solutions: list[Solution] = []
    pop_costs: list[float] = []
    status = EXHAUSTED
    while agenda:
        if max_states is not None and pops >= max_states:
            status = LIMIT
            break
        if pops & 255 == 0 and time.perf_counter() > deadline:
            status = LIMIT
            break
        _, _, state = heapq.heappop(agenda)
        pops += 1
        pop_costs.append(state.cost)
        if state.is_goal:
            if trace:
                trace({"iteration": pops, "kind": "goal", "state": state})
            key = frozenset(state.chosen)
            if key in seen:
                continue
            seen.add(key)
            real = [u for u in state.chosen if u != CONJUNCTION]
            inference = inference_from_supports(graph, real, evidence)
            stats = SearchStats(n_expanded, generated, peak)
            solutions.append(Solution(inference, inference.weight, tuple(sorted(real)), state.cost, stats))
            if len(solutions) >= k:
                status = COMPLETE
                break
            continue
        successors = expander.expand(state)
        n_expanded += 1
        generated += len(successors)
        if trace:
            trace({"iteration": pops, "kind": "expand", "state": state, "successors": successors})
        for s in successors:
            push(s)
        peak = max(peak, len(agenda))
    t2 = time.perf_counter()
    solutions.sort(key=lambda s: (s.weight, s.supports))
    return SearchResult(
        solutions,
        status,
        SearchStats(n_expanded, generated, peak),
        heuristic,
        t1 - t0,
        t2 - t1,
        aug.largest_component(),
        pop_costs,
    )


# ---------------------------------------------------------------------------
# trace rendering


def _edge(e: Edge) -> str:
    return f"({e[0]}, {e[1]})"


def _edges(edges: Iterable[Edge], graph: KnowledgeGraph) -> str:
    def key(e: Edge):
        return tuple(graph.order(n) if n != DUMMY else -1 for n in e)

    return " ".join(_edge(e) for e in sorted(edges, key=key)) or "-"


def format_cost(x: float) -> str:
    return f"{x:.9g}"


class TraceTable:
    """Collects trace events into rows shaped like an iteration log."""

    header = ("iteration", "pop", "edges", "expand", "support", "delete", "add", "new_state", "cost")

    def __init__(self, graph: KnowledgeGraph):
        self.graph = graph
        self.rows: list[tuple[str, ...]] = []

    def __call__(self, event: dict) -> None:
        g = self.graph
        state: SearchState = event["state"]
        it = str(event["iteration"])
        if event["kind"] == "start":
            self.rows.append((it, "-", "-", "-", "-", "-", _edges(state.frontier, g), f"S{state.id}", format_cost(state.cost)))
            return
        pop = f"S{state.id}"
        edges = _edges(state.frontier, g)
        if event["kind"] == "goal":
            self.rows.append((it, pop, edges, "NONE", "-", "-", "-", "-", format_cost(state.cost)))
            return
        successors = event["successors"]
        if not successors:
            self.rows.append((it, pop, edges, "DEAD-END", "-", "-", "-", "-", "-"))
        for s in successors:
            v, u = s.step
            out_edges = [e for e in state.pending if e[0] == v]
            deleted = set(out_edges) | {(v, c) for c in g.children(v)}
            added = {(t, u) for t in g.tail(u)} | {(DUMMY, u)}
            self.rows.append(
                (it, pop, edges, _edges(out_edges, g), u, _edges(deleted, g), _edges(added, g), f"S{s.id}", format_cost(s.cost))
            )

    def pops(self) -> list[str]:
        out = []
        for row in self.rows:
            if row[1] != "-" and (not out or out[-1] != row[1]):
                out.append(row[1])
        return out

    def state_costs(self) -> dict[str, str]:
        return {row[7]: row[8] for row in self.rows if row[7] != "-"}

    def render(self, sep: str = "\t") -> str:
        return "\n".join(sep.join(r) for r in (self.header, *self.rows))
