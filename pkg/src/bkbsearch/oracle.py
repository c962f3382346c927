"""Exhaustive ground truth for small graphs.

Deliberately naive and independent of the heuristic and search modules: it
shares only the graph types.  Inferences are enumerated with one support per
needed I-node, so every enumerated inference is irredundant (each I-node has
exactly one support and feeds the evidence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import DUMMY, Inference, KnowledgeGraph, inference_from_supports

DEFAULT_BUDGET = 2_000_000


class OracleBudgetExceeded(RuntimeError):
    pass


def _supports_for(graph: KnowledgeGraph, evidence: Iterable[str], max_snodes: int | None, budget: int):
    """Yield ``{inode: support}`` maps, one per inference."""
    evidence = sorted(dict.fromkeys(evidence), key=graph.order)
    assignment: dict[str, str] = {}
    for e in evidence:
        cell = graph.partition[e]
        if cell in assignment and assignment[cell] != e:
            return
        assignment[cell] = e
    chosen: dict[str, str] = {}
    steps = [0]

    def depends_on(start: str, target: str) -> bool:
        stack, seen = [start], set()
        while stack:
            n = stack.pop()
            if n == target:
                return True
            if n in seen or n not in chosen:
                continue
            seen.add(n)
            stack.extend(graph.tail(chosen[n]))
        return False

    def rec(open_nodes: list[str]):
        steps[0] += 1
        if steps[0] > budget:
            raise OracleBudgetExceeded(f"more than {budget} enumeration steps")
        if not open_nodes:
            yield dict(chosen)
            return
        v, rest = open_nodes[0], open_nodes[1:]
        if max_snodes is not None and len(chosen) >= max_snodes:
            return
        for u in sorted(graph.parents(v), key=graph.order):
            tail = graph.tail(u)
            added_cells = []
            ok = True
            for t in tail:
                cell = graph.partition[t]
                held = assignment.get(cell)
                if held is None:
                    assignment[cell] = t
                    added_cells.append(cell)
                elif held != t:
                    ok = False
                    break
            if ok and any(depends_on(t, v) for t in tail):
                ok = False
            if ok:
                chosen[v] = u
                fresh = [t for t in tail if t not in chosen and t not in open_nodes]
                yield from rec(sorted(set(rest) | set(fresh), key=graph.order))
                del chosen[v]
            for cell in added_cells:
                del assignment[cell]

    yield from rec(list(evidence))


def enumerate_inferences(
    graph: KnowledgeGraph,
    evidence: Iterable[str] = (),
    max_snodes: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> list[Inference]:
    """Every inference containing the evidence, sorted by (weight, support ids)."""
    evidence = tuple(evidence)
    out = [
        inference_from_supports(graph, chosen.values(), evidence)
        for chosen in _supports_for(graph, evidence, max_snodes, budget)
    ]
    return sorted(out, key=lambda r: (r.weight, r.key))


def min_weight_inference(graph: KnowledgeGraph, evidence: Iterable[str] = (), budget: int = DEFAULT_BUDGET) -> Inference | None:
    found = enumerate_inferences(graph, evidence, budget=budget)
    return found[0] if found else None


@dataclass(frozen=True)
class AdmissibilityViolation:
    expanded: tuple[str, ...]
    supports: tuple[str, ...]
    cost: float
    best_completion: float


def audit_admissibility(
    graph: KnowledgeGraph,
    evidence: str | Iterable[str],
    costs,
    budget: int = DEFAULT_BUDGET,
    tol: float = 1e-9,
) -> list[AdmissibilityViolation]:
    """Compare every cut of every inference against its cheapest completion.

    A cut is identified by the expanded I-nodes and their chosen supports;
    the expanded set must contain, with each node, all of its children in
    the inference.  Its cost sums ``costs.edge_cost`` over the evidence edge
    (before any expansion) or the chosen supports' dummy edges plus the
    pending tail edges.  Search states that can still be completed are
    exactly such cuts.
    """
    (target,) = (evidence,) if isinstance(evidence, str) else tuple(evidence)
    ec: Mapping = costs.edge_cost
    best: dict[tuple, float] = {}
    cut_cost: dict[tuple, float] = {}
    steps = 0

    for chosen in _supports_for(graph, (target,), None, budget):
        weight = math.fsum(graph.weights[u] for u in chosen.values())
        children: dict[str, set[str]] = {v: set() for v in chosen}
        for v, u in chosen.items():
            for t in graph.tail(u):
                children[t].add(v)
        nodes = sorted(chosen, key=graph.order)

        def closed_sets(i: int, picked: frozenset[str]):
            nonlocal steps
            steps += 1
            if steps > budget:
                raise OracleBudgetExceeded(f"more than {budget} cut-enumeration steps")
            if i == len(nodes):
                yield picked
                return
            v = nodes[i]
            yield from closed_sets(i + 1, picked)
            if children[v] <= picked:
                yield from closed_sets(i + 1, picked | {v})

        # children come before parents in topological order, so iterate that way
        nodes = _children_first(nodes, children)
        for picked in closed_sets(0, frozenset()):
            key = (picked, frozenset((v, chosen[v]) for v in picked))
            if key not in cut_cost:
                if not picked:
                    cost = ec[(target, DUMMY)]
                else:
                    cost = 0.0
                    for v in picked:
                        u = chosen[v]
                        cost += ec[(DUMMY, u)]
                        cost += sum(ec[(t, u)] for t in graph.tail(u) if t not in picked)
                cut_cost[key] = cost
            best[key] = min(best.get(key, float("inf")), weight)

    out = []
    for key, cost in cut_cost.items():
        if cost > best[key] + tol:
            picked, pairs = key
            out.append(
                AdmissibilityViolation(
                    tuple(sorted(picked, key=graph.order)), tuple(sorted(u for _, u in pairs)), cost, best[key]
                )
            )
    return sorted(out, key=lambda v: (v.expanded, v.supports))


def _children_first(nodes: list[str], children: dict[str, set[str]]) -> list[str]:
    order: list[str] = []
    placed: set[str] = set()
    pending = list(nodes)
    while pending:
        for v in pending:
            if children[v] <= placed:
                order.append(v)
                placed.add(v)
                pending.remove(v)
                break
        else:  # pragma: no cover - inferences are acyclic
            raise AssertionError("cyclic inference")
    return order
