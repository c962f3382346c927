"""Knowledge graphs: data model, text format, structural validation and
inference checks.

A knowledge graph is a bipartite directed graph over *I-nodes* (one per
``variable=state`` instantiation) and *S-nodes* (weighted conditional
supports).  Every S-node has a tail of I-nodes pointing into it and exactly
one head I-node it points to.  Weights are negative log probabilities.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

DUMMY = "*"

Edge = tuple[str, str]


class ParseError(ValueError):
    """Raised for malformed knowledge-base text; carries a 1-based position."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class InferenceRejected(ValueError):
    """A candidate subgraph is not an inference.

    ``condition`` names the first failed condition and ``witness`` holds the
    offending node or edge identifiers.
    """

    def __init__(self, condition: str, witness: Iterable[object], message: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition
        self.witness = tuple(witness)


def weight_from_probability(p: float) -> float:
    if not (0.0 < p <= 1.0) or math.isnan(p):
        raise ValueError(f"probability must lie in (0, 1], got {p!r}")
    return -math.log(p) if p < 1.0 else 0.0


def probability_from_weight(w: float) -> float:
    if not w >= 0.0:
        raise ValueError(f"weight must be nonnegative, got {w!r}")
    return math.exp(-w)


def inode_id(variable: str, state: str) -> str:
    return f"{variable}={state}"


def split_inode(inode: str) -> tuple[str, str]:
    variable, _, state = inode.partition("=")
    return variable, state


@dataclass(frozen=True)
class Support:
    """Author-facing description of one S-node."""

    id: str
    tail: tuple[str, ...]
    head: str
    weight: float


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable knowledge graph.

    Node and edge sequences keep declaration order; every traversal in the
    package iterates in that order so results never depend on hash seeds.
    The graph may be structurally invalid; :func:`validate` reports how.
    """

    inodes: tuple[str, ...]
    snodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    weights: Mapping[str, float]
    partition: Mapping[str, str]
    evidence: tuple[str, ...] = ()

    _children: dict = field(init=False, repr=False)
    _parents: dict = field(init=False, repr=False)
    _order: dict = field(init=False, repr=False)

    def __post_init__(self) -> None:
        children: dict[str, list[str]] = {n: [] for n in (*self.inodes, *self.snodes)}
        parents: dict[str, list[str]] = {n: [] for n in (*self.inodes, *self.snodes)}
        for a, b in self.edges:
            children.setdefault(a, []).append(b)
            parents.setdefault(b, []).append(a)
        order = {n: i for i, n in enumerate((*self.inodes, *self.snodes))}
        object.__setattr__(self, "weights", dict(self.weights))
        object.__setattr__(self, "partition", dict(self.partition))
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})
        object.__setattr__(self, "_parents", {k: tuple(v) for k, v in parents.items()})
        object.__setattr__(self, "_order", order)

    # -- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        variables: Mapping[str, Iterable[str]],
        supports: Iterable[Support],
        evidence: Iterable[str] = (),
    ) -> "KnowledgeGraph":
        inodes: list[str] = []
        partition: dict[str, str] = {}
        for var, states in variables.items():
            for state in states:
                node = inode_id(var, state)
                inodes.append(node)
                partition[node] = var
        snodes, edges, weights = [], [], {}
        for s in supports:
            snodes.append(s.id)
            weights[s.id] = float(s.weight)
            edges.extend((t, s.id) for t in s.tail)
            edges.append((s.id, s.head))
        return cls(tuple(inodes), tuple(snodes), tuple(edges), weights, partition, tuple(evidence))

    # -- structure --------------------------------------------------------

    def children(self, node: str) -> tuple[str, ...]:
        return self._children.get(node, ())

    def parents(self, node: str) -> tuple[str, ...]:
        return self._parents.get(node, ())

    def tail(self, snode: str) -> tuple[str, ...]:
        return self.parents(snode)

    def head(self, snode: str) -> str:
        (h,) = self.children(snode)
        return h

    def supports_of(self, inode: str) -> tuple[str, ...]:
        """Parent S-nodes of ``inode``: tailless ones first, then declaration order."""
        return tuple(sorted(self.parents(inode), key=lambda s: (len(self.tail(s)), self._order[s])))

    def cell(self, inode: str) -> str:
        return self.partition[inode]

    def cells(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {}
        for node in self.inodes:
            if node in self.partition:
                out.setdefault(self.partition[node], []).append(node)
        return {k: tuple(v) for k, v in out.items()}

    def order(self, node: str) -> int:
        return self._order[node]

    def supports(self) -> list[Support]:
        return [Support(s, self.tail(s), self.head(s), self.weights[s]) for s in self.snodes]

    def total_weight(self) -> float:
        return math.fsum(self.weights[s] for s in self.snodes)

    def resolve(self, ref: str) -> str:
        """Map ``var=state`` or the bare name of a single-state variable to an I-node."""
        if "=" in ref:
            if ref not in self.partition:
                raise KeyError(f"unknown I-node {ref!r}")
            return ref
        states = self.cells().get(ref)
        if states is None:
            raise KeyError(f"unknown variable {ref!r}")
        if len(states) != 1:
            raise KeyError(f"variable {ref!r} has {len(states)} states; name one as {ref}=<state>")
        return states[0]

    def with_supports(self, supports: Iterable[Support]) -> "KnowledgeGraph":
        variables = {var: [split_inode(n)[1] for n in nodes] for var, nodes in self.cells().items()}
        return KnowledgeGraph.build(variables, supports, self.evidence)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.inodes == other.inodes
            and self.snodes == other.snodes
            and sorted(self.edges) == sorted(other.edges)
            and self.weights == other.weights
            and self.partition == other.partition
            and self.evidence == other.evidence
        )

    __hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# text format

_NAME = r"[A-Za-z0-9_.\-]+"
_REF = rf"{_NAME}(?:={_NAME})?"
_SUPPORT_RE = re.compile(
    rf"^support\s+(?P<id>{_NAME})\s+\[(?P<tail>[^\]]*)\]\s*->\s*(?P<head>{_REF})\s+"
    rf"(?P<kind>weight|prob)\s+(?P<value>\S+)\s*$"
)
_NAME_RE = re.compile(rf"^{_NAME}$")
_REF_RE = re.compile(rf"^{_REF}$")


def parse_bkb(text: str, *, allow_zero_weight: bool = False) -> KnowledgeGraph:
    """Parse the line-oriented knowledge-base format.

    ``variable <name> <state>+`` declares a cell; ``support <id> [tail] ->
    head (weight w | prob p)`` declares an S-node; ``evidence <ref>`` records
    evidence.  ``#`` starts a comment.
    """
    variables: dict[str, list[str]] = {}
    supports: list[Support] = []
    support_ids: set[str] = set()
    evidence: list[str] = []
    pending: list[tuple[int, int, str, str]] = []  # references checked after all declarations

    def ref_column(raw: str, ref: str) -> int:
        # whole-token match after the leading keyword
        start = len(raw) - len(raw.lstrip()) + len(raw.split(None, 1)[0]) if raw.strip() else 0
        m = re.compile(rf"(?<![\w=.\-]){re.escape(ref)}(?![\w=.\-])").search(raw, start)
        return m.start() + 1 if m else 1

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword = line.split(None, 1)[0]
        if keyword == "variable":
            parts = line.split()
            if len(parts) < 3:
                raise ParseError("variable needs a name and at least one state", lineno, 1)
            name, states = parts[1], parts[2:]
            for tok in (name, *states):
                if not _NAME_RE.match(tok):
                    raise ParseError(f"bad identifier {tok!r}", lineno, ref_column(raw, tok))
            if name in variables:
                raise ParseError(f"duplicate variable {name!r}", lineno, ref_column(raw, name))
            if len(set(states)) != len(states):
                raise ParseError(f"duplicate state in variable {name!r}", lineno, 1)
            variables[name] = states
        elif keyword == "support":
            m = _SUPPORT_RE.match(line)
            if m is None:
                raise ParseError("expected 'support <id> [<tail>] -> <var>=<state> (weight|prob) <value>'", lineno, 1)
            sid = m["id"]
            if sid in support_ids:
                raise ParseError(f"duplicate support {sid!r}", lineno, ref_column(raw, sid))
            tail_refs = [t.strip() for t in m["tail"].split(",")] if m["tail"].strip() else []
            for t in tail_refs:
                if not _REF_RE.match(t):
                    raise ParseError(f"bad tail reference {t!r}", lineno, ref_column(raw, t) if t else 1)
            if len(set(tail_refs)) != len(tail_refs):
                raise ParseError(f"duplicate tail reference in support {sid!r}", lineno, 1)
            try:
                value = float(m["value"])
            except ValueError:
                raise ParseError(f"bad number {m['value']!r}", lineno, ref_column(raw, m["value"])) from None
            if m["kind"] == "prob":
                if not 0.0 < value <= 1.0:
                    raise ParseError(f"probability {value!r} outside (0, 1]", lineno, ref_column(raw, m["value"]))
                weight = weight_from_probability(value)
            else:
                weight = value
            if not math.isfinite(weight) or weight < 0.0 or (weight == 0.0 and not allow_zero_weight):
                raise ParseError(f"support weight must be positive, got {weight!r}", lineno, ref_column(raw, m["value"]))
            for t in (*tail_refs, m["head"]):
                pending.append((lineno, ref_column(raw, t), t, sid))
            support_ids.add(sid)
            supports.append(Support(sid, tuple(tail_refs), m["head"], weight))
        elif keyword == "evidence":
            refs = line.split()[1:]
            if not refs:
                raise ParseError("evidence needs at least one reference", lineno, 1)
            for r in refs:
                if not _REF_RE.match(r):
                    raise ParseError(f"bad evidence reference {r!r}", lineno, ref_column(raw, r))
                pending.append((lineno, ref_column(raw, r), r, ""))
                evidence.append(r)
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno, 1)

    overlap = set(variables) & support_ids
    if overlap:
        raise ParseError(f"identifier used as both variable and support: {sorted(overlap)[0]!r}", 1, 1)

    def resolve(ref: str, lineno: int, column: int) -> str:
        var, _, state = ref.partition("=")
        if var not in variables:
            raise ParseError(f"undeclared variable {var!r}", lineno, column)
        if not state:
            if len(variables[var]) != 1:
                raise ParseError(f"variable {var!r} has several states; write {var}=<state>", lineno, column)
            state = variables[var][0]
        elif state not in variables[var]:
            raise ParseError(f"undeclared state {state!r} of variable {var!r}", lineno, column)
        return inode_id(var, state)

    resolved = {(ln, ref): resolve(ref, ln, col) for ln, col, ref, _ in pending}
    line_of = {sid: ln for ln, _, _, sid in pending if sid}
    supports = [
        Support(
            s.id,
            tuple(resolved[(line_of[s.id], t)] for t in s.tail),
            resolved[(line_of[s.id], s.head)],
            s.weight,
        )
        for s in supports
    ]
    ev_lines = {ref: ln for ln, _, ref, sid in pending if not sid}
    evidence = [resolved[(ev_lines[r], r)] for r in evidence]
    return KnowledgeGraph.build(variables, supports, dict.fromkeys(evidence))


def serialize_bkb(graph: KnowledgeGraph, header: Iterable[str] = ()) -> str:
    """Render ``graph`` in the text format; weights use ``repr`` so parsing is exact."""
    lines = [f"# {h}" for h in header]
    for var, nodes in graph.cells().items():
        lines.append(f"variable {var} " + " ".join(split_inode(n)[1] for n in nodes))
    for s in graph.supports():
        lines.append(f"support {s.id} [{', '.join(s.tail)}] -> {s.head} weight {s.weight!r}")
    for e in graph.evidence:
        lines.append(f"evidence {e}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    rule: str
    witness: tuple[str, ...]
    message: str


# S-respect is reported but does not block the engine: search and oracle only
# build inferences with one support per I-node, which stays sound without it.
NONBLOCKING_RULES = frozenset({"s-respect"})


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def blocking(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.rule not in NONBLOCKING_RULES)

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def __iter__(self):
        return iter(self.violations)

    def __len__(self) -> int:
        return len(self.violations)


class InvalidGraph(ValueError):
    def __init__(self, report: ValidationReport):
        first = report.blocking[0] if report.blocking else report.violations[0]
        super().__init__(f"{len(report.violations)} violation(s); first: [{first.rule}] {first.message}")
        self.report = report


def validate(graph: KnowledgeGraph, *, allow_zero_weight: bool = False) -> ValidationReport:
    """Collect every structural rule the graph breaks; never raises."""
    out: list[Violation] = []
    inodes, snodes = set(graph.inodes), set(graph.snodes)

    for n in sorted(inodes & snodes):
        out.append(Violation("disjoint", (n,), f"{n} is both an I-node and an S-node"))

    for a, b in graph.edges:
        if a not in inodes | snodes or b not in inodes | snodes:
            out.append(Violation("edge-endpoint", (a, b), f"edge ({a}, {b}) touches an undeclared node"))
        elif not ((a in inodes and b in snodes) or (a in snodes and b in inodes)):
            out.append(Violation("bipartite", (a, b), f"edge ({a}, {b}) does not join an I-node and an S-node"))

    for s in graph.snodes:
        heads = [b for b in graph.children(s) if b in inodes]
        if len(heads) != 1:
            out.append(Violation("single-head", (s, *heads), f"S-node {s} has {len(heads)} outgoing edges, needs exactly 1"))
        w = graph.weights.get(s)
        if w is None or not math.isfinite(w) or w < 0.0 or (w == 0.0 and not allow_zero_weight):
            out.append(Violation("weight", (s,), f"S-node {s} weight {w!r} is not a positive real"))

    for n in graph.inodes:
        if n not in graph.partition:
            out.append(Violation("partition", (n,), f"I-node {n} belongs to no cell"))
    for n in sorted(set(graph.partition) - inodes):
        out.append(Violation("partition", (n,), f"partition names unknown I-node {n}"))

    for s in graph.snodes:
        heads = [b for b in graph.children(s) if b in graph.partition]
        for h in heads:
            for t in graph.tail(s):
                if t != h and t in graph.partition and graph.partition[t] == graph.partition[h]:
                    out.append(Violation("i-respect", (s, t, h), f"S-node {s} has tail {t} in the cell of its head {h}"))

    for n in graph.inodes:
        parents = [s for s in graph.parents(n) if s in snodes]
        for i, b1 in enumerate(parents):
            for b2 in parents[i + 1 :]:
                if not _mutually_exclusive(graph, b1, b2):
                    out.append(
                        Violation("s-respect", (n, b1, b2), f"supports {b1} and {b2} of {n} are not mutually exclusive")
                    )
    return ValidationReport(tuple(out))


def _mutually_exclusive(graph: KnowledgeGraph, b1: str, b2: str) -> bool:
    cells1 = {graph.partition[t]: t for t in graph.tail(b1) if t in graph.partition}
    return any(graph.partition.get(t) in cells1 and cells1[graph.partition[t]] != t for t in graph.tail(b2))


def require_searchable(graph: KnowledgeGraph, *, allow_zero_weight: bool = False) -> ValidationReport:
    report = validate(graph, allow_zero_weight=allow_zero_weight)
    if report.blocking:
        raise InvalidGraph(report)
    return report


# ---------------------------------------------------------------------------
# inferences


@dataclass(frozen=True)
class Inference:
    inodes: frozenset[str]
    snodes: frozenset[str]
    edges: frozenset[Edge]
    weight: float

    @property
    def key(self) -> tuple[str, ...]:
        return tuple(sorted(self.snodes))

    @property
    def probability(self) -> float:
        return probability_from_weight(self.weight)


def subgraph_of_supports(graph: KnowledgeGraph, supports: Iterable[str]) -> tuple[set[str], set[str], set[Edge]]:
    """The subgraph induced by a set of S-nodes: their heads, tails and edges."""
    snodes = set(supports)
    inodes: set[str] = set()
    edges: set[Edge] = set()
    for s in snodes:
        h = graph.head(s)
        inodes.add(h)
        edges.add((s, h))
        for t in graph.tail(s):
            inodes.add(t)
            edges.add((t, s))
    return inodes, snodes, edges


def check_inference(
    graph: KnowledgeGraph,
    inodes: Iterable[str],
    snodes: Iterable[str],
    edges: Iterable[Edge],
    evidence: Iterable[str] = (),
) -> Inference:
    """Return the candidate as an :class:`Inference` or raise :class:`InferenceRejected`."""
    I, S, E = frozenset(inodes), frozenset(snodes), frozenset(edges)
    all_i, all_s = set(graph.inodes), set(graph.snodes)
    graph_edges = set(graph.edges)

    bad = sorted((I - all_i) | (S - all_s))
    if bad:
        raise InferenceRejected("membership", bad, "nodes not in the graph")
    bad_edges = sorted(e for e in E if e not in graph_edges or e[0] not in I | S or e[1] not in I | S)
    if bad_edges:
        raise InferenceRejected("membership", bad_edges, "edges outside the graph or the candidate's nodes")

    cycle = _find_cycle(I | S, E)
    if cycle:
        raise InferenceRejected("acyclic", cycle, "candidate contains a directed cycle")

    seen: dict[str, str] = {}
    for n in sorted(I):
        c = graph.partition[n]
        if c in seen:
            raise InferenceRejected("consistent", (seen[c], n), f"two I-nodes in cell {c}")
        seen[c] = n

    supported = {b for (a, b) in E if b in I}
    for n in sorted(I):
        if n not in supported:
            raise InferenceRejected("well-supported", (n,), f"I-node {n} has no incoming S-node")

    for s in sorted(S):
        missing = [t for t in graph.tail(s) if t not in I or (t, s) not in E]
        if missing:
            raise InferenceRejected("well-founded", (s, *missing), f"S-node {s} lacks tail nodes")
    for s in sorted(S):
        h = graph.head(s)
        if h not in I or (s, h) not in E:
            raise InferenceRejected("well-defined", (s, h), f"S-node {s} does not support its head")

    missing_ev = sorted(set(evidence) - I)
    if missing_ev:
        raise InferenceRejected("evidence", missing_ev, "evidence not contained")

    return Inference(I, S, E, math.fsum(graph.weights[s] for s in S))


def inference_from_supports(graph: KnowledgeGraph, supports: Iterable[str], evidence: Iterable[str] = ()) -> Inference:
    return check_inference(graph, *subgraph_of_supports(graph, supports), evidence)


def _find_cycle(nodes: set[str] | frozenset[str], edges: Iterable[Edge]) -> list[str]:
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
    for k in succ:
        succ[k].sort()
    color: dict[str, int] = {}
    for root in sorted(nodes):
        if root in color:
            continue
        stack = [(root, iter(succ[root]))]
        path = [root]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                path.pop()
            elif color.get(nxt) == 1:
                return path[path.index(nxt) :]
            elif nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
                path.append(nxt)
    return []
