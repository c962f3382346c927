"""Random knowledge graphs and cycle injection."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .graphs import has_cycle, tarjan
from .model import KnowledgeGraph, Support, inode_id, validate


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    variable_count: int
    states_per_variable: tuple[int, int] = (1, 3)
    supports_per_inode: tuple[int, int] = (1, 2)
    tail_size: tuple[int, int] = (0, 2)
    weight_range: tuple[float, float] = (1.0, 10.0)
    cycle_pairs: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variable_count < 1:
            raise ValueError("need at least one variable")
        for name in ("states_per_variable", "supports_per_inode", "tail_size"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < (0 if name == "tail_size" else 1):
                raise ValueError(f"{name} range {lo}..{hi} is empty or out of domain")
        lo, hi = self.weight_range
        if not 0 < lo <= hi:
            raise ValueError("weight range must be positive and nonempty")
        if self.cycle_pairs < 0:
            raise ValueError("cycle_pairs must be nonnegative")


@dataclass(frozen=True)
class Injection:
    graph: KnowledgeGraph
    accepted: int
    attempts: int
    cyclic: bool


def _states(n: int) -> list[str]:
    return [f"v{i}" for i in range(n)]


def generate(params: GenParams, max_retries: int = 20) -> KnowledgeGraph:
    """Acyclic, layered graph with mutually exclusive supports per I-node.

    Variables are ordered; tails draw only on earlier variables.  When an
    I-node gets several supports they condition on distinct states of one
    earlier variable, which keeps every pair of supports exclusive.
    """
    rng = random.Random(params.seed)
    for _ in range(max_retries):
        graph = _generate_once(params, rng)
        if validate(graph).ok:
            return graph
    raise GenerationError(f"no valid graph after {max_retries} attempts")


def _generate_once(p: GenParams, rng: random.Random) -> KnowledgeGraph:
    names = [f"x{j}" for j in range(p.variable_count)]
    states = {name: _states(rng.randint(*p.states_per_variable)) for name in names}
    supports: list[Support] = []
    lo_w, hi_w = p.weight_range

    def weight() -> float:
        return max(lo_w, round(rng.uniform(lo_w, hi_w), 3))

    def random_tail(earlier: list[str], size: int, fixed: dict[str, str]) -> tuple[str, ...]:
        pool = [v for v in earlier if v not in fixed]
        picks = dict(fixed)
        for v in rng.sample(pool, min(size - len(fixed), len(pool))):
            picks[v] = rng.choice(states[v])
        return tuple(inode_id(v, picks[v]) for v in earlier if v in picks)

    for j, var in enumerate(names):
        earlier = names[:j]
        tail_hi = min(p.tail_size[1], j)
        for state in states[var]:
            head = inode_id(var, state)
            m = rng.randint(*p.supports_per_inode)
            splitters = [v for v in earlier if len(states[v]) >= 2]
            if m > 1 and tail_hi >= 1 and splitters:
                d = rng.choice(splitters)
                m = min(m, len(states[d]))
                for ds in rng.sample(states[d], m):
                    size = rng.randint(min(max(1, p.tail_size[0]), tail_hi), tail_hi)
                    tail = random_tail(earlier, size, {d: ds})
                    supports.append(Support(f"s{len(supports)}", tail, head, weight()))
            else:
                size = rng.randint(min(p.tail_size[0], tail_hi), tail_hi)
                tail = random_tail(earlier, size, {})
                supports.append(Support(f"s{len(supports)}", tail, head, weight()))
    return KnowledgeGraph.build(states, supports)


def inject_cycles(graph: KnowledgeGraph, pairs: int, seed: int) -> Injection:
    """Reverse up to ``pairs`` arc pairs.

    Reversing the pair through a support swaps its head with one of its tail
    I-nodes.  Candidate swaps are visited in a seeded random order; a swap is
    kept only if the graph still validates and the old head keeps another
    support.  Swaps that close a cycle are taken first, any valid swap
    otherwise.
    """
    rng = random.Random(seed)
    supports = graph.supports()
    accepted = attempts = 0
    for _ in range(pairs):
        candidates = [(i, t) for i, s in enumerate(supports) for t in s.tail]
        rng.shuffle(candidates)
        fallback = None
        chosen = None
        for i, t in candidates:
            s = supports[i]
            if not any(o.head == s.head for j, o in enumerate(supports) if j != i):
                continue
            swapped = Support(s.id, tuple(s.head if x == t else x for x in s.tail), t, s.weight)
            trial = supports[:i] + [swapped] + supports[i + 1 :]
            closes = _reaches(trial, t, s.head)
            if not closes and fallback is not None:
                continue
            attempts += 1
            if validate(graph.with_supports(trial)).ok:
                if closes:
                    chosen = trial
                    break
                fallback = trial
        chosen = chosen or fallback
        if chosen is None:
            break
        supports = chosen
        accepted += 1
    result = graph.with_supports(supports)
    return Injection(result, accepted, attempts, has_cycle(result.inodes + result.snodes, result.children))


def _reaches(supports: list[Support], src: str, dst: str) -> bool:
    fed: dict[str, list[str]] = {}
    for s in supports:
        for t in s.tail:
            fed.setdefault(t, []).append(s.head)
    seen, stack = {src}, [src]
    while stack:
        for h in fed.get(stack.pop(), ()):
            if h == dst:
                return True
            if h not in seen:
                seen.add(h)
                stack.append(h)
    return False


def supportable(graph: KnowledgeGraph) -> set[str]:
    """I-nodes derivable from tailless supports, ignoring consistency."""
    ok: set[str] = set()
    changed = True
    while changed:
        changed = False
        for s in graph.snodes:
            h = graph.head(s)
            if h not in ok and all(t in ok for t in graph.tail(s)):
                ok.add(h)
                changed = True
    return ok


def cycle_reachable(graph: KnowledgeGraph) -> set[str]:
    """I-nodes on a directed cycle or downstream of one."""
    nodes = graph.inodes + graph.snodes
    seen = {n for comp in tarjan(nodes, graph.children) if len(comp) > 1 for n in comp}
    stack = list(seen)
    while stack:
        for c in graph.children(stack.pop()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return {v for v in graph.inodes if v in seen}


def pick_evidence(
    graph: KnowledgeGraph, count: int, rng: random.Random, within: set[str] | None = None
) -> tuple[str, ...]:
    """Uniformly chosen supportable I-nodes from distinct cells, optionally restricted to ``within``."""
    ok = supportable(graph)
    pool = [v for v in graph.inodes if v in ok and (within is None or v in within)]
    rng.shuffle(pool)
    out: list[str] = []
    cells: set[str] = set()
    for v in pool:
        if graph.partition[v] not in cells:
            out.append(v)
            cells.add(graph.partition[v])
            if len(out) == count:
                break
    return tuple(sorted(out, key=graph.order))
