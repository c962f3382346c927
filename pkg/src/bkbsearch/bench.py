"""Instance generation and the cost-sharing versus cost-so-far comparison."""

from __future__ import annotations

import csv
import io
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from .generate import GenParams, cycle_reachable, generate, inject_cycles, pick_evidence
from .heuristic import decompose
from .model import KnowledgeGraph
from .search import COST_SHARING, COST_SO_FAR, HEURISTICS, find_best_inferences

TIMING_COLUMNS = ("wall_seconds", "precompute_seconds")

# parameter family for the small cyclic corpus used by the property checks
SMALL_FAMILY = dict(states_per_variable=(1, 2), supports_per_inode=(1, 3), tail_size=(1, 2), weight_range=(1.0, 10.0))


@dataclass(frozen=True)
class Instance:
    id: str
    seed: int
    graph: KnowledgeGraph
    evidence: tuple[str, ...]
    swaps: int
    cyclic: bool


@dataclass(frozen=True)
class BenchRecord:
    instance: str
    seed: int
    heuristic: str
    solved: bool
    status: str
    weight: float | None
    solutions: int
    expansions: int
    generated: int
    wall_seconds: float
    precompute_seconds: float
    largest_scc: int
    inodes: int
    snodes: int
    swaps: int
    cyclic: bool
    evidence: str
    error: str = ""


def make_instance(
    params: GenParams, evidence_count: int = 1, instance_id: str | None = None, near_cycles: bool = False
) -> Instance:
    """Generate, inject cycles, then draw seeded evidence.

    With ``near_cycles`` the evidence is drawn from I-nodes on or downstream
    of a cycle, when there are any.
    """
    base = generate(params)
    inj = inject_cycles(base, params.cycle_pairs, params.seed)
    within = cycle_reachable(inj.graph) if near_cycles else None
    evidence = pick_evidence(inj.graph, evidence_count, random.Random(params.seed * 7919 + 1), within or None)
    return Instance(instance_id or f"i{params.seed}", params.seed, inj.graph, evidence, inj.accepted, inj.cyclic)


def small_cyclic_corpus(count: int, first_seed: int = 0, max_snodes: int = 25) -> list[Instance]:
    """``count`` cyclic instances with 5-9 variables and at most ``max_snodes`` supports.

    Seeds are scanned upward from ``first_seed``; acyclic or oversized draws
    are skipped, so the corpus is a fixed function of its arguments.
    Evidence (one or two nodes) sits on or downstream of a cycle.
    """
    out: list[Instance] = []
    seed = first_seed
    while len(out) < count:
        rng = random.Random(seed)
        params = GenParams(rng.randint(5, 9), cycle_pairs=rng.randint(2, 5), seed=seed, **SMALL_FAMILY)
        if len(generate(params).snodes) <= max_snodes:
            inst = make_instance(params, rng.randint(1, 2), f"c{seed}", near_cycles=True)
            if inst.cyclic and inst.evidence:
                out.append(inst)
        seed += 1
    return out


def small_acyclic_corpus(count: int, first_seed: int = 0) -> list[Instance]:
    out = []
    for seed in range(first_seed, first_seed + count):
        rng = random.Random(seed)
        params = GenParams(rng.randint(3, 9), (1, 3), (1, 2), (0, 2), seed=seed)
        out.append(make_instance(params, evidence_count=1, instance_id=f"a{seed}"))
    return out


def scale_params(seed: int, variables: int = 33, cycle_pairs: int = 8) -> GenParams:
    """Roughly 100 I-nodes and 200 supports at the default size."""
    return GenParams(
        variables,
        states_per_variable=(2, 4),
        supports_per_inode=(1, 3),
        tail_size=(1, 3),
        weight_range=(1.0, 10.0),
        cycle_pairs=cycle_pairs,
        seed=seed,
    )


def scale_suite(count: int, first_seed: int = 0, variables: int = 33, cycle_pairs: int = 8) -> list[GenParams]:
    """The first ``count`` scale instances (by seed) whose injection closed a cycle."""
    if cycle_pairs < 1:
        raise ValueError("a cyclic suite needs cycle_pairs >= 1")
    out, seed = [], first_seed
    while len(out) < count:
        params = scale_params(seed, variables, cycle_pairs)
        if make_instance(params).cyclic:
            out.append(params)
        seed += 1
    return out


def large_params(seed: int, cycle_pairs: int = 10) -> GenParams:
    """About 165 I-nodes and 350 supports on average over seeds."""
    return GenParams(
        55,
        states_per_variable=(2, 4),
        supports_per_inode=(1, 4),
        tail_size=(1, 3),
        weight_range=(1.0, 10.0),
        cycle_pairs=cycle_pairs,
        seed=seed,
    )


def _run_one(args) -> list[BenchRecord]:
    params, evidence_count, k, max_states, max_seconds, heuristics = args
    inst = make_instance(params, evidence_count)
    return [run_instance(inst, h, k, max_states, max_seconds) for h in heuristics]


def run_instance(inst: Instance, heuristic: str, k: int, max_states: int | None, max_seconds: float | None) -> BenchRecord:
    common = dict(
        instance=inst.id,
        seed=inst.seed,
        heuristic=heuristic,
        inodes=len(inst.graph.inodes),
        snodes=len(inst.graph.snodes),
        swaps=inst.swaps,
        cyclic=inst.cyclic,
        evidence=" ".join(inst.evidence),
    )
    if not inst.evidence:
        return BenchRecord(solved=False, status="error", weight=None, solutions=0, expansions=0, generated=0,
                           wall_seconds=0.0, precompute_seconds=0.0, largest_scc=0, error="no supportable evidence", **common)
    try:
        r = find_best_inferences(inst.graph, inst.evidence, k, heuristic, max_states, max_seconds)
    except Exception as exc:  # recorded in-row; the suite keeps going
        return BenchRecord(solved=False, status="error", weight=None, solutions=0, expansions=0, generated=0,
                           wall_seconds=0.0, precompute_seconds=0.0,
                           largest_scc=decompose(inst.graph).largest_component(), error=repr(exc), **common)
    return BenchRecord(
        solved=r.status != "limit" and bool(r.solutions),
        status=r.status,
        weight=r.solutions[0].weight if r.solutions else None,
        solutions=len(r.solutions),
        expansions=r.stats.expanded,
        generated=r.stats.generated,
        wall_seconds=r.precompute_seconds + r.search_seconds,
        precompute_seconds=r.precompute_seconds,
        largest_scc=r.largest_component,
        **common,
    )


def run_benchmark(
    suite: Sequence[GenParams],
    evidence_count: int = 1,
    k: int = 1,
    max_states: int | None = None,
    max_seconds: float | None = None,
    output: str | Path | None = None,
    heuristics: Sequence[str] = HEURISTICS,
    workers: int = 1,
) -> list[BenchRecord]:
    """Run every instance under every heuristic with identical limits.

    When ``output`` is given, writes the records there plus ``*_summary.csv``
    and ``*_solved_vs_time.csv`` beside it.
    """
    jobs = [(p, evidence_count, k, max_states, max_seconds, tuple(heuristics)) for p in suite]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            batches = list(pool.map(_run_one, jobs))
    else:
        batches = [_run_one(j) for j in jobs]
    records = [r for batch in batches for r in batch]
    if output is not None:
        out = Path(output)
        out.write_text(records_csv(records))
        out.with_name(out.stem + "_summary.csv").write_text(summary_csv(records))
        out.with_name(out.stem + "_solved_vs_time.csv").write_text(solved_vs_time_csv(records))
    return records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_csv(records: Iterable[BenchRecord], timing: bool = True) -> str:
    names = [f.name for f in fields(BenchRecord) if timing or f.name not in TIMING_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in records:
        row = asdict(r)
        w.writerow([_fmt(row[n]) for n in names])
    return buf.getvalue()


def summarize(records: Sequence[BenchRecord]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for h in dict.fromkeys(r.heuristic for r in records):
        rows = [r for r in records if r.heuristic == h]
        out[h] = {
            "instances": len(rows),
            "solved": sum(r.solved for r in rows),
            "median_expansions": statistics.median(r.expansions for r in rows) if rows else 0.0,
            "total_seconds": sum(r.wall_seconds for r in rows),
        }
    by_instance: dict[str, dict[str, BenchRecord]] = {}
    for r in records:
        by_instance.setdefault(r.instance, {})[r.heuristic] = r
    ratios = [
        pair[COST_SO_FAR].expansions / max(1, pair[COST_SHARING].expansions)
        for pair in by_instance.values()
        if COST_SO_FAR in pair and COST_SHARING in pair and pair[COST_SO_FAR].solved and pair[COST_SHARING].solved
    ]
    out["comparison"] = {
        "instances_both_solved": len(ratios),
        "median_expansion_ratio": statistics.median(ratios) if ratios else float("nan"),
        "weight_disagreements": sum(
            1
            for pair in by_instance.values()
            if all(h in pair and pair[h].solved for h in HEURISTICS)
            and abs(pair[COST_SHARING].weight - pair[COST_SO_FAR].weight) > 1e-9
        ),
    }
    return out


def summary_csv(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "metric", "value"])
    for group, metrics in summarize(records).items():
        for name, value in metrics.items():
            w.writerow([group, name, _fmt(value)])
    return buf.getvalue()


def solved_vs_time(records: Sequence[BenchRecord]) -> list[tuple[str, int, float]]:
    """Problems solved against cumulative CPU time, per heuristic."""
    out = []
    for h in dict.fromkeys(r.heuristic for r in records):
        total = 0.0
        times = sorted(r.wall_seconds for r in records if r.heuristic == h and r.solved)
        for n, t in enumerate(times, start=1):
            total += t
            out.append((h, n, total))
    return out


def solved_vs_time_csv(records: Sequence[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["heuristic", "solved", "cumulative_seconds"])
    for h, n, t in solved_vs_time(records):
        w.writerow([h, n, f"{t:.6f}"])
    return buf.getvalue()
