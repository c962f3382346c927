"""Command-line entry point: ``bkb <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import bench, oracle
from .generate import GenerationError, GenParams, generate, inject_cycles
from .heuristic import TOLERANCE, build_programs, compute_cost_sharing, decompose
from .model import InvalidGraph, KnowledgeGraph, ParseError, parse_bkb, serialize_bkb, validate
from .search import HEURISTICS, LIMIT, InconsistentEvidence, TraceTable, find_best_inferences, format_cost

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_LIMIT = 2
EXIT_IO = 3

SOLUTION_COLUMNS = ("rank", "weight", "probability", "supports", "inodes", "expanded", "generated", "peak_agenda")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(path: str, allow_zero_weight: bool = False) -> KnowledgeGraph:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from exc
    try:
        return parse_bkb(text, allow_zero_weight=allow_zero_weight)
    except ParseError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from exc


def _evidence(graph: KnowledgeGraph, refs: list[str] | None) -> tuple[str, ...]:
    if not refs:
        return graph.evidence
    try:
        return tuple(graph.resolve(r) for r in refs)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_INVALID) from exc


def _write_csv(rows, header=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _solution_rows(graph: KnowledgeGraph, items) -> list[tuple]:
    """``items`` are (inference, stats-or-None) pairs in rank order."""
    rows = []
    for rank, (inf, stats) in enumerate(items, start=1):
        rows.append(
            (
                rank,
                repr(inf.weight),
                f"{inf.probability:.12g}",
                " ".join(sorted(inf.snodes, key=graph.order)),
                " ".join(sorted(inf.inodes, key=graph.order)),
                "" if stats is None else stats.expanded,
                "" if stats is None else stats.generated,
                "" if stats is None else stats.peak_agenda,
            )
        )
    return rows


def _solution_text(rows) -> str:
    lines = []
    for rank, weight, prob, supports, inodes, expanded, generated, peak in rows:
        lines.append(f"#{rank} weight={format_cost(float(weight))} probability={prob}")
        lines.append(f"   supports: {supports}")
        lines.append(f"   inodes:   {inodes}")
        if expanded != "":
            lines.append(f"   expanded={expanded} generated={generated} peak_agenda={peak}")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args, out) -> int:
    graph = _load(args.file, args.allow_zero_weight)
    report = validate(graph, allow_zero_weight=args.allow_zero_weight)
    if args.csv:
        out.write(_write_csv(((v.rule, " ".join(v.witness), v.message) for v in report), ("rule", "witness", "message")))
    elif report.ok:
        _info(args, f"{args.file}: valid ({len(graph.inodes)} I-nodes, {len(graph.snodes)} S-nodes)", out)
    else:
        for v in report:
            out.write(f"[{v.rule}] {v.message}\n")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_heuristic(args, out) -> int:
    graph = _load(args.file, args.allow_zero_weight)
    evidence = _evidence(graph, args.evidence)
    if args.dump_lp:
        for prog in build_programs(decompose(graph, evidence)):
            sys.stderr.write(prog.to_text() + "\n\n")
    table = compute_cost_sharing(graph, evidence)
    rows = [(kind, ident, repr(cost)) for kind, ident, cost in table.rows()]
    out.write(f"# cap={table.cap!r},tolerance={TOLERANCE!r}\n")
    out.write(_write_csv(rows, ("node_or_edge", "id", "cost")))
    return EXIT_OK


def cmd_solve(args, out) -> int:
    graph = _load(args.file, args.allow_zero_weight)
    evidence = _evidence(graph, args.evidence)
    if not evidence:
        raise CliError("no evidence given on the command line or in the file", EXIT_INVALID)
    tracer = TraceTable(graph) if args.trace else None
    result = find_best_inferences(graph, evidence, args.k, args.heuristic, args.max_states, args.max_seconds, tracer)
    if tracer is not None:
        out.write(tracer.render("," if args.csv else "\t") + "\n\n")
    rows = _solution_rows(graph, [(s.inference, s.stats) for s in result.solutions])
    if args.csv:
        out.write(_write_csv(rows, SOLUTION_COLUMNS))
    else:
        out.write(_solution_text(rows))
        if not rows:
            out.write("no inference contains the evidence\n")
    st = result.stats
    _info(
        args,
        f"status={result.status} heuristic={result.heuristic} expanded={st.expanded} generated={st.generated} "
        f"largest_scc={result.largest_component}",
        sys.stderr,
    )
    return EXIT_LIMIT if result.status == LIMIT else EXIT_OK


def cmd_oracle(args, out) -> int:
    graph = _load(args.file, args.allow_zero_weight)
    evidence = _evidence(graph, args.evidence)
    try:
        found = oracle.enumerate_inferences(graph, evidence, budget=args.budget)
    except oracle.OracleBudgetExceeded as exc:
        raise CliError(str(exc), EXIT_LIMIT) from exc
    if args.min:
        found = found[:1]
    rows = _solution_rows(graph, [(inf, None) for inf in found])
    out.write(_write_csv(rows, SOLUTION_COLUMNS) if args.csv else _solution_text(rows))
    return EXIT_OK


def cmd_gen(args, out) -> int:
    params = GenParams(
        args.variables,
        tuple(args.states),
        tuple(args.supports),
        tuple(args.tails),
        tuple(args.weights),
        args.pairs,
        args.seed,
    )
    inj = inject_cycles(generate(params), args.pairs, args.seed)
    header = [
        f"seed={args.seed} variables={args.variables} pairs={args.pairs}",
        f"accepted_swaps={inj.accepted} cyclic={inj.cyclic} inodes={len(inj.graph.inodes)} snodes={len(inj.graph.snodes)}",
    ]
    text = serialize_bkb(inj.graph, header)
    if args.output:
        try:
            Path(args.output).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.output}: {exc.strerror}", EXIT_IO) from exc
        _info(args, header[1], sys.stderr)
    else:
        out.write(text)
    return EXIT_OK


def cmd_bench(args, out) -> int:
    pairs = args.pairs if args.pairs is not None else {"small": 4, "scale": 8, "large": 10}[args.preset]
    if args.preset == "large":
        suite = [bench.large_params(args.seed + i, pairs) for i in range(args.instances)]
    elif args.preset == "scale":
        suite = bench.scale_suite(args.instances, args.seed, args.variables or 33, pairs)
    else:
        suite = [
            GenParams(args.variables or 7, (2, 3), (1, 2), (1, 3), (1.0, 10.0), pairs, args.seed + i)
            for i in range(args.instances)
        ]
    try:
        records = bench.run_benchmark(
            suite, args.evidence_count, args.k, args.max_states, args.max_seconds, args.output, workers=args.workers
        )
    except OSError as exc:
        raise CliError(f"cannot write results: {exc.strerror}", EXIT_IO) from exc
    if args.output is None:
        out.write(bench.records_csv(records, timing=not args.no_timing))
    summary = bench.summary_csv(records)
    if args.output is None or not args.quiet:
        (sys.stderr if args.output is None else out).write(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _info(args, message: str, stream) -> None:
    if not args.quiet:
        stream.write(message + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (gen, bench)")
    common.add_argument("--csv", action="store_true", default=argparse.SUPPRESS, help="machine-readable CSV output")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress status lines")

    p = argparse.ArgumentParser(prog="bkb", description="Cost-sharing best-first search over knowledge graphs.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def graph_cmd(name: str, help_: str):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.add_argument("file")
        sp.add_argument("--allow-zero-weight", action="store_true")
        return sp

    graph_cmd("validate", "check the structural rules").set_defaults(func=cmd_validate)

    sp = graph_cmd("heuristic", "print the cost-sharing table as CSV")
    sp.add_argument("--evidence", nargs="+", metavar="VAR=STATE")
    sp.add_argument("--dump-lp", action="store_true", help="write each component program to stderr")
    sp.set_defaults(func=cmd_heuristic)

    sp = graph_cmd("solve", "find the k lightest inferences")
    sp.add_argument("--evidence", nargs="+", metavar="VAR=STATE")
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--heuristic", choices=HEURISTICS, default=HEURISTICS[0])
    sp.add_argument("--max-states", type=int)
    sp.add_argument("--max-seconds", type=float)
    sp.add_argument("--trace", action="store_true", help="print the per-iteration search log")
    sp.set_defaults(func=cmd_solve)

    sp = graph_cmd("oracle", "exhaustive enumeration (small graphs)")
    sp.add_argument("--evidence", nargs="+", metavar="VAR=STATE")
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--list", action="store_true", help="every inference, lightest first (default)")
    mode.add_argument("--min", action="store_true", help="only the lightest inference")
    sp.add_argument("--budget", type=int, default=oracle.DEFAULT_BUDGET)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("gen", help="generate a random graph", parents=[common])
    sp.add_argument("--variables", type=int, default=10)
    sp.add_argument("--states", type=int, nargs=2, default=(1, 3), metavar=("LO", "HI"))
    sp.add_argument("--supports", type=int, nargs=2, default=(1, 2), metavar=("LO", "HI"))
    sp.add_argument("--tails", type=int, nargs=2, default=(0, 2), metavar=("LO", "HI"))
    sp.add_argument("--weights", type=float, nargs=2, default=(1.0, 10.0), metavar=("LO", "HI"))
    sp.add_argument("--pairs", type=int, default=0, help="arc pairs to reverse")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("bench", help="compare both heuristics on generated instances", parents=[common])
    sp.add_argument("--preset", choices=("small", "scale", "large"), default="small")
    sp.add_argument("--instances", type=int, default=20)
    sp.add_argument("--variables", type=int)
    sp.add_argument("--pairs", type=int, help="arc pairs to reverse (default 4 small, 8 scale, 10 large)")
    sp.add_argument("--evidence-count", type=int, default=1)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--max-states", type=int)
    sp.add_argument("--max-seconds", type=float, default=10.0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-timing", action="store_true", help="omit time columns from stdout CSV")
    sp.add_argument("-o", "--output", help="records CSV; summary files are written beside it")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    for name, default in (("seed", 0), ("csv", False), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args, out)
    except CliError as exc:
        sys.stderr.write(f"bkb: {exc}\n")
        return exc.code
    except (InvalidGraph, InconsistentEvidence) as exc:
        sys.stderr.write(f"bkb: {exc}\n")
        return EXIT_INVALID
    except GenerationError as exc:
        sys.stderr.write(f"bkb: {exc}\n")
        return EXIT_LIMIT
    except ValueError as exc:
        sys.stderr.write(f"bkb: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
