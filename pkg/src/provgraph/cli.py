"""Command-line driver: ingest, analyze, gen, bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .analysis import DEFAULT_DTH, CostModel, DepGraph, analyze_alarms, union_scenarios
from .events import ParseError, stream_events, write_events
from .ingest import Ingestor
from .policy import PolicyEngine, PolicyError, load_policy_file, load_stock_policy
from .presentation import dump_json, export_dot, reduction_report, simplify, to_json
from .snapshot import SnapshotError, load_graph, save_graph
from .syngen import CAMPAIGNS, generate, row_to_event

log = logging.getLogger("provgraph")

EXIT_IO = 1
EXIT_FORMAT = 3


def _setup_logging() -> None:
    level = os.environ.get("PROVGRAPH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _engine(policies: Optional[List[str]], single: bool, always: bool) -> PolicyEngine:
    rules = []
    if not policies:
        rules = load_stock_policy()
    for p in policies or []:
        rules.extend(load_stock_policy() if p == "stock" else load_policy_file(p))
    return PolicyEngine(rules, single_ttag=single, detect_always=always)


def _emit_json(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True, default=str)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _open_events(path: str):
    if path == "-":
        return sys.stdin
    return open(path, "r", encoding="utf-8")


def _run_ingest(path: str, engine: PolicyEngine, lenient: bool) -> Ingestor:
    ing = Ingestor(engine)
    fh = _open_events(path)
    try:
        ing.ingest(stream_events(fh, strict=not lenient))
    finally:
        if fh is not sys.stdin:
            fh.close()
    return ing


def cmd_ingest(args) -> int:
    engine = _engine(args.policies, args.single_ttag, args.detect_always)
    ing = _run_ingest(args.events, engine, args.lenient)
    stats = ing.stats()
    stats["mode"] = "single" if args.single_ttag else "split"
    if args.compare_modes:
        if args.events == "-":
            raise ValueError("--compare-modes needs a file, not stdin")
        other = _engine(args.policies, not args.single_ttag, args.detect_always)
        stats["alarms_other_mode"] = _run_ingest(args.events, other, args.lenient).stats()["alarms"]
    if args.alarms_out:
        with open(args.alarms_out, "w", encoding="utf-8") as fh:
            for a in ing.alarms:
                fh.write((a.json_line() if args.alarms_json else a.text_line()) + "\n")
    if args.graph_out:
        stats["snapshot_bytes"] = save_graph(ing.graph, args.graph_out)
    _emit_json(stats, args.stats_out)
    return 0


def cmd_analyze(args) -> int:
    g = load_graph(args.graph)
    if args.alarm == "all":
        alarms = list(g.alarms)
    else:
        wanted = {int(x) for x in args.alarm.split(",")}
        alarms = [a for a in g.alarms if a.alarm_id in wanted]
        missing = wanted - {a.alarm_id for a in alarms}
        if missing:
            raise ValueError(f"no alarm with id {sorted(missing)}")
    dg = DepGraph.from_graph(g)
    cm = CostModel(hard_prune_benign=args.hard_prune)
    scenarios = analyze_alarms(dg, alarms, args.dth, cm, args.all_entries)
    report = {"alarms": len(alarms), "scenarios": len(scenarios), "raw_events": g.event_count,
              "per_scenario": []}
    if scenarios:
        for sg in scenarios:
            report["per_scenario"].append({
                "entries": sorted(dg.nodes[e].name for e in sg.entry_points),
                "alarms": sg.alarms, "nodes": len(sg.nodes), "edges": len(sg.edges)})
        whole = union_scenarios(dg, scenarios)
        shown = whole if args.no_simplify else simplify(whole)
        report.update(reduction_report(g.event_count, whole, shown))
        if args.dot_out:
            export_dot(shown, args.dot_out, title=Path(args.graph).stem)
        if args.json_out:
            dump_json(shown, args.json_out)
        elif not args.dot_out:
            report["scenario"] = to_json(shown)
    _emit_json(report, args.report_out)
    return 0


def cmd_gen(args) -> int:
    rows, truth = generate(args.campaign, args.benign_events, args.seed)
    events = (row_to_event(r) for r in rows)
    if args.out == "-":
        write_events(events, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_events(events, fh)
    if args.truth_out:
        truth.save(args.truth_out)
    return 0


def cmd_bench(args) -> int:
    rows, truth = generate(args.campaign, args.events, args.seed)
    engine = _engine(args.policies, args.single_ttag, False)
    ing = Ingestor(engine)
    ing.ingest_tuples(rows)
    stats = ing.stats()
    stats["campaign"] = args.campaign
    stats["mode"] = "single" if args.single_ttag else "split"
    _emit_json(stats, args.stats_out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="provgraph", description="Provenance graph ingestion and attack reconstruction.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="build a tagged graph from an event stream")
    p.add_argument("--events", required=True, help="JSON-lines event file, or - for stdin")
    p.add_argument("--policies", action="append", help="policy file (repeatable); 'stock' for the built-in set")
    p.add_argument("--alarms-out")
    p.add_argument("--alarms-json", action="store_true", help="write alarms as JSON lines")
    p.add_argument("--graph-out")
    p.add_argument("--stats-out")
    p.add_argument("--single-ttag", action="store_true")
    p.add_argument("--detect-always", action="store_true")
    p.add_argument("--compare-modes", action="store_true", help="also count alarms in the other tag mode")
    p.add_argument("--lenient", action="store_true", help="re-sequence out-of-order events instead of failing")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("analyze", help="reconstruct scenarios from a graph snapshot")
    p.add_argument("--graph", required=True)
    p.add_argument("--alarm", default="all", help="alarm id, comma list, or 'all'")
    p.add_argument("--dth", type=int, default=DEFAULT_DTH)
    p.add_argument("--all-entries", action="store_true")
    p.add_argument("--hard-prune", action="store_true")
    p.add_argument("--no-simplify", action="store_true")
    p.add_argument("--dot-out")
    p.add_argument("--json-out")
    p.add_argument("--report-out")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("gen", help="emit a synthetic campaign and its ground truth")
    p.add_argument("--campaign", required=True, choices=CAMPAIGNS)
    p.add_argument("--benign-events", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="-")
    p.add_argument("--truth-out")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("bench", help="generate and ingest N events, report throughput")
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--campaign", default="benign", choices=CAMPAIGNS)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--policies", action="append")
    p.add_argument("--single-ttag", action="store_true")
    p.add_argument("--stats-out")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "benign_events", 0) < 0:
        print("provgraph: error: --benign-events must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ParseError, PolicyError, SnapshotError) as exc:
        print(f"provgraph: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"provgraph: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"provgraph: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
