"""Scenario simplification (prune, merge, filter) and DOT/JSON export."""

from __future__ import annotations

import json
import re
from collections import defaultdict
from typing import Dict, List, Set, Tuple

from .analysis import SENSITIVE, UNKNOWN, ScenarioEdge, ScenarioGraph, ScenarioNode

_ROLE_RANK = {"entry": 3, "suspect": 2, "path": 1, "impact": 0}


def _copy_node(n: ScenarioNode, **kw) -> ScenarioNode:
    d = dict(id=n.id, name=n.name, is_subject=n.is_subject, obj_type=n.obj_type, tags=n.tags,
             role=n.role, members=list(n.members), pid=n.pid)
    d.update(kw)
    return ScenarioNode(**d)


def _copy_edge(e: ScenarioEdge, **kw) -> ScenarioEdge:
    d = dict(src=e.src, dst=e.dst, kind=e.kind, seq=e.seq, ts_ms=e.ts_ms, alert=e.alert,
             seqs=list(e.seqs), count=e.count)
    d.update(kw)
    return ScenarioEdge(**d)


def suspect_nodes(g: ScenarioGraph) -> Set[int]:
    """Alert-edge endpoints plus sinks of confidential flows into untrusted nodes."""
    out = set()
    for e in g.edges:
        if e.alert:
            out.add(e.src)
            out.add(e.dst)
            continue
        s, d = g.nodes[e.src].tags, g.nodes[e.dst].tags
        if s[2] >= SENSITIVE and (d[0] == UNKNOWN or d[1] == UNKNOWN):
            out.add(e.dst)
    return out


def prune_uninteresting(g: ScenarioGraph) -> ScenarioGraph:
    """Drop nodes that no suspect depends on; entry points always stay."""
    suspects = suspect_nodes(g)
    preds: Dict[int, List[int]] = defaultdict(list)
    for e in g.edges:
        preds[e.dst].append(e.src)
    keep = set(suspects)
    stack = list(suspects)
    while stack:
        v = stack.pop()
        for u in preds[v]:
            if u not in keep:
                keep.add(u)
                stack.append(u)
    keep |= g.entry_points & set(g.nodes)
    out = ScenarioGraph(entry_points=set(g.entry_points) & keep, suspects=suspects & keep,
                        alarms=list(g.alarms))
    out.nodes = {k: _copy_node(v) for k, v in g.nodes.items() if k in keep}
    out.edges = [_copy_edge(e) for e in g.edges if e.src in keep and e.dst in keep]
    return out


def display_name(n: ScenarioNode) -> str:
    if n.is_subject:
        return re.split(r"[\\/]", n.name)[-1] or n.name
    return n.name


def merge_same_name(g: ScenarioGraph) -> ScenarioGraph:
    """Merge subjects by executable basename and objects by full name.

    This also collapses all versions of one entity. Edges are re-targeted;
    edges that become self-loops are dropped.
    """
    key_of: Dict[int, Tuple[bool, str]] = {}
    groups: Dict[Tuple[bool, str], List[int]] = defaultdict(list)
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        key = (n.is_subject, display_name(n))
        key_of[nid] = key
        groups[key].append(nid)
    rep: Dict[int, int] = {}
    out = ScenarioGraph(alarms=list(g.alarms))
    for key, members in groups.items():
        head = members[0]
        nodes = [g.nodes[m] for m in members]
        role = max((n.role for n in nodes), key=_ROLE_RANK.__getitem__)
        tags = (min(n.tags[0] for n in nodes), min(n.tags[1] for n in nodes), max(n.tags[2] for n in nodes))
        allm = sorted({x for n in nodes for x in n.members})
        pids = sorted({n.pid for n in nodes})
        out.nodes[head] = _copy_node(g.nodes[head], name=key[1], role=role, tags=tags,
                                     members=allm, pid=pids[0])
        for m in members:
            rep[m] = head
    out.entry_points = {rep[n] for n in g.entry_points if n in rep}
    out.suspects = {rep[n] for n in g.suspects if n in rep}
    for e in g.edges:
        s, d = rep[e.src], rep[e.dst]
        if s == d:
            continue
        out.edges.append(_copy_edge(e, src=s, dst=d))
    out.edges.sort(key=lambda e: (e.seq, e.src, e.dst, e.kind))
    return out


def member_count(n: ScenarioNode) -> int:
    """Number of distinct processes (by pid) or versions merged into ``n``."""
    return len(n.members)


def filter_repeated(g: ScenarioGraph) -> ScenarioGraph:
    """Collapse repeated (src, dst, kind) events.

    A group whose occurrences are contiguous in the event order of both
    endpoints becomes one edge annotated with its count. Otherwise the
    first and last occurrences are kept; the first carries the seqs of
    everything before the last.
    """
    edges = sorted(g.edges, key=lambda e: (e.seq, e.src, e.dst, e.kind))
    incident: Dict[int, List[int]] = defaultdict(list)
    for i, e in enumerate(edges):
        incident[e.src].append(i)
        if e.dst != e.src:
            incident[e.dst].append(i)
    groups: Dict[Tuple[int, int, str], List[int]] = defaultdict(list)
    for i, e in enumerate(edges):
        groups[(e.src, e.dst, e.kind)].append(i)

    def contiguous(members: List[int], endpoint: int) -> bool:
        order = incident[endpoint]
        pos = {i: p for p, i in enumerate(order)}
        ps = [pos[m] for m in members]
        return max(ps) - min(ps) + 1 == len(ps)

    out_edges: List[ScenarioEdge] = []
    for key, members in groups.items():
        occ = [edges[i] for i in members]
        seqs = [s for e in occ for s in (e.seqs or [e.seq])]
        total = sum(e.count for e in occ)
        if len(occ) == 1:
            out_edges.append(_copy_edge(occ[0]))
        elif contiguous(members, key[0]) and contiguous(members, key[1]):
            out_edges.append(_copy_edge(occ[0], alert=any(e.alert for e in occ), seqs=seqs, count=total))
        else:
            first, last = occ[0], occ[-1]
            head = occ[:-1]
            out_edges.append(_copy_edge(first, alert=any(e.alert for e in head),
                                        seqs=[s for e in head for s in (e.seqs or [e.seq])],
                                        count=sum(e.count for e in head)))
            out_edges.append(_copy_edge(last, seqs=list(last.seqs or [last.seq]), count=last.count))
    out_edges.sort(key=lambda e: (e.seq, e.src, e.dst, e.kind))
    out = ScenarioGraph(entry_points=set(g.entry_points), suspects=set(g.suspects), alarms=list(g.alarms))
    out.nodes = {k: _copy_node(v) for k, v in g.nodes.items()}
    out.edges = out_edges
    return out


def simplify(g: ScenarioGraph) -> ScenarioGraph:
    return filter_repeated(merge_same_name(prune_uninteresting(g)))


# -- export --------------------------------------------------------------------

def _dot_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _shape(n: ScenarioNode) -> str:
    if n.is_subject:
        return "oval"
    if n.obj_type == "socket":
        return "diamond"
    return "box"


def to_dot(g: ScenarioGraph, title: str = "scenario") -> str:
    lines = [f"digraph {_dot_str(title)} {{", "  rankdir=LR;"]
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        label = display_name(n)
        if len(n.members) > 1:
            label += f" [{len(n.members)}]"
        attrs = [f"label={_dot_str(label)}", f"shape={_shape(n)}"]
        if n.role == "entry":
            attrs.append("penwidth=2")
        lines.append(f"  n{nid} [{', '.join(attrs)}];")
    for e in sorted(g.edges, key=lambda e: (e.seq, e.src, e.dst, e.kind)):
        label = f"{e.seq}. {e.kind}"
        if e.count > 1 and len(e.seqs) == e.count:
            label += f" ×{e.count}"
        attrs = [f"label={_dot_str(label)}"]
        if e.alert:
            attrs += ["color=red", "fontcolor=red", "style=solid"]
        lines.append(f"  n{e.src} -> n{e.dst} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(g: ScenarioGraph, path, title: str = "scenario") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_dot(g, title))


def to_json(g: ScenarioGraph) -> dict:
    return {
        "nodes": [
            {"id": n.id, "name": n.name, "display": display_name(n), "subject": n.is_subject,
             "type": n.obj_type, "tags": list(n.tags), "role": n.role, "members": n.members}
            for n in (g.nodes[k] for k in sorted(g.nodes))
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind, "seq": e.seq, "ts_ms": e.ts_ms,
             "alert": e.alert, "count": e.count, "seqs": e.seqs}
            for e in g.edges
        ],
        "entry_points": sorted(g.entry_points),
        "suspects": sorted(g.suspects),
        "alarms": g.alarms,
    }


def dump_json(g: ScenarioGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json(g), fh, indent=1, sort_keys=True)


def reduction_report(raw_events: int, forward: ScenarioGraph, simplified: ScenarioGraph) -> dict:
    fwd_edges = len(forward.edges)
    simp_edges = len(simplified.edges)
    return {
        "raw_events": raw_events,
        "forward_nodes": len(forward.nodes),
        "forward_edges": fwd_edges,
        "simplified_nodes": len(simplified.nodes),
        "simplified_edges": simp_edges,
        "forward_factor": raw_events / fwd_edges if fwd_edges else None,
        "simplify_factor": fwd_edges / simp_edges if simp_edges else None,
        "overall_factor": raw_events / simp_edges if simp_edges else None,
    }
