"""Tag-guided backward (origin) and forward (impact) searches.

Both searches run over a :class:`DepGraph`, a read-only adjacency view
decoded once from a :class:`ProvenanceGraph` (or built directly in tests).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Set, Tuple

from .graph import ProvenanceGraph
from . import encoding as enc
from .tags import CTag, TTag

UNKNOWN = int(TTag.UNKNOWN)
BENIGN = int(TTag.BENIGN)
SENSITIVE = int(CTag.SENSITIVE)

DEFAULT_DTH = 16

# edges that carry no data and so create no dependence worth tracing back
NO_FLOW_KINDS = frozenset(("connect", "accept"))


class NoEntryPointReachable(Exception):
    """Backward search exhausted without meeting an entry point."""


class NodeView(NamedTuple):
    id: int
    is_subject: bool
    name: str
    obj_type: str
    code: int
    data: int
    ctag: int
    entry: bool
    base: int
    version: int = 1
    pid: int = 0


class DepEdge(NamedTuple):
    src: int
    dst: int
    kind: str
    ts_ms: int
    seq: int
    alert: bool
    handle: Optional[Tuple[int, int]] = None


class DepGraph:
    def __init__(self, nodes: List[NodeView], edges: Iterable[DepEdge]):
        self.nodes = nodes
        self.out: List[List[DepEdge]] = [[] for _ in nodes]
        self.inc: List[List[DepEdge]] = [[] for _ in nodes]
        self.by_handle: Dict[Tuple[int, int], DepEdge] = {}
        self.edge_count = 0
        for e in edges:
            self.out[e.src].append(e)
            self.inc[e.dst].append(e)
            if e.handle is not None:
                self.by_handle[e.handle] = e
            self.edge_count += 1

    @classmethod
    def from_graph(cls, g: ProvenanceGraph) -> "DepGraph":
        nodes = []
        base_of: List[int] = []
        for n in g.nodes:
            base = n.id if n.prev_version is None else base_of[n.prev_version]
            base_of.append(base)
            # nothing flows into a zero in-degree base node, so its tags are the initial ones
            entry = n.prev_version is None and n.in_degree == 0 and n.data_ttag == UNKNOWN
            if n.is_subject:
                nodes.append(NodeView(n.id, True, n.cmdline, "process", n.code_ttag, n.data_ttag,
                                      n.ctag, entry, base, n.version, n.pid))
            else:
                nodes.append(NodeView(n.id, False, n.name, n.obj_type, n.data_ttag, n.data_ttag,
                                      n.ctag, entry, base, n.version))
        return cls(nodes, _decode_edges(g))

    def entry_points(self) -> List[int]:
        return [n.id for n in self.nodes if n.entry]


def _decode_edges(g: ProvenanceGraph):
    o_to_s = {enc.OPCODES[k] for k in ("read", "exec", "load", "connect", "accept")}
    s_to_s = {enc.OP_CLONE, enc.OP_SETUID}
    names = enc.OP_NAMES
    for n in g.nodes:
        if n.next_version is not None:
            nxt = g.nodes[n.next_version]
            yield DepEdge(n.id, nxt.id, "version", nxt.fork_ts, nxt.fork_seq, False, None)
        if not n.is_subject:
            continue
        sid = n.id
        objtab = n.objtab
        for idx, rec, ts, seq in g.subject_records(sid):
            op = rec.op
            if op == enc.OP_TIMEGAP or op == enc.OP_ESCAPE:
                continue
            if op in s_to_s:
                yield DepEdge(sid, rec.ref, names[op], ts, seq, rec.alert, (sid, idx))
            elif op in o_to_s:
                yield DepEdge(objtab[rec.ref], sid, names[op], ts, seq, rec.alert, (sid, idx))
            else:
                yield DepEdge(sid, objtab[rec.ref], names[op], ts, seq, rec.alert, (sid, idx))


@dataclass
class CostModel:
    benign_edge_cost: int = 1 << 20
    untrusted_edge_cost: int = 1
    boundary_edge_cost: int = 0
    hard_prune_benign: bool = False


def _benign_target(v: NodeView) -> bool:
    return v.code >= BENIGN if v.is_subject else v.data >= BENIGN


def edge_cost_backward(u: NodeView, v: NodeView, cm: CostModel = CostModel()) -> Optional[int]:
    """Cost of walking the dependence ``u -> v`` backwards; None when pruned."""
    if (u.code == UNKNOWN or u.data == UNKNOWN) and (v.code >= BENIGN or v.data >= BENIGN):
        return cm.boundary_edge_cost
    if u.code >= BENIGN and u.data >= BENIGN:
        return None if cm.hard_prune_benign else cm.benign_edge_cost
    return cm.untrusted_edge_cost


def edge_cost_forward(u: NodeView, v: NodeView, cm: CostModel = CostModel()) -> Optional[int]:
    if u.ctag >= SENSITIVE and (v.code == UNKNOWN or v.data == UNKNOWN):
        return cm.boundary_edge_cost
    if _benign_target(v):
        return None if cm.hard_prune_benign else cm.benign_edge_cost
    return cm.untrusted_edge_cost


@dataclass
class BackwardResult:
    entries: List[int]
    cost: Dict[int, int]                  # entry -> path cost
    path_nodes: Set[int]
    path_edges: List[DepEdge]
    settled: int = 0
    revisits: int = 0


def backward_analysis(dg: DepGraph, suspects: Iterable[int], cm: CostModel = CostModel(),
                      all_entries: bool = False, cost_cap: Optional[int] = None) -> BackwardResult:
    """Dijkstra over reversed dependence edges from ``suspects``.

    Version edges cost nothing. Ties break on (cost, seq of the edge that
    reached the node, node id), so earlier causes win among equal-cost paths.
    Without ``all_entries`` the search stops at the first entry point settled.
    """
    suspects = list(dict.fromkeys(suspects))
    if not suspects:
        raise ValueError("backward analysis needs at least one suspect")
    nodes = dg.nodes
    dist: Dict[int, Tuple[int, int]] = {}
    via: Dict[int, Optional[DepEdge]] = {}
    heap = []
    for s in suspects:
        dist[s] = (0, 0)
        via[s] = None
        heap.append((0, 0, s))
    heapq.heapify(heap)
    settled: Set[int] = set()
    revisits = 0
    found: List[int] = []
    while heap:
        d, q, v = heapq.heappop(heap)
        if v in settled:
            continue
        if (d, q) != dist[v]:
            continue
        if cost_cap is not None and d > cost_cap:
            break
        settled.add(v)
        vn = nodes[v]
        if vn.entry:
            found.append(v)
            if not all_entries:
                break
        for e in dg.inc[v]:
            if e.kind in NO_FLOW_KINDS:
                continue
            u = e.src
            w = 0 if e.kind == "version" else edge_cost_backward(nodes[u], vn, cm)
            if w is None:
                continue
            if u in settled:
                # a DAG never offers a cheaper route to a settled node
                if d + w < dist[u][0]:
                    revisits += 1
                continue
            cand = (d + w, e.seq)
            old = dist.get(u)
            if old is None or cand < old:
                dist[u] = cand
                via[u] = e
                heapq.heappush(heap, (cand[0], cand[1], u))
    if not found:
        raise NoEntryPointReachable(f"no entry point reachable from {suspects}")
    path_nodes: Set[int] = set()
    path_edges: List[DepEdge] = []
    for ent in found:
        v = ent
        while v is not None and v not in path_nodes:
            path_nodes.add(v)
            e = via[v]
            if e is None:
                break
            path_edges.append(e)
            v = e.dst
    return BackwardResult(found, {e: dist[e][0] for e in found}, path_nodes, path_edges,
                          len(settled), revisits)


def forward_analysis(dg: DepGraph, seeds: Iterable[int], d_th: int = DEFAULT_DTH,
                     cm: CostModel = CostModel()) -> Dict[int, int]:
    """Minimum forward cost of every node within ``d_th`` of a seed."""
    nodes = dg.nodes
    dist: Dict[int, int] = {}
    heap = []
    for s in seeds:
        if s not in dist:
            dist[s] = 0
            heap.append((0, s))
    heapq.heapify(heap)
    done: Set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done or d != dist[u]:
            continue
        done.add(u)
        un = nodes[u]
        for e in dg.out[u]:
            v = e.dst
            w = 0 if e.kind == "version" else edge_cost_forward(un, nodes[v], cm)
            if w is None:
                continue
            nd = d + w
            if nd > d_th:
                continue
            if nd < dist.get(v, nd + 1):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def naive_forward(dg: DepGraph, entries: Iterable[int]) -> Set[int]:
    """Plain reachability, the no-tag, no-threshold baseline."""
    seen = set(entries)
    stack = list(seen)
    while stack:
        u = stack.pop()
        for e in dg.out[u]:
            if e.dst not in seen:
                seen.add(e.dst)
                stack.append(e.dst)
    return seen


@dataclass
class ScenarioNode:
    id: int
    name: str
    is_subject: bool
    obj_type: str
    tags: Tuple[int, int, int]
    role: str = "impact"      # entry, path, suspect or impact
    members: List[int] = field(default_factory=list)
    pid: int = 0


@dataclass
class ScenarioEdge:
    src: int
    dst: int
    kind: str
    seq: int
    ts_ms: int
    alert: bool
    seqs: List[int] = field(default_factory=list)
    count: int = 1


@dataclass
class ScenarioGraph:
    nodes: Dict[int, ScenarioNode] = field(default_factory=dict)
    edges: List[ScenarioEdge] = field(default_factory=list)
    entry_points: Set[int] = field(default_factory=set)
    suspects: Set[int] = field(default_factory=set)
    alarms: List[int] = field(default_factory=list)

    def has_alert(self) -> bool:
        return any(e.alert for e in self.edges)

    def node_names(self) -> Set[str]:
        return {n.name for n in self.nodes.values()}

    def event_count(self) -> int:
        return sum(len(e.seqs) or e.count for e in self.edges)


def build_scenario(dg: DepGraph, node_ids: Iterable[int], entries: Iterable[int],
                   path: Iterable[int] = ()) -> ScenarioGraph:
    keep = set(node_ids)
    entries = set(entries) & keep
    path = set(path)
    sg = ScenarioGraph(entry_points=entries)
    for nid in sorted(keep):
        n = dg.nodes[nid]
        role = "entry" if nid in entries else ("path" if nid in path else "impact")
        sg.nodes[nid] = ScenarioNode(nid, n.name, n.is_subject, n.obj_type, (n.code, n.data, n.ctag),
                                     role, [nid], n.pid)
    for nid in sorted(keep):
        for e in dg.out[nid]:
            if e.dst in keep:
                sg.edges.append(ScenarioEdge(e.src, e.dst, e.kind, e.seq, e.ts_ms, e.alert, [e.seq]))
                if e.alert:
                    sg.suspects.update((e.src, e.dst))
    for nid in sg.suspects:
        if sg.nodes[nid].role == "impact":
            sg.nodes[nid].role = "suspect"
    sg.edges.sort(key=lambda e: (e.seq, e.src, e.dst, e.kind))
    return sg


def alarm_edge(dg: DepGraph, alarm) -> DepEdge:
    handle = tuple(alarm.edge)
    e = dg.by_handle.get(handle)
    if e is None:
        raise KeyError(f"alarm {alarm.alarm_id} refers to unknown edge {handle}")
    return e


def analyze_alarm(dg: DepGraph, alarm, d_th: int = DEFAULT_DTH, cm: CostModel = CostModel(),
                  all_entries: bool = False) -> Tuple[BackwardResult, Set[int]]:
    """Backward search from the alarm edge's source, then forward impact."""
    e = alarm_edge(dg, alarm)
    back = backward_analysis(dg, [e.src], cm, all_entries=all_entries)
    seeds = set(back.entries) | back.path_nodes
    fwd = forward_analysis(dg, seeds, d_th, cm)
    included = set(fwd) | {e.src, e.dst}
    return back, included


def analyze_alarms(dg: DepGraph, alarms, d_th: int = DEFAULT_DTH, cm: CostModel = CostModel(),
                   all_entries: bool = False) -> List[ScenarioGraph]:
    """One scenario per entry point; alarms sharing an entry are unioned.

    Only scenarios containing at least one alert edge are returned.
    """
    groups: Dict[Tuple[int, ...], dict] = {}
    for alarm in alarms:
        try:
            back, included = analyze_alarm(dg, alarm, d_th, cm, all_entries)
        except NoEntryPointReachable:
            continue
        key = tuple(sorted(back.entries))
        grp = groups.setdefault(key, {"nodes": set(), "path": set(), "alarms": []})
        grp["nodes"] |= included
        grp["path"] |= back.path_nodes
        grp["alarms"].append(alarm.alarm_id)
    out = []
    for key in sorted(groups):
        grp = groups[key]
        sg = build_scenario(dg, grp["nodes"], key, grp["path"])
        sg.alarms = grp["alarms"]
        if sg.has_alert():
            out.append(sg)
    return out


def union_scenarios(dg: DepGraph, scenarios: List[ScenarioGraph]) -> ScenarioGraph:
    nodes: Set[int] = set()
    entries: Set[int] = set()
    path: Set[int] = set()
    alarms: List[int] = []
    for sg in scenarios:
        nodes |= set(sg.nodes)
        entries |= sg.entry_points
        path |= {n for n, v in sg.nodes.items() if v.role == "path"}
        alarms += sg.alarms
    merged = build_scenario(dg, nodes, entries, path)
    merged.alarms = alarms
    return merged
