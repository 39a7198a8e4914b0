"""Version creation that keeps the dependence graph acyclic.

A new incoming edge ``source -> target`` forks ``target`` unless one of two
conditions holds: the target has no outgoing edge yet (nothing depends on
its state), or the source is already known to be an ancestor of the
target. The ancestor test is an under-approximation: direct predecessors,
optionally widened by a bounded backward search over predecessor sets. It
never claims ancestry that does not hold, which is all acyclicity needs.
"""

from __future__ import annotations

from enum import Enum

from .graph import ProvenanceGraph

DEFAULT_ANCESTOR_DEPTH = 1


class Decision(Enum):
    REUSE = "reuse"
    NEW_VERSION = "new_version"


def is_known_ancestor(graph: ProvenanceGraph, source: int, target: int, depth: int = DEFAULT_ANCESTOR_DEPTH) -> bool:
    nodes = graph.nodes
    preds = nodes[target].preds
    if source in preds:
        return True
    if depth <= 1:
        return False
    frontier = set(preds)
    seen = set(frontier)
    for _ in range(depth - 1):
        nxt = set()
        for nid in frontier:
            for p in nodes[nid].preds:
                if p == source:
                    return True
                if p not in seen:
                    seen.add(p)
                    nxt.add(p)
        if not nxt:
            break
        frontier = nxt
    return False


def decide_version(graph: ProvenanceGraph, target: int, source: int,
                   ancestor_depth: int = DEFAULT_ANCESTOR_DEPTH) -> Decision:
    node = graph.nodes[target]
    if not node.has_outgoing:
        return Decision.REUSE
    if is_known_ancestor(graph, source, target, ancestor_depth):
        return Decision.REUSE
    return Decision.NEW_VERSION


def fork_version(graph: ProvenanceGraph, node: int, ts_ms: int = 0, seq: int = 0) -> int:
    return graph.fork_version(node, ts_ms, seq)


def attach_target(graph: ProvenanceGraph, target: int, source: int, ts_ms: int, seq: int,
                  ancestor_depth: int = DEFAULT_ANCESTOR_DEPTH) -> int:
    """The version of ``target`` a new edge from ``source`` should attach to."""
    node = graph.nodes[target]
    if not node.has_outgoing or source in node.preds:
        return target
    if ancestor_depth > 1 and is_known_ancestor(graph, source, target, ancestor_depth):
        return target
    return graph.fork_version(target, ts_ms, seq)


def version_stats(graph: ProvenanceGraph) -> dict:
    """Average versions per subject and the object-count increase from versioning."""
    subj_versions = subj_bases = obj_versions = obj_bases = 0
    for n in graph.nodes:
        if n.is_subject:
            subj_versions += 1
            subj_bases += n.prev_version is None
        else:
            obj_versions += 1
            obj_bases += n.prev_version is None
    return {
        "subject_bases": subj_bases,
        "subject_versions": subj_versions,
        "object_bases": obj_bases,
        "object_versions": obj_versions,
        "avg_subject_versions": subj_versions / subj_bases if subj_bases else 0.0,
        "object_count_increase_pct": 100.0 * (obj_versions - obj_bases) / obj_bases if obj_bases else 0.0,
    }
