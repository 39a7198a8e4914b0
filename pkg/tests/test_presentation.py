import random
from collections import defaultdict

import pytest

from provgraph.analysis import DepGraph, ScenarioEdge, ScenarioGraph, ScenarioNode, analyze_alarms, union_scenarios
from provgraph.presentation import (display_name, filter_repeated, merge_same_name, prune_uninteresting,
                                    reduction_report, simplify, suspect_nodes, to_dot, to_json)
from provgraph.syngen import generate, row_to_event

from conftest import run

BA = (2, 2, 0)
UNK = (0, 0, 0)


def sg(nodes, edges, entries=()):
    g = ScenarioGraph(entry_points=set(entries))
    for nid, name, subject, *rest in nodes:
        tags = rest[0] if rest else BA
        otype = "process" if subject else ("socket" if name.startswith("IP:") else "file")
        g.nodes[nid] = ScenarioNode(nid, name, subject, otype, tags, "impact", [nid], 100 + nid)
    for src, dst, kind, seq, *alert in edges:
        g.edges.append(ScenarioEdge(src, dst, kind, seq, seq * 10, bool(alert and alert[0]), [seq]))
    return g


def test_temp_file_pruned_alert_path_kept():
    g = sg([(0, "IP:6.6.6.6:80", False, UNK), (1, "/bin/sh", True, UNK), (2, "/tmp/scratch", False),
            (3, "/etc/passwd", False)],
           [(0, 1, "read", 1), (1, 2, "write", 2), (1, 2, "rm", 3), (1, 3, "write", 4, True)], entries=[0])
    out = prune_uninteresting(g)
    assert set(out.nodes) == {0, 1, 3}
    assert prune_uninteresting(ScenarioGraph()).nodes == {}


def test_confidential_flow_sink_is_suspect():
    g = sg([(0, "/etc/shadow", False, (2, 2, 3)), (1, "/tmp/x", True, UNK)], [(0, 1, "read", 1)])
    assert suspect_nodes(g) == {1}


def _prune_oracle(g):
    suspects = suspect_nodes(g)
    succ = defaultdict(set)
    for e in g.edges:
        succ[e.src].add(e.dst)

    def reaches(v):
        seen, stack = {v}, [v]
        while stack:
            x = stack.pop()
            if x in suspects:
                return True
            for y in succ[x] - seen:
                seen.add(y)
                stack.append(y)
        return False

    return {v for v in g.nodes if v in g.entry_points or reaches(v)}


def _random_scenario(rng, n, n_edges):
    tags = [BA, UNK, (2, 0, 0), (2, 2, 3)]
    nodes = [(i, f"/n{i}", rng.random() < 0.5, rng.choice(tags)) for i in range(n)]
    edges = []
    for seq in range(1, n_edges + 1):
        a, b = rng.sample(range(n), 2)
        edges.append((a, b, rng.choice(("read", "write")), seq, rng.random() < 0.08))
    return sg(nodes, edges, entries=[i for i in range(n) if rng.random() < 0.1])


def test_prune_matches_reachability_oracle():
    rng = random.Random(5)
    for _ in range(300):
        g = _random_scenario(rng, rng.randint(2, 15), rng.randint(0, 25))
        assert set(prune_uninteresting(g).nodes) == _prune_oracle(g)


def test_merge_subjects_by_basename_and_versions():
    g = sg([(0, "C:\\Windows\\System32\\cmd.exe", True), (1, "C:\\Windows\\cmd.exe", True),
            (2, "/tmp/f", False), (3, "/tmp/f", False), (4, "/tmp/g", False)],
           [(0, 2, "write", 1), (2, 3, "version", 2), (3, 1, "read", 3), (1, 4, "write", 4)])
    out = merge_same_name(g)
    names = sorted(display_name(n) for n in out.nodes.values())
    assert names == ["/tmp/f", "/tmp/g", "cmd.exe"]
    cmd = next(n for n in out.nodes.values() if n.name == "cmd.exe")
    assert len(cmd.members) == 2
    assert all(e.src != e.dst for e in out.edges) and len(out.edges) == 3


def test_merge_keeps_distinct_names():
    g = sg([(0, "/bin/a", True), (1, "/bin/b", True)], [(0, 1, "clone", 1)])
    out = merge_same_name(g)
    assert set(out.nodes) == {0, 1} and len(out.edges) == 1


def test_filter_contiguous_run():
    g = sg([(0, "p", True), (1, "/f", False)], [(0, 1, "write", s) for s in range(1, 51)])
    (e,) = filter_repeated(g).edges
    assert e.count == 50 and e.seqs == list(range(1, 51))
    assert "50. write" not in to_dot(filter_repeated(g)) and "1. write ×50" in to_dot(filter_repeated(g))


def test_filter_interleaved_keeps_first_and_last():
    edges = []
    for i in range(10):
        edges.append((0, 1, "write", 2 * i + 1))
        edges.append((0, 2, "write", 2 * i + 2))
    g = sg([(0, "p", True), (1, "/f", False), (2, "/g", False)], edges)
    out = filter_repeated(g)
    pf = [e.seq for e in out.edges if e.dst == 1]
    assert pf == [1, 19]


def test_filter_single_event_unchanged():
    g = sg([(0, "p", True), (1, "/f", False)], [(0, 1, "exec", 7)])
    (e,) = filter_repeated(g).edges
    assert (e.seq, e.count, e.kind) == (7, 1, "exec")


def _filter_oracle(g):
    """Expected (src, dst, kind) -> sorted displayed seqs."""
    edges = sorted(g.edges, key=lambda e: e.seq)
    by_node = defaultdict(list)
    for e in edges:
        by_node[e.src].append(e.seq)
        by_node[e.dst].append(e.seq)
    groups = defaultdict(list)
    for e in edges:
        groups[(e.src, e.dst, e.kind)].append(e.seq)
    expect = {}
    for key, seqs in groups.items():
        def run_of(node):
            order = by_node[node]
            i = order.index(seqs[0])
            return order[i:i + len(seqs)] == seqs
        if len(seqs) == 1 or (run_of(key[0]) and run_of(key[1])):
            expect[key] = [seqs[0]]
        else:
            expect[key] = [seqs[0], seqs[-1]]
    return expect


def test_filter_matches_first_last_oracle():
    rng = random.Random(9)
    for _ in range(200):
        n = rng.randint(2, 5)
        nodes = [(i, f"/n{i}", True) for i in range(n)]
        edges = []
        for seq in range(1, rng.randint(1, 40)):
            a, b = rng.sample(range(n), 2)
            edges.append((a, b, rng.choice(("read", "write")), seq))
        g = sg(nodes, edges)
        got = defaultdict(list)
        out = filter_repeated(g)
        for e in out.edges:
            got[(e.src, e.dst, e.kind)].append(e.seq)
        assert dict(got) == _filter_oracle(g)
        assert sum(e.count for e in out.edges) == len(g.edges)


def test_dot_shapes_labels_and_determinism():
    g = sg([(0, "IP:1.2.3.4:80", False, UNK), (1, "/usr/bin/firefox", True), (2, "/tmp/d", False)],
           [(0, 1, "read", 3), (1, 2, "exec", 4, True)], entries=[0])
    text = to_dot(g)
    assert 'label="IP:1.2.3.4:80", shape=diamond' in text
    assert 'label="firefox", shape=oval' in text and 'shape=box' in text
    assert 'label="4. exec", color=red' in text
    assert text == to_dot(g) and text.startswith("digraph")
    data = to_json(g)
    assert [e["seq"] for e in data["edges"]] == [3, 4] and data["entry_points"] == [0]


@pytest.fixture(scope="module")
def w2_scenario():
    rows, truth = generate("w2", 20_000, 42)
    g = run([row_to_event(r) for r in rows]).graph
    dg = DepGraph.from_graph(g)
    return g, union_scenarios(dg, analyze_alarms(dg, g.alarms)), truth


def test_pipeline_steps_never_grow(w2_scenario):
    _, whole, _ = w2_scenario
    steps = [whole]
    for fn in (prune_uninteresting, merge_same_name, filter_repeated):
        steps.append(fn(steps[-1]))
    for a, b in zip(steps, steps[1:]):
        assert len(b.nodes) <= len(a.nodes) and len(b.edges) <= len(a.edges)


def test_simplify_keeps_attack_entities(w2_scenario):
    g, whole, truth = w2_scenario
    before = {display_name(n) for n in whole.nodes.values()}
    after = {display_name(n) for n in simplify(whole).nodes.values()}
    planted = set(truth.entities)
    assert planted <= before and planted & before <= after


def test_reduction_report_chain(w2_scenario):
    g, whole, _ = w2_scenario
    simp = simplify(whole)
    rep = reduction_report(g.event_count, whole, simp)
    assert rep["overall_factor"] == pytest.approx(rep["forward_factor"] * rep["simplify_factor"])
    assert rep["simplified_edges"] == len(simp.edges)
