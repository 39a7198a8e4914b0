from hypothesis import given, settings, strategies as st

from provgraph.graph import ProvenanceGraph
from provgraph.versioning import Decision, attach_target, decide_version, is_known_ancestor, version_stats

from conftest import ev, run, topo_order


def test_no_outgoing_means_reuse():
    g = ProvenanceGraph()
    s, _ = g.intern_subject(1, "a")
    o, _ = g.intern_object("/f", "file")
    assert decide_version(g, s, o) is Decision.REUSE
    assert attach_target(g, s, o, 0, 1) == s


def test_known_predecessor_reused_else_forked():
    g = ProvenanceGraph()
    s, _ = g.intern_subject(1, "a")
    o, _ = g.intern_object("/f", "file")
    other, _ = g.intern_object("/g", "file")
    out, _ = g.intern_object("/out", "file")
    g.append_edge(o, s, "read", 1, 1)
    g.append_edge(s, out, "write", 2, 2)
    assert decide_version(g, s, o) is Decision.REUSE
    assert decide_version(g, s, other) is Decision.NEW_VERSION
    s2 = attach_target(g, s, other, 3, 3)
    assert s2 != s and g.nodes[s2].prev_version == s
    assert g.subjects_by_pid[1] == s2


def test_deeper_ancestor_search():
    g = ProvenanceGraph()
    a, _ = g.intern_object("/a", "file")
    s, _ = g.intern_subject(1, "x")
    t, _ = g.intern_subject(2, "y")
    g.append_edge(a, s, "read", 1, 1)
    g.append_edge(s, t, "clone", 2, 2)
    assert not is_known_ancestor(g, a, t, 1)
    assert is_known_ancestor(g, a, t, 2)


def test_fork_chain_and_tag_copy():
    events = [ev(1, "read", 5, "/bin/sh", "/etc/passwd")]
    for i in range(3):
        events.append(ev(2 + 2 * i, "write", 5, "/bin/sh", f"/tmp/o{i}"))
        events.append(ev(3 + 2 * i, "read", 5, "/bin/sh", f"/etc/in{i}"))
    g = run(events).graph
    chain = [n for n in g.nodes if n.is_subject]
    assert [n.version for n in chain] == [1, 2, 3, 4]
    for prev, cur in zip(chain, chain[1:]):
        assert cur.prev_version == prev.id and prev.next_version == cur.id
    assert chain[1].fork_seq == 3
    first_tags = chain[0].tags
    assert chain[1].code_ttag == first_tags.code_ttag
    assert topo_order(g) is not None


def test_ping_pong_stays_acyclic():
    events = []
    seq = 1
    for _ in range(50):
        for a, b, f, h in ((1, 2, "/tmp/f", "/tmp/g"), (2, 1, "/tmp/g", "/tmp/f")):
            events.append(ev(seq, "write", a, "/bin/p", f)); seq += 1
            events.append(ev(seq, "read", b, "/bin/p", f)); seq += 1
    g = run(events).graph
    assert topo_order(g) is not None


def test_version_stats_examples():
    loads = [ev(i + 1, "load", 1 + i % 3, "/bin/app", f"/lib/l{i % 7}.so") for i in range(60)]
    st_load = version_stats(run(loads).graph)
    assert st_load["avg_subject_versions"] == 1.0
    reads = [ev(i + 1, "read", 1 + i % 3, "/bin/app", f"/data/d{i % 9}") for i in range(60)]
    st_read = version_stats(run(reads).graph)
    assert st_read["object_count_increase_pct"] == 0.0
    assert version_stats(ProvenanceGraph())["avg_subject_versions"] == 0.0


_KINDS = ("read", "write", "load", "exec")
_step = st.tuples(st.sampled_from(_KINDS), st.integers(1, 4), st.integers(0, 5))


def _events(steps):
    return [ev(i + 1, k, pid, "/bin/p", f"/tmp/f{obj}") for i, (k, pid, obj) in enumerate(steps)]


def _entity(g, nid):
    n = g.nodes[nid]
    return ("S", n.pid) if n.is_subject else ("O", n.name)


@settings(max_examples=150, deadline=None)
@given(st.lists(_step, max_size=200))
def test_random_streams_acyclic(steps):
    assert topo_order(run(_events(steps)).graph) is not None


def _reach(succ, start):
    seen, stack = {start}, [start]
    while stack:
        for v in succ.get(stack.pop(), ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


@settings(max_examples=200, deadline=None)
@given(st.lists(_step, min_size=1, max_size=200))
def test_dependence_fidelity(steps):
    """Entities reachable from each base node match time-respecting raw reachability."""
    g = run(_events(steps)).graph
    succ = {}
    for e in g.edges():
        succ.setdefault(e.src, []).append(e.dst)
    raw_edges = sorted(((e.seq, _entity(g, e.src), _entity(g, e.dst))
                        for e in g.edges() if e.kind != "version"))
    for n in g.nodes:
        if n.prev_version is not None:
            continue
        tainted = {_entity(g, n.id)}
        for _, a, b in raw_edges:
            if a in tainted:
                tainted.add(b)
        assert {_entity(g, v) for v in _reach(succ, n.id)} == tainted

_any_step = st.tuples(
    st.sampled_from(("read", "write", "load", "exec", "clone", "setuid", "exit", "rm", "accept")),
    st.integers(1, 5), st.integers(0, 6))


@settings(max_examples=200, deadline=None)
@given(st.lists(_any_step, max_size=150))
def test_acyclic_with_process_events(steps):
    events = []
    for i, (kind, pid, x) in enumerate(steps):
        if kind in ("clone", "setuid"):
            events.append(ev(i + 1, kind, pid, "/bin/p", target=x))
        elif kind == "exit":
            events.append(ev(i + 1, kind, pid, "/bin/p"))
        elif kind == "accept":
            events.append(ev(i + 1, kind, pid, "/bin/p", f"IP:10.0.0.{x}:22", "socket"))
        else:
            events.append(ev(i + 1, kind, pid, "/bin/p", f"/tmp/f{x}"))
    assert topo_order(run(events).graph) is not None
