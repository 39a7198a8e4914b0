import pytest

from provgraph.events import AuditEvent, ObjectRef
from provgraph.ingest import Ingestor
from provgraph.policy import PolicyEngine, load_stock_policy, parse_policy_text


def ev(seq, kind, pid, exe="/bin/true", name=None, otype="file", target=None, ts=None, attrs=None):
    obj = ObjectRef(name, otype) if name is not None else None
    return AuditEvent(seq, seq * 10 if ts is None else ts, kind, pid, exe, obj, target, attrs or {})


def run(events, policy=None, **engine_kw):
    """Ingest events under the stock rules (or given policy text)."""
    rules = load_stock_policy() if policy is None else parse_policy_text(policy)
    ing = Ingestor(PolicyEngine(rules, **engine_kw))
    ing.ingest(events)
    return ing


def topo_order(graph):
    """Kahn's algorithm over all stored and version edges; None on a cycle."""
    indeg = [0] * len(graph.nodes)
    succ = [[] for _ in graph.nodes]
    for e in graph.edges():
        succ[e.src].append(e.dst)
        indeg[e.dst] += 1
    ready = [i for i, d in enumerate(indeg) if d == 0]
    order = []
    while ready:
        u = ready.pop()
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    return order if len(order) == len(graph.nodes) else None


@pytest.fixture(scope="session")
def stock_rules():
    return load_stock_policy()


ACCEPTANCE_LINES = []


def report(number, ok, detail):
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
