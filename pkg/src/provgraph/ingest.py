"""Single-writer ingestion: events in, versioned tagged graph and alarms out."""

from __future__ import annotations

import logging
import time
from typing import Iterable, List, Optional

from .events import AuditEvent
from .graph import ProvenanceGraph
from .policy import EVENT_TRIGGERS, Alarm, PolicyEngine, Trigger
from .tags import CTag, TagState, TTag
from .versioning import DEFAULT_ANCESTOR_DEPTH, attach_target, version_stats

log = logging.getLogger(__name__)

_UNKNOWN = int(TTag.UNKNOWN)
_FALLBACK = TagState(TTag.UNKNOWN, TTag.UNKNOWN, CTag.PUBLIC)

_O_TO_S = frozenset(("read", "exec", "load", "connect", "accept"))
_S_TO_O = frozenset(("write", "rm", "rename", "chmod", "chown"))

_TRIG_READ = (Trigger.READ,)
_TRIG_READ_LOAD = (Trigger.READ, Trigger.EXEC)


def _mode_bits(attrs: Optional[dict]) -> Optional[int]:
    if not attrs or "mode" not in attrs:
        return None
    mode = attrs["mode"]
    if isinstance(mode, str):
        try:
            return int(mode, 8)
        except ValueError:
            return None
    return int(mode)


class Ingestor:
    """Applies events in order to one graph under one policy engine."""

    def __init__(self, engine: Optional[PolicyEngine] = None, graph: Optional[ProvenanceGraph] = None,
                 ancestor_depth: int = DEFAULT_ANCESTOR_DEPTH):
        self.engine = engine or PolicyEngine()
        self.graph = graph or ProvenanceGraph()
        self.ancestor_depth = ancestor_depth
        self.alarms: List[Alarm] = self.graph.alarms
        self.elapsed = 0.0

    # -- node creation ---------------------------------------------------

    def _subject(self, pid: int, exe: str, ts: int) -> int:
        g = self.graph
        sid = g.subjects_by_pid.get(pid)
        if sid is not None:
            return sid
        sid, _ = g.intern_subject(pid, exe, "", _FALLBACK, ts)
        node = g.nodes[sid]
        tags = self.engine.run_init(node)
        if tags is None:
            node.init_untrusted = True
        else:
            node.tags = tags
            node.init_untrusted = tags.data_ttag == TTag.UNKNOWN
        return sid

    def _object(self, name: str, obj_type: str, creator: Optional[int]) -> int:
        """Object id for ``name``. A ``creator`` subject id marks a fresh object."""
        g = self.graph
        oid = g.objects_by_name.get(name)
        if oid is not None:
            return oid
        oid, _ = g.intern_object(name, obj_type, "", _FALLBACK)
        node = g.nodes[oid]
        if creator is not None:
            s = g.nodes[creator]
            node.data_ttag = s.data_ttag
            node.ctag = s.ctag
            node.owner = s.owner
            return oid
        tags = self.engine.run_init(node)
        if tags is None:
            node.init_untrusted = True
        else:
            node.tags = tags
            node.init_untrusted = tags.data_ttag == TTag.UNKNOWN
        return oid

    # -- event application ---------------------------------------------

    def apply(self, ev: AuditEvent) -> None:
        obj = ev.object
        self.apply_fields(ev.seq, ev.ts_ms, ev.kind, ev.subject_pid, ev.subject_exe,
                          obj.name if obj is not None else None,
                          obj.obj_type if obj is not None else None,
                          ev.target_pid, ev.attrs)

    def apply_fields(self, seq: int, ts: int, kind: str, pid: int, exe: str,
                     obj_name: Optional[str], obj_type: Optional[str],
                     target_pid: Optional[int], attrs: Optional[dict]) -> None:
        g = self.graph
        g.event_count += 1
        if kind in _O_TO_S:
            sid = self._subject(pid, exe, ts)
            oid = self._object(obj_name, obj_type, None)
            self._flow_in(kind, sid, oid, ts, seq)
        elif kind in _S_TO_O:
            sid = self._subject(pid, exe, ts)
            # remote endpoints are never created by the local writer
            created = obj_type != "socket" and (kind == "write" or bool(attrs and attrs.get("create")))
            oid = self._object(obj_name, obj_type, sid if created else None)
            self._flow_out(kind, sid, oid, ts, seq, obj_name, attrs)
        elif kind == "clone":
            self._clone(pid, exe, target_pid, ts, seq)
        elif kind == "setuid":
            self._setuid(pid, exe, target_pid, ts, seq)
        elif kind == "define" or kind == "open":
            if obj_name is not None:
                created = kind == "open" and bool(attrs and attrs.get("create"))
                sid = self._subject(pid, exe, ts) if created else None
                self._object(obj_name, obj_type, sid)
            else:
                self._subject(pid, exe, ts)
        elif kind == "exit":
            g.end_subject(pid)
        # close carries no flow

    def _flow_in(self, kind: str, sid: int, oid: int, ts: int, seq: int) -> None:
        g = self.graph
        nodes = g.nodes
        sid = attach_target(g, sid, oid, ts, seq, self.ancestor_depth)
        s = nodes[sid]
        o = nodes[oid]
        names = ()
        if kind == "connect" or kind == "accept":
            new = None
        else:
            engine = self.engine
            trigger = Trigger.PROP_RD if kind == "read" else Trigger.PROP_EX
            new, as_load = engine.propagate(trigger, s, o, True)
            changing = new is not None and (new[0] != s.code_ttag or new[1] != s.data_ttag or new[2] != s.ctag)
            if changing or engine.detect_always or engine.any_always:
                if kind == "read":
                    triggers = _TRIG_READ_LOAD if as_load else _TRIG_READ
                else:
                    triggers = (Trigger.EXEC,)
                names = engine.detect(triggers, s, o, changing)
        handle = g.append_edge(oid, sid, kind, ts, seq, bool(names))
        if names:
            self._raise(names, ts, seq, s, o, handle)
        if new is not None:
            s.code_ttag, s.data_ttag, s.ctag = new
        if kind == "exec":
            s.cmdline = o.name

    def _flow_out(self, kind: str, sid: int, oid: int, ts: int, seq: int, name: str,
                  attrs: Optional[dict]) -> None:
        g = self.graph
        engine = self.engine
        oid = attach_target(g, oid, sid, ts, seq, self.ancestor_depth)
        s = g.nodes[sid]
        o = g.nodes[oid]
        makes_exec = False
        if kind == "write":
            new, _ = engine.propagate(Trigger.PROP_WR, s, o, False)
            triggers = EVENT_TRIGGERS["write"][0]
        else:
            # no propagation; the gate asks whether a write would change tags
            hypo = engine._default(None, s, o, False)
            new = None
            triggers = EVENT_TRIGGERS[kind][0]
            if kind == "chmod":
                mode = _mode_bits(attrs)
                if mode is not None:
                    makes_exec = bool(mode & 0o111) and not o.executable
                    o.executable = bool(mode & 0o111)
        probe = new if kind == "write" else hypo
        changing = probe is not None and (probe[1] != o.data_ttag or probe[2] != o.ctag)
        names = ()
        if changing or makes_exec or engine.detect_always or engine.has_always_rules(triggers):
            names = engine.detect(triggers, s, o, changing, makes_exec)
        handle = g.append_edge(sid, oid, kind, ts, seq, bool(names))
        if names:
            self._raise(names, ts, seq, s, o, handle)
        if new is not None:
            o.data_ttag, o.ctag = new[1], new[2]
        if kind == "rename":
            new_name = (attrs or {}).get("new_name") or (attrs or {}).get("newname")
            if new_name:
                g.forget_object(name)
                g.alias_object(new_name, oid)
        elif kind == "rm":
            g.forget_object(name)

    def _clone(self, pid: int, exe: str, child_pid: int, ts: int, seq: int) -> None:
        g = self.graph
        parent_id = self._subject(pid, exe, ts)
        parent = g.nodes[parent_id]
        cid = g.subjects_by_pid.get(child_pid)
        if child_pid is None or child_pid == pid:
            # a malformed self-clone would be a self-loop; version the process instead
            cid = g.fork_version(parent_id, ts, seq)
        elif cid is None:
            cid, _ = g.intern_subject(child_pid, parent.cmdline, parent.owner, parent.tags, ts)
        else:
            cid = attach_target(g, cid, parent_id, ts, seq, self.ancestor_depth)
            child = g.nodes[cid]
            child.code_ttag, child.data_ttag, child.ctag = parent.code_ttag, parent.data_ttag, parent.ctag
        g.append_edge(parent_id, cid, "clone", ts, seq)

    def _setuid(self, pid: int, exe: str, target_pid: int, ts: int, seq: int) -> None:
        g = self.graph
        sid = self._subject(pid, exe, ts)
        if target_pid is None or target_pid == pid:
            # a process changing its own identity becomes a new version of itself
            tid = g.fork_version(sid, ts, seq)
        else:
            tid = self._subject(target_pid, exe, ts)
            tid = attach_target(g, tid, sid, ts, seq, self.ancestor_depth)
        src, tgt = g.nodes[sid], g.nodes[tid]
        new, _ = self.engine.propagate(Trigger.PROP_SU, tgt, src, True)
        g.append_edge(sid, tid, "setuid", ts, seq)
        if new is not None:
            tgt.code_ttag, tgt.data_ttag, tgt.ctag = new

    def _raise(self, names, ts: int, seq: int, s, o, handle) -> None:
        for name in names:
            alarm = Alarm(len(self.alarms), name, ts, seq, s.id, o.id, handle,
                          s.pid, s.cmdline, o.name)
            self.alarms.append(alarm)
            log.info("%s", alarm.text_line())

    # -- drivers ---------------------------------------------------------

    def ingest(self, events: Iterable[AuditEvent]) -> int:
        start = time.perf_counter()
        n = 0
        apply = self.apply
        for ev in events:
            apply(ev)
            n += 1
        self.elapsed += time.perf_counter() - start
        return n

    def ingest_tuples(self, rows: Iterable[tuple]) -> int:
        """Fast path over (seq, ts, kind, pid, exe, obj_name, obj_type, target_pid, attrs)."""
        start = time.perf_counter()
        n = 0
        apply = self.apply_fields
        for row in rows:
            apply(*row)
            n += 1
        self.elapsed += time.perf_counter() - start
        return n

    def stats(self) -> dict:
        g = self.graph
        mem = g.memory_stats()
        counts: dict = {}
        for a in self.alarms:
            counts[a.name] = counts.get(a.name, 0) + 1
        return {
            "events": g.event_count,
            "elapsed_s": self.elapsed,
            "events_per_s": g.event_count / self.elapsed if self.elapsed else 0.0,
            "memory": mem,
            "bytes_per_event": mem["bytes_per_event"],
            "versions": version_stats(g),
            "alarms": counts,
            "alarm_total": len(self.alarms),
            "single_ttag": self.engine.single_ttag,
        }


def ingest_events(events: Iterable[AuditEvent], engine: Optional[PolicyEngine] = None,
                  ancestor_depth: int = DEFAULT_ANCESTOR_DEPTH) -> Ingestor:
    ing = Ingestor(engine, ancestor_depth=ancestor_depth)
    ing.ingest(events)
    return ing
