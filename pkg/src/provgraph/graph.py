"""Compact main-memory dependence graph.

Subjects own their event records; objects keep short back-references into
subject logs so that edges can be walked in both directions. Every node
version is a separate node id; ``prev_version``/``next_version`` link the
chain and stand for the implicit ``version`` edge.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

from . import encoding as enc
from .encoding import CorruptRecord
from .tags import CTag, TagState, TTag

MAX_NODE_ID = (1 << 32) - 1
_NO_PREDS = frozenset()
# placeholder for nodes whose tags are copied field by field
_FORK_TAGS = TagState(TTag.UNKNOWN, TTag.UNKNOWN, CTag.PUBLIC)
# 8-byte timegap header word (selector 01), as encode_subject_record writes it
_TIMEGAP_HDR = 1 | (enc.OP_TIMEGAP << 2)
CHECKPOINT_EVERY = 64

# accounting sizes of the fixed node headers, matching the snapshot layout
SUBJECT_HEADER_BYTES = 48
OBJECT_HEADER_BYTES = 40
CHECKPOINT_BYTES = 16

O_TO_S = frozenset(("read", "exec", "load", "connect", "accept"))
S_TO_O = frozenset(("write", "rm", "rename", "chmod", "chown"))
S_TO_S = frozenset(("clone", "setuid"))
EDGE_KINDS = O_TO_S | S_TO_O | S_TO_S

_O_TO_S_OPS = frozenset(enc.OPCODES[k] for k in O_TO_S)
_S_TO_O_OPS = frozenset(enc.OPCODES[k] for k in S_TO_O)
_S_TO_S_OPS = frozenset(enc.OPCODES[k] for k in S_TO_S)


class GraphError(Exception):
    pass


class UnknownNode(GraphError):
    pass


class NodeIdExhausted(GraphError):
    pass


class Edge(NamedTuple):
    src: int
    dst: int
    kind: str
    ts_ms: int
    seq: int
    alert: bool
    handle: Optional[Tuple[int, int]] = None  # (subject id, record index)


class SubjectNode:
    __slots__ = (
        "id", "pid", "cmdline", "owner", "code_ttag", "data_ttag", "ctag",
        "log", "seqlog", "objtab", "objidx", "checkpoints", "nrec",
        "base_ts", "last_ts", "last_seq", "version", "prev_version",
        "next_version", "has_outgoing", "preds", "in_degree", "init_untrusted",
        "fork_ts", "fork_seq",
    )
    is_subject = True

    def __init__(self, nid: int, pid: int, cmdline: str, owner: str, tags: TagState, ts: int):
        self.id = nid
        self.pid = pid
        self.cmdline = cmdline
        self.owner = owner
        self.code_ttag = int(tags.code_ttag)
        self.data_ttag = int(tags.data_ttag)
        self.ctag = int(tags.ctag)
        self.log = bytearray()
        self.seqlog = bytearray()
        self.objtab: List[int] = []
        self.objidx: Dict[int, int] = {}
        self.checkpoints: List[Tuple[int, int, int, int]] = []
        self.nrec = 0
        self.base_ts = ts
        self.last_ts = ts
        self.last_seq = 0
        self.version = 1
        self.prev_version: Optional[int] = None
        self.next_version: Optional[int] = None
        self.has_outgoing = False
        self.preds: set = set()
        self.in_degree = 0
        self.init_untrusted = False
        self.fork_ts = ts
        self.fork_seq = 0

    @property
    def name(self) -> str:
        return self.cmdline

    @property
    def obj_type(self) -> str:
        return "process"

    @property
    def tags(self) -> TagState:
        return TagState(TTag(self.code_ttag), TTag(self.data_ttag), CTag(self.ctag))

    @tags.setter
    def tags(self, t: TagState) -> None:
        self.code_ttag, self.data_ttag, self.ctag = int(t[0]), int(t[1]), int(t[2])

    def __repr__(self) -> str:
        return f"<Subject {self.id} pid={self.pid} {self.cmdline!r} v{self.version}>"


class ObjectNode:
    __slots__ = (
        "id", "name", "obj_type", "owner", "data_ttag", "ctag", "log",
        "last_subject", "last_index", "nrec", "version", "prev_version",
        "next_version", "has_outgoing", "preds", "in_degree", "init_untrusted",
        "executable", "fork_ts", "fork_seq",
    )
    is_subject = False

    def __init__(self, nid: int, name: str, obj_type: str, owner: str, tags: TagState):
        self.id = nid
        self.name = name
        self.obj_type = obj_type
        self.owner = owner
        self.data_ttag = int(tags.data_ttag)
        self.ctag = int(tags.ctag)
        self.log = bytearray()
        self.last_subject = -1
        self.last_index = -1
        self.nrec = 0
        self.version = 1
        self.prev_version: Optional[int] = None
        self.next_version: Optional[int] = None
        self.has_outgoing = False
        self.preds: set = set()
        self.in_degree = 0
        self.init_untrusted = False
        self.executable = False
        self.fork_ts = 0
        self.fork_seq = 0

    @property
    def code_ttag(self) -> int:
        return self.data_ttag

    @property
    def tags(self) -> TagState:
        t = TTag(self.data_ttag)
        return TagState(t, t, CTag(self.ctag))

    @tags.setter
    def tags(self, t: TagState) -> None:
        self.data_ttag, self.ctag = int(t[1]), int(t[2])

    def __repr__(self) -> str:
        return f"<Object {self.id} {self.obj_type}:{self.name!r} v{self.version}>"


class ProvenanceGraph:
    """Versioned subject/object graph with bit-packed edge storage."""

    def __init__(self):
        self.nodes: List[object] = []
        self.subjects_by_pid: Dict[int, int] = {}
        self.objects_by_name: Dict[str, int] = {}
        self.blobs: List[bytes] = []
        self.blob_bytes = 0
        self.edge_count = 0
        self.event_count = 0
        self.alarms: list = []
        self.aliases: Dict[int, List[str]] = {}

    # -- node management -------------------------------------------------

    def _new_id(self) -> int:
        nid = len(self.nodes)
        if nid > MAX_NODE_ID:
            raise NodeIdExhausted("32-bit node id space exhausted")
        return nid

    def node(self, nid: int):
        try:
            return self.nodes[nid]
        except (IndexError, TypeError):
            raise UnknownNode(f"no node {nid}") from None

    def intern_subject(self, pid: int, cmdline: str, owner: str = "", init_tags: Optional[TagState] = None,
                       ts_ms: int = 0) -> Tuple[int, bool]:
        """Current subject id for ``pid``; creates it when unseen. Returns (id, created)."""
        nid = self.subjects_by_pid.get(pid)
        if nid is not None:
            return nid, False
        nid = self._new_id()
        tags = init_tags or TagState(TTag.UNKNOWN, TTag.UNKNOWN, CTag.PUBLIC)
        self.nodes.append(SubjectNode(nid, pid, cmdline, owner, tags, ts_ms))
        self.subjects_by_pid[pid] = nid
        return nid, True

    def intern_object(self, name: str, obj_type: str, owner: str = "",
                      init_tags: Optional[TagState] = None) -> Tuple[int, bool]:
        """Current object id for ``name``; the second value is True on first sight."""
        nid = self.objects_by_name.get(name)
        if nid is not None:
            return nid, False
        nid = self._new_id()
        tags = init_tags or TagState(TTag.UNKNOWN, TTag.UNKNOWN, CTag.PUBLIC)
        self.nodes.append(ObjectNode(nid, name, obj_type, owner, tags))
        self.objects_by_name[name] = nid
        return nid, True

    def end_subject(self, pid: int) -> None:
        """Process exit: a later event for the same pid starts a new subject."""
        nid = self.subjects_by_pid.pop(pid, None)
        if nid is not None:
            self.nodes[nid].preds = _NO_PREDS

    def forget_object(self, name: str) -> None:
        nid = self.objects_by_name.pop(name, None)
        if nid is not None and not any(self.objects_by_name.get(n) == nid for n in self._names_of(nid)):
            self.nodes[nid].preds = _NO_PREDS

    def alias_object(self, new_name: str, nid: int) -> None:
        """Make ``new_name`` resolve to the object ``nid`` (after a rename)."""
        self.objects_by_name[new_name] = nid
        self.aliases.setdefault(nid, []).append(new_name)

    def fork_version(self, nid: int, ts_ms: int, seq: int) -> int:
        """Create the next version of ``nid`` with copied identity and tags."""
        old = self.node(nid)
        new_id = self._new_id()
        if old.is_subject:
            new = SubjectNode(new_id, old.pid, old.cmdline, old.owner, _FORK_TAGS, ts_ms)
            new.code_ttag = old.code_ttag
            if self.subjects_by_pid.get(old.pid) == nid:
                self.subjects_by_pid[old.pid] = new_id
        else:
            new = ObjectNode(new_id, old.name, old.obj_type, old.owner, _FORK_TAGS)
            new.executable = old.executable
            for name in self._names_of(nid):
                self.objects_by_name[name] = new_id
            if nid in self.aliases:
                self.aliases[new_id] = self.aliases.pop(nid)
        new.data_ttag = old.data_ttag
        new.ctag = old.ctag
        new.version = old.version + 1
        new.prev_version = nid
        new.fork_ts = ts_ms
        new.fork_seq = seq
        new.preds.add(nid)
        old.next_version = new_id
        old.has_outgoing = True
        # only the newest version receives edges, so its history is not needed
        old.preds = _NO_PREDS
        self.nodes.append(new)
        return new_id

    def _names_of(self, nid: int) -> List[str]:
        names = [self.nodes[nid].name] + self.aliases.get(nid, [])
        return [n for n in names if self.objects_by_name.get(n) == nid]

    def base_version(self, nid: int) -> int:
        node = self.node(nid)
        while node.prev_version is not None:
            node = self.nodes[node.prev_version]
        return node.id

    def newest_version(self, nid: int) -> int:
        node = self.node(nid)
        while node.next_version is not None:
            node = self.nodes[node.next_version]
        return node.id

    # -- edge storage ----------------------------------------------------

    def _subject_record(self, s: SubjectNode, op: int, ref: int, is_node: bool, ts: int, seq: int,
                        alert: bool, arg: bool, blob: Optional[int] = None, aux: Optional[int] = None) -> int:
        delta = ts - s.last_ts
        if delta < 0:
            delta = 0
        log = s.log
        while delta > enc.MAX_DELTA16:
            gap = min(delta, enc.MAX_U32)
            if s.nrec % CHECKPOINT_EVERY == 0 and s.nrec:
                s.checkpoints.append((len(log), len(s.seqlog), s.last_ts, s.last_seq))
            log += (_TIMEGAP_HDR | (gap << 32)).to_bytes(8, "little")
            s.nrec += 1
            s.last_ts += gap
            delta -= gap
        if s.nrec % CHECKPOINT_EVERY == 0 and s.nrec:
            s.checkpoints.append((len(log), len(s.seqlog), s.last_ts, s.last_seq))
        if blob is None and aux is None and not is_node and ref < 256:
            log += ((op << 2) | (ref << 6) | (delta << 14) | (alert << 30) | (arg << 31)).to_bytes(4, "little")
        else:
            log += enc.encode_subject_record(enc.SubjectRecord(op, ref, delta, alert, arg, is_node, blob, aux))
        sd = seq - s.last_seq
        if 0 <= sd < 0x40:
            s.seqlog.append(sd << 1)
        else:
            # zigzag varint; negative deltas only arise from lenient re-sequencing
            s.seqlog += enc.encode_varint(sd << 1 if sd >= 0 else ((-sd) << 1) - 1)
        s.last_ts = ts
        s.last_seq = seq
        idx = s.nrec
        s.nrec = idx + 1
        return idx

    def _object_record(self, o: ObjectNode, sid: int, idx: int) -> None:
        rel = idx - o.last_index
        if o.last_subject == sid and 0 < rel <= enc.MAX_REL_IDX:
            o.log += (rel << 1).to_bytes(2, "little")
        elif idx <= enc.MAX_OBJ_INDEX:
            # same layout as encode_object_record's extended form
            o.log += (1 | ((idx >> 16) << 1) | (sid << 16) | ((idx & 0xFFFF) << 48)).to_bytes(8, "little")
        else:
            o.log += enc.encode_object_record(enc.ObjectRecord(subject=sid, index=idx))
        o.last_subject = sid
        o.last_index = idx
        o.nrec += 1

    def add_blob(self, data: bytes) -> int:
        self.blobs.append(data)
        self.blob_bytes += len(data)
        return len(self.blobs) - 1

    def append_edge(self, src: int, dst: int, kind: str, ts_ms: int, seq: int, alert: bool = False,
                    arg: bool = False, blob: Optional[bytes] = None) -> Tuple[int, int]:
        """Store one edge; returns its handle (subject id, record index).

        The caller has already resolved versions: ``dst`` is the version the
        edge attaches to.
        """
        nodes = self.nodes
        try:
            s_node = nodes[src]
            d_node = nodes[dst]
        except IndexError:
            raise UnknownNode(f"unknown endpoint {src}->{dst}") from None
        op = enc.OPCODES[kind]
        blob_ref = self.add_blob(blob) if blob is not None else None
        if kind in O_TO_S:
            if s_node.is_subject or not d_node.is_subject:
                raise GraphError(f"{kind} must flow object->subject")
            subj, obj = d_node, s_node
        elif kind in S_TO_O:
            if not s_node.is_subject or d_node.is_subject:
                raise GraphError(f"{kind} must flow subject->object")
            subj, obj = s_node, d_node
        elif kind in S_TO_S:
            if not (s_node.is_subject and d_node.is_subject):
                raise GraphError(f"{kind} must flow subject->subject")
            idx = self._subject_record(s_node, op, dst, True, ts_ms, seq, alert, arg, blob_ref)
            self._subject_record(d_node, enc.OP_ESCAPE, src, True, ts_ms, seq, False, False, None, idx)
            self._link(s_node, d_node)
            return src, idx
        else:
            raise GraphError(f"{kind} is not an edge kind")
        oid = obj.id
        slot = subj.objidx.get(oid)
        if slot is None:
            slot = len(subj.objtab)
            subj.objtab.append(oid)
            subj.objidx[oid] = slot
        idx = self._subject_record(subj, op, slot, False, ts_ms, seq, alert, arg, blob_ref)
        self._object_record(obj, subj.id, idx)
        self._link(s_node, d_node)
        return subj.id, idx

    def _link(self, s_node, d_node) -> None:
        s_node.has_outgoing = True
        if d_node.preds is _NO_PREDS:
            d_node.preds = set()
        d_node.preds.add(s_node.id)
        d_node.in_degree += 1
        self.edge_count += 1

    # -- decoding --------------------------------------------------------

    def subject_records(self, sid: int, start: int = 0, stop: Optional[int] = None
                        ) -> Iterator[Tuple[int, enc.SubjectRecord, int, int]]:
        """Yield (index, record, absolute ts, seq) for records [start, stop)."""
        s = self.node(sid)
        if not s.is_subject:
            raise UnknownNode(f"{sid} is not a subject")
        stop = s.nrec if stop is None else min(stop, s.nrec)
        if start >= stop:
            return
        cp = start // CHECKPOINT_EVERY
        off, soff, ts, seq = s.checkpoints[cp - 1] if cp else (0, 0, s.base_ts, 0)
        idx = cp * CHECKPOINT_EVERY
        log, seqlog = s.log, s.seqlog
        while idx < stop:
            rec, off = enc.decode_subject_record(log, off)
            if rec.op == enc.OP_TIMEGAP:
                ts += rec.ref
            else:
                ts += rec.delta
                z = seqlog[soff]
                if z < 0x80:
                    soff += 1
                else:
                    z, soff = enc.decode_varint(seqlog, soff)
                seq += (z >> 1) if not z & 1 else -((z + 1) >> 1)
            if idx >= start:
                yield idx, rec, ts, seq
            idx += 1

    def subject_record_at(self, sid: int, index: int) -> Tuple[enc.SubjectRecord, int, int]:
        for idx, rec, ts, seq in self.subject_records(sid, index, index + 1):
            return rec, ts, seq
        raise CorruptRecord(f"subject {sid} has no record {index}")

    def object_handles(self, oid: int) -> Iterator[Tuple[int, int]]:
        """Resolve each object-event record to its (subject id, record index)."""
        o = self.node(oid)
        if o.is_subject:
            raise UnknownNode(f"{oid} is not an object")
        buf = o.log
        off = 0
        subj = idx = None
        for _ in range(o.nrec):
            rec, off = enc.decode_object_record(buf, off)
            if rec.rel_idx is not None:
                if subj is None:
                    raise CorruptRecord(f"object {oid} starts with a relative record")
                idx += rec.rel_idx
            else:
                subj, idx = rec.subject, rec.index
            yield subj, idx

    def _subject_edges(self, s: SubjectNode, outgoing: bool) -> Iterator[Edge]:
        sid = s.id
        objtab = s.objtab
        for idx, rec, ts, seq in self.subject_records(sid):
            op = rec.op
            if op == enc.OP_TIMEGAP:
                continue
            if op == enc.OP_ESCAPE:
                if not outgoing:
                    arec, _, _ = self.subject_record_at(rec.ref, rec.aux)
                    yield Edge(rec.ref, sid, enc.OP_NAMES[arec.op], ts, seq, arec.alert, (rec.ref, rec.aux))
                continue
            kind = enc.OP_NAMES[op]
            if op in _S_TO_S_OPS:
                if outgoing:
                    yield Edge(sid, rec.ref, kind, ts, seq, rec.alert, (sid, idx))
                continue
            other = rec.ref if rec.is_node else objtab[rec.ref]
            if op in _O_TO_S_OPS:
                if not outgoing:
                    yield Edge(other, sid, kind, ts, seq, rec.alert, (sid, idx))
            elif outgoing:
                yield Edge(sid, other, kind, ts, seq, rec.alert, (sid, idx))

    def _object_edges(self, o: ObjectNode, outgoing: bool) -> Iterator[Edge]:
        oid = o.id
        for sid, idx in self.object_handles(oid):
            rec, ts, seq = self.subject_record_at(sid, idx)
            s = self.nodes[sid]
            target = rec.ref if rec.is_node else s.objtab[rec.ref]
            if target != oid:
                raise CorruptRecord(f"object {oid} record points at subject {sid}#{idx} for {target}")
            kind = enc.OP_NAMES[rec.op]
            if rec.op in _O_TO_S_OPS:
                if outgoing:
                    yield Edge(oid, sid, kind, ts, seq, rec.alert, (sid, idx))
            elif not outgoing:
                yield Edge(sid, oid, kind, ts, seq, rec.alert, (sid, idx))

    def out_edges(self, nid: int) -> Iterator[Edge]:
        """Outgoing edges in timestamp order, ending with the version edge if any."""
        n = self.node(nid)
        if n.is_subject:
            yield from self._subject_edges(n, True)
        else:
            yield from self._object_edges(n, True)
        if n.next_version is not None:
            nxt = self.nodes[n.next_version]
            yield Edge(nid, nxt.id, "version", nxt.fork_ts, nxt.fork_seq, False)

    def in_edges(self, nid: int) -> Iterator[Edge]:
        """Incoming edges, starting with the version edge if any."""
        n = self.node(nid)
        if n.prev_version is not None:
            yield Edge(n.prev_version, nid, "version", n.fork_ts, n.fork_seq, False)
        if n.is_subject:
            yield from self._subject_edges(n, False)
        else:
            yield from self._object_edges(n, False)

    def edges(self) -> Iterator[Edge]:
        """Every stored and version edge once, grouped by owning subject.

        Each stored edge lives in exactly one subject log, so one linear scan
        per subject suffices; object logs are not consulted.
        """
        nodes = self.nodes
        for n in nodes:
            if n.next_version is not None:
                nxt = nodes[n.next_version]
                yield Edge(n.id, nxt.id, "version", nxt.fork_ts, nxt.fork_seq, False)
            if not n.is_subject:
                continue
            sid = n.id
            objtab = n.objtab
            for idx, rec, ts, seq in self.subject_records(sid):
                op = rec.op
                if op == enc.OP_TIMEGAP or op == enc.OP_ESCAPE:
                    continue
                kind = enc.OP_NAMES[op]
                other = rec.ref if rec.is_node else objtab[rec.ref]
                if op in _O_TO_S_OPS:
                    yield Edge(other, sid, kind, ts, seq, rec.alert, (sid, idx))
                else:
                    yield Edge(sid, other, kind, ts, seq, rec.alert, (sid, idx))

    def set_alert(self, handle: Tuple[int, int]) -> None:
        """Set the alert bit of a stored record in place."""
        sid, index = handle
        s = self.node(sid)
        cp = index // CHECKPOINT_EVERY
        off = s.checkpoints[cp - 1][0] if cp else 0
        for _ in range(index - cp * CHECKPOINT_EVERY):
            _, off = enc.decode_subject_record(s.log, off)
        sel = s.log[off] & 3
        if sel == 0:
            s.log[off + 3] |= 0x40
        else:
            s.log[off] |= 0x40

    # -- accounting ------------------------------------------------------

    def memory_stats(self) -> dict:
        total = self.blob_bytes + 4 * len(self.blobs)
        seen_names = set()
        for n in self.nodes:
            if n.is_subject:
                total += SUBJECT_HEADER_BYTES + len(n.log) + len(n.seqlog) + 4 * len(n.objtab)
                total += CHECKPOINT_BYTES * len(n.checkpoints) + 4 * len(n.preds)
                label = n.cmdline
            else:
                total += OBJECT_HEADER_BYTES + len(n.log) + 4 * len(n.preds)
                label = n.name
            if label not in seen_names:
                seen_names.add(label)
                total += len(label.encode("utf-8")) + 2
        events = self.event_count
        return {
            "nodes": len(self.nodes),
            "subjects": sum(1 for n in self.nodes if n.is_subject),
            "objects": sum(1 for n in self.nodes if not n.is_subject),
            "edges": self.edge_count,
            "events": events,
            "bytes_total": total,
            "bytes_per_event": (total / events) if events else 0.0,
            "compact_subject_records": self._compact_ratio(),
        }

    def _compact_ratio(self) -> float:
        total = compact = 0
        for n in self.nodes:
            if n.is_subject:
                off = 0
                log = n.log
                end = len(log)
                while off < end:
                    sel = log[off] & 3
                    total += 1
                    if sel == 0:
                        compact += 1
                    off += 4 + 4 * sel
        return compact / total if total else 1.0

    def object_compact_ratio(self) -> float:
        total = compact = 0
        for n in self.nodes:
            if not n.is_subject:
                off = 0
                log = n.log
                while off < len(log):
                    total += 1
                    if log[off] & 1:
                        off += 8
                    else:
                        compact += 1
                        off += 2
        return compact / total if total else 1.0
