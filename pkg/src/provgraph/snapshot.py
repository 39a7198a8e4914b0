"""Graph snapshots: a JSON metadata section followed by raw record buffers.

Layout::

    b"PGRF" | u16 format version | u32 metadata length | metadata (UTF-8 JSON)
    | subject logs, seq logs, object logs and blobs in node order

Predecessor sets are not stored; a loaded graph can be analyzed, and
further ingestion stays acyclic because versioning falls back to forking.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

from .graph import ObjectNode, ProvenanceGraph, SubjectNode
from .policy import Alarm
from .tags import CTag, TagState, TTag

MAGIC = b"PGRF"
FORMAT_VERSION = 1

_ZERO = TagState(TTag.UNKNOWN, TTag.UNKNOWN, CTag.PUBLIC)


class SnapshotError(ValueError):
    pass


def dumps(graph: ProvenanceGraph) -> bytes:
    nodes = []
    buffers = []
    for n in graph.nodes:
        if n.is_subject:
            nodes.append([
                "s", n.pid, n.cmdline, n.owner, n.code_ttag, n.data_ttag, n.ctag, n.nrec,
                n.base_ts, n.last_ts, n.last_seq, n.version, n.prev_version, n.next_version,
                n.has_outgoing, n.in_degree, n.init_untrusted, n.fork_ts, n.fork_seq,
                n.objtab, [list(c) for c in n.checkpoints], len(n.log), len(n.seqlog),
            ])
            buffers.append(bytes(n.log))
            buffers.append(bytes(n.seqlog))
        else:
            nodes.append([
                "o", n.name, n.obj_type, n.owner, n.data_ttag, n.ctag, n.last_subject,
                n.last_index, n.nrec, n.version, n.prev_version, n.next_version,
                n.has_outgoing, n.in_degree, n.init_untrusted, n.executable,
                n.fork_ts, n.fork_seq, len(n.log),
            ])
            buffers.append(bytes(n.log))
    meta = {
        "nodes": nodes,
        "subjects_by_pid": sorted(graph.subjects_by_pid.items()),
        "objects_by_name": sorted(graph.objects_by_name.items()),
        "aliases": sorted((k, v) for k, v in graph.aliases.items()),
        "blobs": [len(b) for b in graph.blobs],
        "edge_count": graph.edge_count,
        "event_count": graph.event_count,
        "alarms": [a.to_dict() for a in graph.alarms],
    }
    buffers.extend(graph.blobs)
    blob = json.dumps(meta, separators=(",", ":"), sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<HI", FORMAT_VERSION, len(blob)) + blob + b"".join(buffers)


def loads(data: bytes) -> ProvenanceGraph:
    if data[:4] != MAGIC:
        raise SnapshotError("not a graph snapshot")
    if len(data) < 10:
        raise SnapshotError("truncated snapshot header")
    version, mlen = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    start = 10
    try:
        meta = json.loads(data[start:start + mlen].decode("utf-8"))
    except ValueError as exc:
        raise SnapshotError(f"bad metadata: {exc}") from None
    try:
        return _build(data, meta, start + mlen)
    except SnapshotError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc!r}") from None


def _build(data: bytes, meta: dict, off: int) -> ProvenanceGraph:
    def take(n: int) -> bytearray:
        nonlocal off
        if off + n > len(data):
            raise SnapshotError("truncated snapshot")
        chunk = bytearray(data[off:off + n])
        off += n
        return chunk

    g = ProvenanceGraph()
    for nid, rec in enumerate(meta["nodes"]):
        if rec[0] == "s":
            (_, pid, cmdline, owner, code, dat, ctag, nrec, base_ts, last_ts, last_seq, ver, prev, nxt,
             has_out, indeg, untrusted, fork_ts, fork_seq, objtab, cps, loglen, seqlen) = rec
            n = SubjectNode(nid, pid, cmdline, owner, _ZERO, base_ts)
            n.code_ttag, n.data_ttag, n.ctag = code, dat, ctag
            n.nrec, n.last_ts, n.last_seq = nrec, last_ts, last_seq
            n.objtab = list(objtab)
            n.objidx = {o: i for i, o in enumerate(objtab)}
            n.checkpoints = [tuple(c) for c in cps]
            n.log = take(loglen)
            n.seqlog = take(seqlen)
        else:
            (_, name, otype, owner, dat, ctag, last_subject, last_index, nrec, ver, prev, nxt,
             has_out, indeg, untrusted, executable, fork_ts, fork_seq, loglen) = rec
            n = ObjectNode(nid, name, otype, owner, _ZERO)
            n.data_ttag, n.ctag = dat, ctag
            n.last_subject, n.last_index, n.nrec = last_subject, last_index, nrec
            n.executable = executable
            n.log = take(loglen)
        n.version, n.prev_version, n.next_version = ver, prev, nxt
        n.has_outgoing, n.in_degree, n.init_untrusted = has_out, indeg, untrusted
        n.fork_ts, n.fork_seq = fork_ts, fork_seq
        g.nodes.append(n)
    g.subjects_by_pid = {int(k): v for k, v in meta["subjects_by_pid"]}
    g.objects_by_name = {k: v for k, v in meta["objects_by_name"]}
    g.aliases = {int(k): list(v) for k, v in meta["aliases"]}
    for size in meta["blobs"]:
        g.add_blob(bytes(take(size)))
    if off != len(data):
        raise SnapshotError("trailing bytes after snapshot")
    g.edge_count = meta["edge_count"]
    g.event_count = meta["event_count"]
    g.alarms = [Alarm.from_dict(a) for a in meta["alarms"]]
    return g


def save_graph(graph: ProvenanceGraph, path: Union[str, Path]) -> int:
    data = dumps(graph)
    Path(path).write_bytes(data)
    return len(data)


def load_graph(path: Union[str, Path]) -> ProvenanceGraph:
    return loads(Path(path).read_bytes())
