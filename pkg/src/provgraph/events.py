"""Platform-neutral audit events and their JSON-lines wire format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Union

KINDS = (
    "define", "open", "close", "read", "write", "connect", "accept", "clone",
    "exec", "load", "rm", "rename", "chmod", "chown", "setuid", "exit",
)
KIND_SET = frozenset(KINDS)
OBJ_TYPES = frozenset(("file", "socket", "pipe", "memory"))

NEEDS_OBJECT = frozenset(("read", "write", "exec", "load", "rm", "rename", "chmod", "chown"))
NEEDS_TARGET = frozenset(("clone", "setuid"))
# accepted and counted, but never become graph edges
NON_EDGE_KINDS = frozenset(("define", "open", "close", "exit"))


class ParseError(ValueError):
    """Raised for an input line that does not describe a valid event."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MalformedJson(ParseError):
    pass


class MissingField(ParseError):
    def __init__(self, name: str, line_no: Optional[int] = None):
        self.field = name
        super().__init__(f"missing field {name!r}", line_no)


class UnknownKind(ParseError):
    pass


class NonMonotoneSeq(ParseError):
    pass


@dataclass(slots=True)
class ObjectRef:
    name: str
    obj_type: str


@dataclass(slots=True)
class AuditEvent:
    seq: int
    ts_ms: int
    kind: str
    subject_pid: int
    subject_exe: str
    object: Optional[ObjectRef] = None
    target_pid: Optional[int] = None
    attrs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "seq": self.seq,
            "ts_ms": self.ts_ms,
            "kind": self.kind,
            "subject_pid": self.subject_pid,
            "subject_exe": self.subject_exe,
        }
        if self.object is not None:
            d["object"] = {"name": self.object.name, "type": self.object.obj_type}
        if self.target_pid is not None:
            d["target_pid"] = self.target_pid
        if self.attrs:
            d["attrs"] = self.attrs
        return d


def serialize_event(event: AuditEvent) -> str:
    return json.dumps(event.to_dict(), separators=(",", ":"))


def _int_field(d: dict, name: str) -> int:
    if name not in d:
        raise MissingField(name)
    v = d[name]
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ParseError(f"field {name!r} must be a non-negative integer")
    return v


def event_from_dict(d: dict) -> AuditEvent:
    if not isinstance(d, dict):
        raise MalformedJson("event must be a JSON object")
    seq = _int_field(d, "seq")
    ts_ms = _int_field(d, "ts_ms")
    if "kind" not in d:
        raise MissingField("kind")
    kind = d["kind"]
    if kind not in KIND_SET:
        raise UnknownKind(f"unknown event kind {kind!r}")
    pid = _int_field(d, "subject_pid")
    if "subject_exe" not in d:
        raise MissingField("subject_exe")
    exe = d["subject_exe"]
    if not isinstance(exe, str):
        raise ParseError("field 'subject_exe' must be a string")

    obj = None
    raw_obj = d.get("object")
    if raw_obj is not None:
        if not isinstance(raw_obj, dict):
            raise ParseError("field 'object' must be an object")
        if "name" not in raw_obj:
            raise MissingField("object.name")
        if "type" not in raw_obj:
            raise MissingField("object.type")
        otype = raw_obj["type"]
        if otype not in OBJ_TYPES:
            raise ParseError(f"unknown object type {otype!r}")
        obj = ObjectRef(str(raw_obj["name"]), otype)
    elif kind in NEEDS_OBJECT:
        raise MissingField("object")

    target = d.get("target_pid")
    if target is None:
        if kind in NEEDS_TARGET:
            raise MissingField("target_pid")
    else:
        target = _int_field(d, "target_pid")

    attrs = d.get("attrs") or {}
    if not isinstance(attrs, dict):
        raise ParseError("field 'attrs' must be an object")
    return AuditEvent(seq, ts_ms, kind, pid, exe, obj, target, attrs)


def parse_event(line: Union[str, bytes]) -> AuditEvent:
    """Parse one JSON-lines record. Unknown keys are ignored."""
    try:
        d = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"malformed JSON: {exc.msg if hasattr(exc, 'msg') else exc}") from None
    return event_from_dict(d)


def stream_events(source: Union[IO, Iterable], strict: bool = True) -> Iterator[AuditEvent]:
    """Yield events from newline-delimited records in input order.

    In strict mode a sequence number that does not increase aborts the
    stream with NonMonotoneSeq. Lenient mode re-sequences such events to
    follow their predecessor, and clamps timestamps that run backwards.
    """
    last_seq = -1
    last_ts = 0
    for line_no, line in enumerate(source, 1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            ev = parse_event(line)
        except ParseError as exc:
            # re-raise with position info, keeping the error class
            err = type(exc).__new__(type(exc))
            ParseError.__init__(err, str(exc), line_no)
            if isinstance(exc, MissingField):
                err.field = exc.field
            raise err from None
        if ev.seq <= last_seq:
            if strict:
                raise NonMonotoneSeq(f"seq {ev.seq} does not follow {last_seq}", line_no)
            ev.seq = last_seq + 1
        if ev.ts_ms < last_ts:
            if strict:
                raise NonMonotoneSeq(f"ts_ms {ev.ts_ms} runs backwards", line_no)
            ev.ts_ms = last_ts
        last_seq = ev.seq
        last_ts = ev.ts_ms
        yield ev


def write_events(events: Iterable[AuditEvent], fh: IO[str]) -> int:
    n = 0
    for ev in events:
        fh.write(serialize_event(ev))
        fh.write("\n")
        n += 1
    return n
