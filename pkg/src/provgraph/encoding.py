"""Bit layouts for subject-event and object-event records.

Subject-event records (little-endian, size selector in the two low bits):

  sel 00, 4 bytes   op:4 obj_idx:8 delta:16 alert:1 arg:1
  sel 01, 8 bytes   header, ref:32
  sel 10, 12 bytes  header, ref:32, blob:32
  sel 11, 16 bytes  header, ref:32, aux:32, blob:32

  header (32 bits)  sel:2 op:4 alert:1 arg:1 is_node:1 reserved:7 delta:16

``ref`` is an index into the subject's object table, or a node id when
``is_node`` is set. A timegap record stores its gap in ``ref``. The
``aux`` word carries a record index for incoming-reference (escape)
records on subjects; an escape record without a blob uses the 12-byte
form with ``aux`` in the third word.

Object-event records:

  compact, 2 bytes  form=0:1 rel_idx:12 reserved:3
  extended, 8 bytes form=1:1 idx_hi:15, subject:32, idx_lo:16
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Tuple

OP_READ = 0
OP_WRITE = 1
OP_EXEC = 2
OP_LOAD = 3
OP_RM = 4
OP_RENAME = 5
OP_CHMOD = 6
OP_CHOWN = 7
OP_CLONE = 8
OP_SETUID = 9
OP_CONNECT = 10
OP_ACCEPT = 11
OP_TIMEGAP = 12
OP_ESCAPE = 13

OPCODES = {
    "read": OP_READ, "write": OP_WRITE, "exec": OP_EXEC, "load": OP_LOAD,
    "rm": OP_RM, "rename": OP_RENAME, "chmod": OP_CHMOD, "chown": OP_CHOWN,
    "clone": OP_CLONE, "setuid": OP_SETUID, "connect": OP_CONNECT,
    "accept": OP_ACCEPT, "timegap": OP_TIMEGAP, "escape": OP_ESCAPE,
}
OP_NAMES = {v: k for k, v in OPCODES.items()}

MAX_DELTA16 = (1 << 16) - 1
MAX_REL_IDX = (1 << 12) - 1
MAX_U32 = (1 << 32) - 1
MAX_OBJ_INDEX = (1 << 31) - 1


class CorruptRecord(ValueError):
    """A byte sequence that does not decode to a record. Indicates a bug."""


class SubjectRecord(NamedTuple):
    op: int
    ref: int
    delta: int = 0
    alert: bool = False
    arg: bool = False
    is_node: bool = False
    blob: Optional[int] = None
    aux: Optional[int] = None


def subject_record_size(rec: SubjectRecord) -> int:
    if rec.aux is not None:
        return 12 if rec.op == OP_ESCAPE and rec.blob is None else 16
    if rec.blob is not None:
        return 12
    if rec.is_node or rec.ref > 0xFF or rec.op == OP_TIMEGAP:
        return 8
    return 4


def encode_compact(op: int, obj_idx: int, delta: int, alert: bool, arg: bool) -> bytes:
    return (
        (op << 2) | (obj_idx << 6) | (delta << 14) | (alert << 30) | (arg << 31)
    ).to_bytes(4, "little")


def encode_subject_record(rec: SubjectRecord) -> bytes:
    if not 0 <= rec.delta <= MAX_DELTA16:
        raise ValueError(f"delta {rec.delta} does not fit 16 bits; emit a timegap first")
    if not 0 <= rec.ref <= MAX_U32:
        raise ValueError(f"ref {rec.ref} out of range")
    if rec.aux is not None and rec.blob is None and rec.op != OP_ESCAPE:
        raise ValueError("only escape records carry aux without a blob")
    if rec.op == OP_ESCAPE and rec.aux is None:
        raise ValueError("escape records need the actor's record index")
    size = subject_record_size(rec)
    if size == 4:
        return encode_compact(rec.op, rec.ref, rec.delta, rec.alert, rec.arg)
    sel = {8: 1, 12: 2, 16: 3}[size]
    hdr = sel | (rec.op << 2) | (rec.alert << 6) | (rec.arg << 7) | (rec.is_node << 8) | (rec.delta << 16)
    out = hdr.to_bytes(4, "little") + rec.ref.to_bytes(4, "little")
    if size == 16 or (size == 12 and rec.blob is None):
        out += rec.aux.to_bytes(4, "little")
    if size == 16 or (size == 12 and rec.blob is not None):
        out += (rec.blob or 0).to_bytes(4, "little")
    return out


def decode_subject_record(buf, off: int = 0) -> Tuple[SubjectRecord, int]:
    """Decode one record at ``off``; returns the record and the next offset."""
    if off + 4 > len(buf):
        raise CorruptRecord(f"truncated record at offset {off}")
    word = int.from_bytes(buf[off:off + 4], "little")
    sel = word & 3
    op = (word >> 2) & 0xF
    if op not in OP_NAMES:
        raise CorruptRecord(f"bad opcode {op} at offset {off}")
    if sel == 0:
        return SubjectRecord(
            op, (word >> 6) & 0xFF, (word >> 14) & 0xFFFF,
            bool(word >> 30 & 1), bool(word >> 31 & 1),
        ), off + 4
    size = 4 + 4 * sel
    if off + size > len(buf):
        raise CorruptRecord(f"truncated extended record at offset {off}")
    ref = int.from_bytes(buf[off + 4:off + 8], "little")
    aux = blob = None
    if sel == 2:
        if op == OP_ESCAPE:
            aux = int.from_bytes(buf[off + 8:off + 12], "little")
        else:
            blob = int.from_bytes(buf[off + 8:off + 12], "little")
    elif sel == 3:
        aux = int.from_bytes(buf[off + 8:off + 12], "little")
        blob = int.from_bytes(buf[off + 12:off + 16], "little")
    return SubjectRecord(
        op, ref, word >> 16, bool(word >> 6 & 1), bool(word >> 7 & 1),
        bool(word >> 8 & 1), blob, aux,
    ), off + size


class ObjectRecord(NamedTuple):
    """Either a compact back-reference or an absolute (subject, index) pair."""

    rel_idx: Optional[int] = None
    subject: Optional[int] = None
    index: Optional[int] = None

    @property
    def compact(self) -> bool:
        return self.rel_idx is not None


def encode_object_record(rec: ObjectRecord) -> bytes:
    if rec.rel_idx is not None:
        if not 0 < rec.rel_idx <= MAX_REL_IDX:
            raise ValueError(f"rel_idx {rec.rel_idx} does not fit 12 bits")
        return (rec.rel_idx << 1).to_bytes(2, "little")
    if not 0 <= rec.index <= MAX_OBJ_INDEX:
        raise ValueError(f"record index {rec.index} out of range")
    hi = 1 | ((rec.index >> 16) << 1)
    return hi.to_bytes(2, "little") + rec.subject.to_bytes(4, "little") + (rec.index & 0xFFFF).to_bytes(2, "little")


def decode_object_record(buf, off: int = 0) -> Tuple[ObjectRecord, int]:
    if off + 2 > len(buf):
        raise CorruptRecord(f"truncated object record at offset {off}")
    w = buf[off] | (buf[off + 1] << 8)
    if not w & 1:
        rel = (w >> 1) & 0xFFF
        if rel == 0:
            raise CorruptRecord(f"zero relative index at offset {off}")
        return ObjectRecord(rel_idx=rel), off + 2
    if off + 8 > len(buf):
        raise CorruptRecord(f"truncated object record at offset {off}")
    subject = int.from_bytes(buf[off + 2:off + 6], "little")
    index = ((w >> 1) << 16) | buf[off + 6] | (buf[off + 7] << 8)
    return ObjectRecord(subject=subject, index=index), off + 8


def encode_varint(n: int) -> bytes:
    if n < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while n >= 0x80:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    out.append(n)
    return bytes(out)


def decode_varint(buf, off: int = 0) -> Tuple[int, int]:
    shift = 0
    n = 0
    while True:
        if off >= len(buf):
            raise CorruptRecord("truncated varint")
        b = buf[off]
        off += 1
        n |= (b & 0x7F) << shift
        if b < 0x80:
            return n, off
        shift += 7
