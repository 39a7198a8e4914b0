import pytest
from hypothesis import given, strategies as st

from provgraph import encoding as enc
from provgraph.encoding import (
    CorruptRecord, ObjectRecord, SubjectRecord, decode_object_record, decode_subject_record,
    decode_varint, encode_object_record, encode_subject_record, encode_varint, subject_record_size,
)


def test_compact_read_layout():
    rec = SubjectRecord(enc.OP_READ, 5, 10)
    raw = encode_subject_record(rec)
    assert len(raw) == 4
    assert raw == ((enc.OP_READ << 2) | (5 << 6) | (10 << 14)).to_bytes(4, "little")
    assert decode_subject_record(raw) == (rec, 4)


@pytest.mark.parametrize("rec,size", [
    (SubjectRecord(enc.OP_WRITE, 255, 0xFFFF, True, True), 4),
    (SubjectRecord(enc.OP_WRITE, 256), 8),
    (SubjectRecord(enc.OP_CLONE, 7, is_node=True), 8),
    (SubjectRecord(enc.OP_TIMEGAP, 1 << 16), 8),
    (SubjectRecord(enc.OP_CHMOD, 3, blob=9), 12),
    (SubjectRecord(enc.OP_ESCAPE, 4, is_node=True, aux=17), 12),
    (SubjectRecord(enc.OP_RENAME, 3, aux=1, blob=2), 16),
])
def test_record_forms(rec, size):
    raw = encode_subject_record(rec)
    assert len(raw) == size == subject_record_size(rec)
    assert decode_subject_record(raw) == (rec, size)


def test_delta_must_fit():
    encode_subject_record(SubjectRecord(enc.OP_READ, 0, (1 << 16) - 1))
    with pytest.raises(ValueError):
        encode_subject_record(SubjectRecord(enc.OP_READ, 0, 1 << 16))


def test_object_record_boundaries():
    top = ObjectRecord(rel_idx=(1 << 12) - 1)
    raw = encode_object_record(top)
    assert len(raw) == 2 and decode_object_record(raw) == (top, 2)
    with pytest.raises(ValueError):
        encode_object_record(ObjectRecord(rel_idx=1 << 12))
    with pytest.raises(ValueError):
        encode_object_record(ObjectRecord(rel_idx=0))
    ext = ObjectRecord(subject=123456, index=(1 << 31) - 1)
    assert decode_object_record(encode_object_record(ext)) == (ext, 8)


def test_aux_needs_blob_outside_escape():
    with pytest.raises(ValueError):
        encode_subject_record(SubjectRecord(enc.OP_READ, 1, aux=3))


def test_corrupt_input():
    with pytest.raises(CorruptRecord):
        decode_subject_record(b"\x00\x00")
    with pytest.raises(CorruptRecord):
        decode_subject_record((15 << 2).to_bytes(4, "little"))
    with pytest.raises(CorruptRecord):
        decode_subject_record(b"\x01\x00\x00\x00\x00")
    with pytest.raises(CorruptRecord):
        decode_object_record(b"\x00\x00")
    with pytest.raises(CorruptRecord):
        decode_varint(b"\x80")


def test_varint():
    for n in (0, 1, 127, 128, 300, 2**32, 2**63):
        raw = encode_varint(n)
        assert decode_varint(raw) == (n, len(raw))
    assert len(encode_varint(127)) == 1 and len(encode_varint(128)) == 2
    with pytest.raises(ValueError):
        encode_varint(-1)


ops = st.sampled_from([v for k, v in enc.OPCODES.items()])


@st.composite
def subject_records(draw):
    op = draw(ops)
    blob = draw(st.one_of(st.none(), st.integers(0, enc.MAX_U32)))
    aux = draw(st.one_of(st.none(), st.integers(0, enc.MAX_U32)))
    if aux is not None and blob is None:
        op = enc.OP_ESCAPE
    elif op == enc.OP_ESCAPE and aux is None:
        aux = 0
    return SubjectRecord(op, draw(st.integers(0, enc.MAX_U32)), draw(st.integers(0, enc.MAX_DELTA16)),
                         draw(st.booleans()), draw(st.booleans()), draw(st.booleans()), blob, aux)


@given(st.lists(subject_records(), max_size=30))
def test_subject_stream_round_trip(recs):
    buf = b"".join(encode_subject_record(r) for r in recs)
    off = 0
    out = []
    while off < len(buf):
        r, off = decode_subject_record(buf, off)
        out.append(r)
    assert out == recs
