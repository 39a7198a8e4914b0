"""Trustworthiness and confidentiality lattices and default tag propagation."""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple


class TTag(IntEnum):
    """Trustworthiness, higher is more trusted."""

    UNKNOWN = 0
    BENIGN = 1
    BENIGN_AUTH = 2


class CTag(IntEnum):
    """Confidentiality, higher is more confidential."""

    PUBLIC = 0
    PRIVATE = 1
    SENSITIVE = 2
    SECRET = 3


TTAG_NAMES = {t.name.lower(): t for t in TTag}
CTAG_NAMES = {c.name.lower(): c for c in CTag}


def parse_tag(name: str):
    key = name.strip().lower()
    if key in TTAG_NAMES:
        return TTAG_NAMES[key]
    if key in CTAG_NAMES:
        return CTAG_NAMES[key]
    raise ValueError(f"unknown tag name {name!r}")


def ttag_min(a: TTag, b: TTag) -> TTag:
    return a if a <= b else b


def ctag_max(a: CTag, b: CTag) -> CTag:
    return a if a >= b else b


class TagState(NamedTuple):
    code_ttag: TTag
    data_ttag: TTag
    ctag: CTag

    @classmethod
    def for_object(cls, ttag: TTag, ctag: CTag) -> "TagState":
        return cls(ttag, ttag, ctag)

    @property
    def has_unknown(self) -> bool:
        return self.code_ttag == TTag.UNKNOWN or self.data_ttag == TTag.UNKNOWN

    @property
    def fully_benign(self) -> bool:
        return self.code_ttag >= TTag.BENIGN and self.data_ttag >= TTag.BENIGN

    def __str__(self) -> str:
        return f"({self.code_ttag.name},{self.data_ttag.name},{self.ctag.name})"


def default_propagate(
    flow_target: TagState,
    flow_source: TagState,
    is_load_or_exec: bool,
    single_ttag: bool = False,
) -> TagState:
    """Meet t-tags and join c-tags along one flow.

    The code t-tag only drops on loads and executions, unless the engine
    runs with a single t-tag, in which case it follows the data t-tag.
    """
    data = ttag_min(flow_target.data_ttag, flow_source.data_ttag)
    code = flow_target.code_ttag
    if is_load_or_exec or single_ttag:
        code = ttag_min(code, flow_source.data_ttag)
    ctag = ctag_max(flow_target.ctag, flow_source.ctag)
    return TagState(TTag(code), TTag(data), CTag(ctag))


def object_tags(state: TagState) -> TagState:
    """Objects carry one t-tag, stored in both slots."""
    return TagState(state.data_ttag, state.data_ttag, state.ctag)
