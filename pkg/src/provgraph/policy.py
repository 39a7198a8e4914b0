"""Rule-based tag initialization, propagation and attack detection.

Policy files hold one rule per line::

    TRIGGER(args): cond[, cond]* -> action [always]

``args`` name the subject ``s`` and/or object ``o``. Conditions are
``match(x.attr, "regex")`` (optionally negated with ``!``) or comparisons
``x.attr OP value`` with OP in ``< <= == != > >=``; a value is a tag name,
an object type, a quoted string, an integer or another ``x.attr``.
Actions are ``alert("Name")``, ``skip`` or assignments such as
``s.code_ttag=s.data_ttag=o.ttag, s.ctag=o.ctag``. ``#`` starts a comment.
Regex strings are taken verbatim apart from ``\\"``.
"""

from __future__ import annotations

import json
import operator
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .tags import CTAG_NAMES, TTAG_NAMES, CTag, TagState, TTag

UNKNOWN = int(TTag.UNKNOWN)
BENIGN = int(TTag.BENIGN)
SENSITIVE = int(CTag.SENSITIVE)


class Trigger(str, Enum):
    INIT = "init"
    READ = "read"
    EXEC = "exec"
    WRITE = "write"
    MODIFY = "modify"
    PROP_RD = "propRd"
    PROP_EX = "propEx"
    PROP_WR = "propWr"
    PROP_SU = "propSu"


ALARM_TRIGGERS = frozenset((Trigger.READ, Trigger.EXEC, Trigger.WRITE, Trigger.MODIFY))
TAG_TRIGGERS = frozenset((Trigger.INIT, Trigger.PROP_RD, Trigger.PROP_EX, Trigger.PROP_WR, Trigger.PROP_SU))

# event kind -> (alarm triggers, tag trigger)
EVENT_TRIGGERS: Dict[str, Tuple[Tuple[Trigger, ...], Optional[Trigger]]] = {
    "define": ((), Trigger.INIT),
    "read": ((Trigger.READ,), Trigger.PROP_RD),
    "load": ((Trigger.EXEC,), Trigger.PROP_EX),
    "exec": ((Trigger.EXEC,), Trigger.PROP_EX),
    "write": ((Trigger.WRITE,), Trigger.PROP_WR),
    "rm": ((Trigger.WRITE,), None),
    "rename": ((Trigger.WRITE,), None),
    "chmod": ((Trigger.WRITE, Trigger.MODIFY), None),
    "chown": ((Trigger.WRITE, Trigger.MODIFY), None),
    "setuid": ((), Trigger.PROP_SU),
}

_TRIGGER_BY_NAME = {t.value.lower(): t for t in Trigger}


class PolicyError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class PolicySyntaxError(PolicyError):
    pass


class UnknownTrigger(PolicyError):
    pass


class BadRegex(PolicyError):
    pass


class RuleKind(str, Enum):
    DETECTION = "detection"
    TAG_SET = "tag_set"


# (role, field) -> attribute on graph nodes
_FIELDS = {
    "name": "name", "cmdline": "name", "type": "obj_type", "owner": "owner",
    "ttag": "data_ttag", "data_ttag": "data_ttag", "code_ttag": "code_ttag",
    "ctag": "ctag", "pid": "pid",
}
_ASSIGNABLE = {"ttag", "code_ttag", "data_ttag", "ctag"}
_OPS = {"<": operator.lt, "<=": operator.le, "==": operator.eq, "!=": operator.ne,
        ">": operator.gt, ">=": operator.ge}
_OBJ_TYPES = {"file", "socket", "pipe", "memory", "process"}


@dataclass
class Assignment:
    role: str        # "s" or "o"
    fields: Tuple[str, ...]
    value: Callable  # (s, o) -> int


@dataclass
class PolicyRule:
    trigger: Trigger
    kind: RuleKind
    conditions: List[Callable] = field(default_factory=list)
    alert: Optional[str] = None
    skip: bool = False
    assignments: List[Assignment] = field(default_factory=list)
    always: bool = False
    source: str = ""
    line: int = 0
    name_only: bool = False  # conditions look only at names and types

    def matches(self, s, o) -> bool:
        for cond in self.conditions:
            if not cond(s, o):
                return False
        return True

    @property
    def sets_code(self) -> bool:
        return any(a.role == "s" and ("code_ttag" in a.fields or "ttag" in a.fields) for a in self.assignments)


@dataclass
class Alarm:
    alarm_id: int
    name: str
    ts_ms: int
    seq: int
    subject: int
    obj: int
    edge: Tuple[int, int]
    subject_pid: int = 0
    subject_cmdline: str = ""
    object_name: str = ""

    def to_dict(self) -> dict:
        return {
            "alarm_id": self.alarm_id, "name": self.name, "ts_ms": self.ts_ms,
            "seq": self.seq, "subject": self.subject, "object": self.obj,
            "edge": list(self.edge), "subject_pid": self.subject_pid,
            "subject_cmdline": self.subject_cmdline, "object_name": self.object_name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Alarm":
        return cls(d["alarm_id"], d["name"], d["ts_ms"], d["seq"], d["subject"], d["object"],
                   tuple(d["edge"]), d.get("subject_pid", 0), d.get("subject_cmdline", ""),
                   d.get("object_name", ""))

    def text_line(self) -> str:
        ts = datetime.fromtimestamp(self.ts_ms / 1000, tz=timezone.utc)
        stamp = ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{self.ts_ms % 1000:03d}Z"
        return (f"{stamp}: Alarm: {self.name}: Object {self.object_name} "
                f"Subject pid={self.subject_pid} {self.subject_cmdline}")

    def json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# -- parsing -----------------------------------------------------------------

def _split_top(text: str, sep: str) -> List[str]:
    """Split on ``sep`` outside quotes and parentheses."""
    parts, buf, depth, quoted = [], [], 0, False
    i = 0
    while i < len(text):
        ch = text[i]
        if quoted:
            buf.append(ch)
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 1
            elif ch == '"':
                quoted = False
        elif ch == '"':
            quoted = True
            buf.append(ch)
        elif ch == "(":
            depth += 1
            buf.append(ch)
        elif ch == ")":
            depth -= 1
            buf.append(ch)
        elif ch == sep and depth == 0:
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    if quoted:
        raise PolicySyntaxError("unterminated string")
    parts.append("".join(buf).strip())
    return parts


def _find_arrow(text: str) -> int:
    quoted = False
    i = 0
    while i < len(text) - 1:
        ch = text[i]
        if quoted:
            if ch == "\\":
                i += 1
            elif ch == '"':
                quoted = False
        elif ch == '"':
            quoted = True
        elif text.startswith("->", i):
            return i
        i += 1
    return -1


def _unquote(tok: str) -> Optional[str]:
    tok = tok.strip()
    if len(tok) >= 2 and tok[0] == '"' and tok[-1] == '"':
        return tok[1:-1].replace('\\"', '"')
    return None


_REF_RE = re.compile(r"^([so])\.(\w+)$")


def _ref_getter(tok: str, roles: set) -> Optional[Callable]:
    m = _REF_RE.match(tok.strip())
    if not m:
        return None
    role, fld = m.groups()
    if role not in roles:
        raise PolicySyntaxError(f"{role!r} is not bound by this rule's arguments")
    if fld not in _FIELDS:
        raise PolicySyntaxError(f"unknown attribute {fld!r}")
    attr = _FIELDS[fld]
    get = operator.attrgetter(attr)
    if role == "s":
        return lambda s, o: get(s)
    return lambda s, o: get(o)


def _literal(tok: str):
    q = _unquote(tok)
    if q is not None:
        return q
    t = tok.strip()
    low = t.lower()
    if low in TTAG_NAMES:
        return int(TTAG_NAMES[low])
    if low in CTAG_NAMES:
        return int(CTAG_NAMES[low])
    if low in _OBJ_TYPES:
        return low
    if re.fullmatch(r"-?\d+", t):
        return int(t)
    raise PolicySyntaxError(f"cannot parse value {tok!r}")


def _compile_regex(pattern: str) -> re.Pattern:
    try:
        return re.compile(pattern)
    except re.error as exc:
        raise BadRegex(f"bad regex {pattern!r}: {exc}") from None


def _cached_search(rx: re.Pattern, get: Callable) -> Callable:
    cache: Dict[str, bool] = {}

    def cond(s, o):
        text = get(s, o)
        hit = cache.get(text)
        if hit is None:
            if len(cache) > 200_000:
                cache.clear()
            hit = cache[text] = rx.search(text) is not None
        return hit

    return cond


def _static(fn: Callable) -> Callable:
    fn.name_only = True
    return fn


_MATCH_RE = re.compile(r"^(!?)\s*match\s*\((.*)\)$", re.S)
_CMP_RE = re.compile(r"^(.+?)\s*(<=|>=|==|!=|<|>)\s*(.+)$")


def _parse_condition(text: str, roles: set) -> Callable:
    m = _MATCH_RE.match(text)
    if m:
        neg, inner = m.groups()
        args = _split_top(inner, ",")
        if len(args) != 2:
            raise PolicySyntaxError(f"match() takes two arguments: {text!r}")
        get = _ref_getter(args[0], roles)
        if get is None:
            raise PolicySyntaxError(f"match() needs an attribute reference: {args[0]!r}")
        pattern = _unquote(args[1])
        if pattern is None:
            raise PolicySyntaxError(f"match() needs a quoted regex: {args[1]!r}")
        cond = _cached_search(_compile_regex(pattern), get)
        if neg:
            return _static(lambda s, o: not cond(s, o))
        return _static(cond)
    m = _CMP_RE.match(text)
    if not m:
        raise PolicySyntaxError(f"cannot parse condition {text!r}")
    lhs, op, rhs = m.groups()
    left = _ref_getter(lhs, roles)
    if left is None:
        raise PolicySyntaxError(f"left side must be an attribute: {lhs!r}")
    right = _ref_getter(rhs, roles)
    fn = _OPS[op]
    if right is not None:
        return lambda s, o: fn(left(s, o), right(s, o))
    value = _literal(rhs)
    static = _REF_RE.match(lhs.strip()).group(2) in ("name", "cmdline", "type")
    if isinstance(value, str):
        value_low = value.lower() if value.lower() in _OBJ_TYPES else value
        cond = lambda s, o: fn(left(s, o).lower() if value_low in _OBJ_TYPES else left(s, o), value_low)
    else:
        cond = lambda s, o: fn(left(s, o), value)
    return _static(cond) if static else cond


def _parse_action(text: str, roles: set, trigger: Trigger, line: int) -> dict:
    always = False
    if re.search(r"\balways\s*$", text):
        always = True
        text = re.sub(r"\balways\s*$", "", text).strip()
    if re.fullmatch(r"skip", text):
        return {"skip": True, "always": always}
    m = re.fullmatch(r"alert\s*\((.*)\)", text)
    if m:
        name = _unquote(m.group(1))
        if not name:
            raise PolicySyntaxError("alert() needs a quoted name", line)
        return {"alert": name, "always": always}
    assigns = []
    for part in _split_top(text, ","):
        pieces = [p.strip() for p in part.split("=")]
        if len(pieces) < 2 or any(not p for p in pieces):
            raise PolicySyntaxError(f"cannot parse action {part!r}", line)
        *targets, value_tok = pieces
        value = _ref_getter(value_tok, roles)
        if value is None:
            lit = _literal(value_tok)
            if isinstance(lit, str):
                raise PolicySyntaxError(f"tag value expected, got {value_tok!r}", line)
            value = (lambda v: (lambda s, o: v))(lit)
        by_role: Dict[str, List[str]] = {}
        for t in targets:
            m = _REF_RE.match(t)
            if not m or m.group(2) not in _ASSIGNABLE:
                raise PolicySyntaxError(f"cannot assign to {t!r}", line)
            if m.group(1) not in roles:
                raise PolicySyntaxError(f"{m.group(1)!r} is not bound", line)
            by_role.setdefault(m.group(1), []).append(m.group(2))
        for role, fields in by_role.items():
            assigns.append(Assignment(role, tuple(fields), value))
    return {"assignments": assigns, "always": always}


_HEADER_RE = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*:\s*(.*)$", re.S)


def parse_rule(text: str, line: int = 0) -> PolicyRule:
    m = _HEADER_RE.match(text)
    if not m:
        raise PolicySyntaxError(f"expected TRIGGER(args): ... in {text!r}", line)
    trig_name, args, body = m.groups()
    trigger = _TRIGGER_BY_NAME.get(trig_name.lower())
    if trigger is None:
        raise UnknownTrigger(f"unknown trigger {trig_name!r}", line)
    roles = {a.strip() for a in args.split(",") if a.strip()}
    if not roles or not roles <= {"s", "o"}:
        raise PolicySyntaxError(f"arguments must be s and/or o, got {args!r}", line)
    arrow = _find_arrow(body)
    if arrow < 0:
        raise PolicySyntaxError("missing '->'", line)
    cond_text, action_text = body[:arrow].strip(), body[arrow + 2:].strip()
    try:
        conds = [_parse_condition(c, roles) for c in _split_top(cond_text, ",") if c]
        action = _parse_action(action_text, roles, trigger, line)
    except PolicyError as exc:
        if exc.line is None:
            raise type(exc)(str(exc), line) from None
        raise
    if "alert" in action:
        if trigger not in ALARM_TRIGGERS:
            raise PolicySyntaxError(f"alert() is only allowed at alarm triggers, not {trigger.value}", line)
        kind = RuleKind.DETECTION
    else:
        if trigger not in TAG_TRIGGERS:
            raise PolicySyntaxError(f"tag actions are only allowed at tag triggers, not {trigger.value}", line)
        kind = RuleKind.TAG_SET
    return PolicyRule(
        trigger, kind, conds, alert=action.get("alert"), skip=action.get("skip", False),
        assignments=action.get("assignments", []), always=action.get("always", False),
        source=text.strip(), line=line,
        name_only=all(getattr(c, "name_only", False) for c in conds),
    )


def parse_policy_text(text: str) -> List[PolicyRule]:
    rules = []
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rules.append(parse_rule(line, line_no))
    return rules


def load_policy_file(path) -> List[PolicyRule]:
    return parse_policy_text(Path(path).read_text(encoding="utf-8"))


def stock_policy_path() -> Path:
    return Path(__file__).parent / "data" / "stock.policy"


def load_stock_policy() -> List[PolicyRule]:
    return load_policy_file(stock_policy_path())


# -- evaluation --------------------------------------------------------------

BUILTIN_DETECTORS = ("UntrustedExec", "SuspiciousModification", "ConfDataLeak", "PrepUntrustedExec")


class PolicyEngine:
    """Compiled rule set. Immutable after construction."""

    def __init__(self, rules: Optional[List[PolicyRule]] = None, single_ttag: bool = False,
                 detect_always: bool = False, builtins: bool = True):
        self.rules = list(rules or [])
        self.single_ttag = single_ttag
        self.detect_always = detect_always
        self.builtins = builtins
        self.by_trigger: Dict[Trigger, List[PolicyRule]] = {t: [] for t in Trigger}
        for r in self.rules:
            self.by_trigger[r.trigger].append(r)
        self._prop = {t: tuple(self.by_trigger[t]) for t in TAG_TRIGGERS}
        self._det = {t: tuple(self.by_trigger[t]) for t in ALARM_TRIGGERS}
        self.any_always = any(r.always for r in self.rules)
        # first matching rule per (subject name, object name, object type),
        # usable when every rule of a trigger looks only at names
        self._name_cache: Dict[Trigger, Optional[dict]] = {
            t: ({} if all(r.name_only for r in self._prop[t]) else None) for t in TAG_TRIGGERS
        }

    def _first_match(self, trigger: Trigger, s, o) -> Optional[PolicyRule]:
        rules = self._prop[trigger]
        if not rules:
            return None
        cache = self._name_cache[trigger]
        if cache is not None:
            key = (s.name, o.name, o.obj_type)
            try:
                return cache[key]
            except KeyError:
                pass
        found = None
        for rule in rules:
            if rule.matches(s, o):
                found = rule
                break
        if cache is not None:
            if len(cache) > 500_000:
                cache.clear()
            cache[key] = found
        return found

    # init ------------------------------------------------------------

    def run_init(self, node) -> Optional[TagState]:
        """Tags from the first matching init rule, or None when no rule applies."""
        roles = "s" if node.is_subject else "o"
        for rule in self._prop[Trigger.INIT]:
            if rule.skip:
                continue
            # an init rule binds either s or o; skip rules written for the other role
            if any(a.role != roles for a in rule.assignments):
                continue
            try:
                if not rule.matches(node, node):
                    continue
            except AttributeError:
                continue
            code, data, ctag = UNKNOWN, UNKNOWN, int(CTag.PUBLIC)
            for a in rule.assignments:
                v = a.value(node, node)
                for f in a.fields:
                    if f == "ctag":
                        ctag = v
                    elif f == "code_ttag":
                        code = v
                    elif f == "data_ttag":
                        data = v
                    else:
                        code = data = v
            if not node.is_subject:
                code = data
            return TagState(TTag(code), TTag(data), CTag(ctag))
        return None

    # propagation -------------------------------------------------------

    def propagate(self, trigger: Optional[Trigger], s, o, target_is_subject: bool):
        """New int tag triple for the flow target plus a read-as-load flag.

        Returns (None, False) for skip. ``s`` is the subject, ``o`` the
        other endpoint; for propSu ``s`` is the target and ``o`` the source.
        """
        if trigger is not None:
            rule = self._first_match(trigger, s, o)
            if rule is not None:
                if rule.skip:
                    return None, False
                return self._apply(rule, s, o, target_is_subject), rule.sets_code
        return self._default(trigger, s, o, target_is_subject), False

    def _default(self, trigger, s, o, target_is_subject):
        if target_is_subject:
            tgt, src = s, o
        else:
            tgt, src = o, s
        sd = src.data_ttag
        data = tgt.data_ttag if tgt.data_ttag <= sd else sd
        ctag = tgt.ctag if tgt.ctag >= src.ctag else src.ctag
        if target_is_subject:
            code = tgt.code_ttag
            if trigger is Trigger.PROP_EX or self.single_ttag:
                if sd < code:
                    code = sd
            return code, data, ctag
        return data, data, ctag

    def _apply(self, rule: PolicyRule, s, o, target_is_subject: bool):
        tgt = s if target_is_subject else o
        code, data, ctag = tgt.code_ttag, tgt.data_ttag, tgt.ctag
        target_role = "s" if target_is_subject else "o"
        for a in rule.assignments:
            if a.role != target_role:
                continue
            v = a.value(s, o)
            for f in a.fields:
                if f == "ctag":
                    ctag = v
                elif f == "code_ttag":
                    code = v
                elif f == "data_ttag":
                    data = v
                else:
                    code = data = v
        if not target_is_subject:
            code = data
        elif self.single_ttag and data < code:
            code = data
        return code, data, ctag

    def run_propagation(self, trigger: Trigger, subject, obj) -> Optional[TagState]:
        """Resulting tags of the flow target, or None when a skip rule matched."""
        target_is_subject = trigger in (Trigger.PROP_RD, Trigger.PROP_EX, Trigger.PROP_SU)
        tags, _ = self.propagate(trigger, subject, obj, target_is_subject)
        if tags is None:
            return None
        return TagState(TTag(tags[0]), TTag(tags[1]), CTag(tags[2]))

    # detection ---------------------------------------------------------

    def detect(self, triggers, s, o, tag_changing: bool, makes_executable: bool = False) -> List[str]:
        """Names of alarms raised on one edge; each name at most once."""
        names: List[str] = []
        gated = tag_changing or self.detect_always
        if self.builtins:
            if gated:
                if Trigger.EXEC in triggers and o.data_ttag < s.code_ttag:
                    names.append("UntrustedExec")
                if (Trigger.WRITE in triggers or Trigger.MODIFY in triggers) and s.code_ttag < o.data_ttag:
                    names.append("SuspiciousModification")
                if (Trigger.WRITE in triggers and not o.is_subject and o.obj_type == "socket"
                        and s.ctag >= SENSITIVE and s.code_ttag == UNKNOWN):
                    names.append("ConfDataLeak")
            # configured to run regardless of tag change
            if Trigger.MODIFY in triggers and makes_executable and s.code_ttag == UNKNOWN:
                names.append("PrepUntrustedExec")
        for t in triggers:
            for rule in self._det[t]:
                if (gated or rule.always) and rule.alert not in names and rule.matches(s, o):
                    names.append(rule.alert)
        return names

    def run_detection(self, trigger, subject, obj, tag_changing: bool, makes_executable: bool = False) -> List[str]:
        triggers = (trigger,) if isinstance(trigger, Trigger) else tuple(trigger)
        return self.detect(triggers, subject, obj, tag_changing, makes_executable)

    def has_always_rules(self, triggers) -> bool:
        return self.any_always and any(r.always for t in triggers for r in self._det[t])
