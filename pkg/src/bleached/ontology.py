"""Bleached statements, the ontology file format, and statement rendering.

Token positions and spans are 1-based throughout the package. A span is a
half-open ``(start, end)`` pair, so ``(3, 5)`` covers tokens 3 and 4.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

TRIGGER = "trigger"
JOIN_TOKEN = "and"

Span = tuple[int, int]


class OntologyError(ValueError):
    """Malformed or invalid ontology input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RoleSlot:
    role: str
    indices: tuple[int, ...]

    @property
    def start(self) -> int:
        return self.indices[0]

    @property
    def end(self) -> int:
        return self.indices[-1] + 1


@dataclass(frozen=True)
class BleachedStatement:
    event_type: str
    tokens: tuple[str, ...]
    placeholders: tuple[RoleSlot, ...]

    def __post_init__(self):
        validate_statement(self)

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(slot.role for slot in self.placeholders)

    def slot(self, role: str) -> RoleSlot:
        for slot in self.placeholders:
            if slot.role == role:
                return slot
        raise KeyError(role)

    def __len__(self) -> int:
        return len(self.tokens)


def validate_statement(stmt: BleachedStatement) -> None:
    n = len(stmt.tokens)
    if n == 0:
        raise OntologyError(f"{stmt.event_type}: empty statement")
    seen_roles: set[str] = set()
    used: set[int] = set()
    prev_end = 1
    for slot in stmt.placeholders:
        if slot.role == TRIGGER:
            raise OntologyError(f"{stmt.event_type}: role name '{TRIGGER}' is reserved")
        if not slot.role:
            raise OntologyError(f"{stmt.event_type}: empty role name")
        if slot.role in seen_roles:
            raise OntologyError(f"{stmt.event_type}: duplicate role '{slot.role}'")
        seen_roles.add(slot.role)
        idx = slot.indices
        if not idx:
            raise OntologyError(f"{stmt.event_type}: empty placeholder for role '{slot.role}'")
        if list(idx) != list(range(idx[0], idx[0] + len(idx))):
            raise OntologyError(f"{stmt.event_type}: placeholder '{slot.role}' is not contiguous")
        if idx[0] < 1 or idx[-1] > n:
            raise OntologyError(f"{stmt.event_type}: placeholder '{slot.role}' out of range")
        if used.intersection(idx):
            raise OntologyError(f"{stmt.event_type}: placeholder '{slot.role}' overlaps another role")
        if idx[0] < prev_end:
            raise OntologyError(f"{stmt.event_type}: placeholders must be listed left to right")
        prev_end = idx[-1] + 1
        used.update(idx)


def trigger_index_set(stmt: BleachedStatement) -> tuple[int, ...]:
    """Positions of every statement token outside the role placeholders."""
    covered = {i for slot in stmt.placeholders for i in slot.indices}
    positions = tuple(i for i in range(1, len(stmt.tokens) + 1) if i not in covered)
    if not positions:
        raise OntologyError(f"{stmt.event_type}: statement has no trigger tokens")
    return positions


@dataclass(frozen=True)
class Ontology:
    entries: tuple[BleachedStatement, ...] = ()

    def __post_init__(self):
        seen = set()
        for stmt in self.entries:
            if stmt.event_type in seen:
                raise OntologyError(f"duplicate event type '{stmt.event_type}'")
            seen.add(stmt.event_type)

    def __iter__(self) -> Iterator[BleachedStatement]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, event_type: object) -> bool:
        return any(s.event_type == event_type for s in self.entries)

    def __getitem__(self, event_type: str) -> BleachedStatement:
        for stmt in self.entries:
            if stmt.event_type == event_type:
                return stmt
        raise KeyError(event_type)

    @property
    def event_types(self) -> list[str]:
        return [s.event_type for s in self.entries]

    def subset(self, event_types: Iterable[str]) -> "Ontology":
        keep = set(event_types)
        return Ontology(tuple(s for s in self.entries if s.event_type in keep))

    def without(self, event_type: str) -> "Ontology":
        return Ontology(tuple(s for s in self.entries if s.event_type != event_type))


# --- file format -----------------------------------------------------------

_ESCAPABLE = "[]|"


def _scan_markup(body: str, lineno: int | None) -> list[tuple[str, str | None]]:
    """Split a statement body into (text, role) segments; role is None outside markup."""
    segments: list[tuple[str, str | None]] = []
    buf: list[str] = []
    role_buf: list[str] = []
    state = "text"  # text | role | words
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body) and body[i + 1] in _ESCAPABLE:
            (role_buf if state == "role" else buf).append(body[i + 1])
            i += 2
            continue
        if state == "text":
            if ch == "[":
                segments.append(("".join(buf), None))
                buf, role_buf = [], []
                state = "role"
            elif ch in "]|":
                raise OntologyError(f"unexpected '{ch}' outside placeholder", lineno)
            else:
                buf.append(ch)
        elif state == "role":
            if ch == "|":
                state = "words"
            elif ch in "[]":
                raise OntologyError("malformed placeholder, expected '[role|words]'", lineno)
            else:
                role_buf.append(ch)
        else:
            if ch == "]":
                role = "".join(role_buf).strip()
                if not role:
                    raise OntologyError("placeholder without a role name", lineno)
                segments.append(("".join(buf), role))
                buf = []
                state = "text"
            elif ch in "[|":
                raise OntologyError(f"unexpected '{ch}' inside placeholder", lineno)
            else:
                buf.append(ch)
        i += 1
    if state != "text":
        raise OntologyError("unterminated placeholder", lineno)
    segments.append(("".join(buf), None))
    return segments


def parse_statement(line: str, lineno: int | None = None) -> BleachedStatement:
    if "::" not in line:
        raise OntologyError("expected 'EVENT_TYPE :: statement'", lineno)
    event_type, body = line.split("::", 1)
    event_type = event_type.strip()
    if not event_type or any(c.isspace() for c in event_type):
        raise OntologyError(f"bad event type '{event_type}'", lineno)
    tokens: list[str] = []
    slots: list[RoleSlot] = []
    roles_seen: set[str] = set()
    for text, role in _scan_markup(body, lineno):
        words = text.split()
        if role is not None:
            if not words:
                raise OntologyError(f"empty placeholder for role '{role}'", lineno)
            if role in roles_seen:
                raise OntologyError(f"duplicate role '{role}'", lineno)
            roles_seen.add(role)
            start = len(tokens) + 1
            slots.append(RoleSlot(role, tuple(range(start, start + len(words)))))
        tokens.extend(words)
    try:
        return BleachedStatement(event_type, tuple(tokens), tuple(slots))
    except OntologyError as exc:
        raise OntologyError(str(exc), lineno) from None


def parse_ontology(source: str) -> Ontology:
    """Parse the text of an ontology file.

    Each non-blank, non-comment line is ``EVENT_TYPE :: words [role|placeholder words] ...``.
    Every statement must also leave at least one trigger token.
    """
    entries = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        stmt = parse_statement(line, lineno)
        if stmt.event_type in seen:
            raise OntologyError(
                f"duplicate event type '{stmt.event_type}' (first on line {seen[stmt.event_type]})",
                lineno,
            )
        seen[stmt.event_type] = lineno
        try:
            trigger_index_set(stmt)
        except OntologyError as exc:
            raise OntologyError(str(exc), lineno) from None
        entries.append(stmt)
    return Ontology(tuple(entries))


def load_ontology(path) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        return parse_ontology(fh.read())


def _escape(token: str) -> str:
    for ch in _ESCAPABLE:
        token = token.replace(ch, "\\" + ch)
    return token


def serialize_statement(stmt: BleachedStatement) -> str:
    parts = []
    starts = {slot.start: slot for slot in stmt.placeholders}
    i = 1
    while i <= len(stmt.tokens):
        slot = starts.get(i)
        if slot is None:
            parts.append(_escape(stmt.tokens[i - 1]))
            i += 1
        else:
            words = " ".join(_escape(stmt.tokens[j - 1]) for j in slot.indices)
            parts.append(f"[{_escape(slot.role)}|{words}]")
            i = slot.end
    return f"{stmt.event_type} :: {' '.join(parts)}"


def serialize_ontology(ontology: Ontology) -> str:
    return "".join(serialize_statement(s) + "\n" for s in ontology)


# --- incremental refinement state --------------------------------------------

SKIPPED = None


@dataclass
class RefinementState:
    """A bleached statement part way through left-to-right filling.

    ``fills`` maps a visited role to its span tuple, or to ``None`` when the
    role was skipped. Unvisited roles are absent.
    """

    statement: BleachedStatement
    text: Sequence[str]
    fills: dict[str, tuple[Span, ...] | None] = field(default_factory=dict)
    order: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.order is None:
            self.order = self.statement.roles
        elif sorted(self.order) != sorted(self.statement.roles):
            raise ValueError("fill order must be a permutation of the statement roles")

    @property
    def round(self) -> int:
        return len(self.fills) + 1

    @property
    def next_role(self) -> str | None:
        for role in self.order:
            if role not in self.fills:
                return role
        return None

    def _replacement(self, role: str) -> list[str] | None:
        spans = self.fills.get(role)
        if not spans:
            return None
        out: list[str] = []
        for k, (start, end) in enumerate(sorted(spans)):
            if k:
                out.append(JOIN_TOKEN)
            out.extend(self.text[start - 1 : end - 1])
        return out

    def _layout(self) -> tuple[list[str], dict[str, tuple[int, ...]]]:
        tokens: list[str] = []
        positions: dict[str, tuple[int, ...]] = {}
        starts = {slot.start: slot for slot in self.statement.placeholders}
        base = self.statement.tokens
        i = 1
        while i <= len(base):
            slot = starts.get(i)
            if slot is None:
                tokens.append(base[i - 1])
                i += 1
                continue
            words = self._replacement(slot.role)
            if words is None:
                words = [base[j - 1] for j in slot.indices]
            first = len(tokens) + 1
            tokens.extend(words)
            positions[slot.role] = tuple(range(first, first + len(words)))
            i = slot.end
        return tokens, positions

    @property
    def tokens(self) -> list[str]:
        return self._layout()[0]

    def index_set(self, role: str) -> tuple[int, ...]:
        """Current positions of ``role`` in the rendered statement."""
        return self._layout()[1][role]

    def fill(self, role: str, spans: Iterable[Span]) -> None:
        spans = tuple(sorted(spans))
        if role != self.next_role:
            raise ValueError(f"role '{role}' is not next in fill order")
        for start, end in spans:
            if not (1 <= start < end <= len(self.text) + 1):
                raise ValueError(f"span {(start, end)} outside text")
        self.fills[role] = spans if spans else SKIPPED

    def skip(self, role: str) -> None:
        self.fill(role, ())

    @property
    def filled(self) -> dict[str, tuple[Span, ...]]:
        return {r: s for r, s in self.fills.items() if s}


def render_statement(state: RefinementState) -> list[str]:
    return state.tokens


def detokenize(tokens: Sequence[str]) -> str:
    out = ""
    for tok in tokens:
        if out and tok not in {"?", ".", ",", "!", ";", ":"}:
            out += " "
        out += tok
    return out
