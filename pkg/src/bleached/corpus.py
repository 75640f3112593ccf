"""Documents and events in the JSON-lines interchange format.

One object per line::

    {"doc_id": "d1", "tokens": [...],
     "events": [{"type": "Life:Die", "trigger": [2, 3], "args": {"victim": [[3, 5]]}}],
     "sentences": [[1, 9], [9, 20]]}

Spans are 1-based half-open token intervals. ``sentences`` is optional.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .ontology import Span


class CorpusError(ValueError):
    pass


@dataclass
class EventRecord:
    event_type: str
    trigger: Span
    arguments: dict[str, list[Span]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "type": self.event_type,
            "trigger": list(self.trigger),
            "args": {role: [list(sp) for sp in spans] for role, spans in self.arguments.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EventRecord":
        trigger = tuple(obj["trigger"])
        args = {role: sorted(tuple(sp) for sp in spans) for role, spans in obj.get("args", {}).items()}
        return cls(obj["type"], trigger, args)

    def shifted(self, offset: int) -> "EventRecord":
        def mv(sp):
            return (sp[0] + offset, sp[1] + offset)

        return EventRecord(
            self.event_type,
            mv(self.trigger),
            {r: [mv(sp) for sp in spans] for r, spans in self.arguments.items()},
        )

    def spans(self) -> Iterator[Span]:
        yield self.trigger
        for spans in self.arguments.values():
            yield from spans


@dataclass
class Document:
    doc_id: str
    tokens: list[str]
    events: list[EventRecord] = field(default_factory=list)
    sentences: list[Span] | None = None

    def to_json(self) -> dict:
        obj = {
            "doc_id": self.doc_id,
            "tokens": list(self.tokens),
            "events": [ev.to_json() for ev in self.events],
        }
        if self.sentences is not None:
            obj["sentences"] = [list(s) for s in self.sentences]
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Document":
        sentences = obj.get("sentences")
        doc = cls(
            str(obj["doc_id"]),
            list(obj["tokens"]),
            [EventRecord.from_json(ev) for ev in obj.get("events", [])],
            [tuple(s) for s in sentences] if sentences is not None else None,
        )
        doc.validate()
        return doc

    def validate(self) -> None:
        m = len(self.tokens)
        for ev in self.events:
            for start, end in ev.spans():
                if not (1 <= start < end <= m + 1):
                    raise CorpusError(f"{self.doc_id}: span {[start, end]} outside {m} tokens")
        if self.sentences is not None:
            pos = 1
            for start, end in self.sentences:
                if start != pos or end <= start:
                    raise CorpusError(f"{self.doc_id}: sentences must tile the document in order")
                pos = end
            if pos != m + 1:
                raise CorpusError(f"{self.doc_id}: sentences do not cover all tokens")

    def contexts(self) -> list[Span]:
        """Sentence intervals, or the whole document when none are given."""
        return list(self.sentences) if self.sentences else [(1, len(self.tokens) + 1)]

    def sentence_of(self, span: Span) -> Span:
        for start, end in self.contexts():
            if start <= span[0] and span[1] <= end:
                return (start, end)
        raise CorpusError(f"{self.doc_id}: span {list(span)} crosses a sentence boundary")


def read_documents(path) -> list[Document]:
    return list(iter_documents(path))


def iter_documents(path) -> Iterator[Document]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield Document.from_json(json.loads(line))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None


def dumps_document(doc: Document) -> str:
    return json.dumps(doc.to_json(), ensure_ascii=False, sort_keys=True)


def write_documents(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(dumps_document(doc) + "\n")
