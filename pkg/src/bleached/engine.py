"""Incremental statement refinement: argument and event extraction.

The ``model`` passed around here is anything with a ``get_args(statement,
focus, text, trigger_span=None, sentences=None)`` method returning a list of
1-based half-open spans; :class:`bleached.selector.EventModel` is the real one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .corpus import Document, EventRecord
from .ontology import BleachedStatement, Ontology, RefinementState, Span, trigger_index_set

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnchoredStatement:
    statement: BleachedStatement
    trigger_span: Span


def anchor_trigger(stmt: BleachedStatement, trigger: Span, text_length: int | None = None) -> AnchoredStatement:
    """Bind a statement to one trigger occurrence.

    The statement is left as is; the span travels to the encoder, which
    brackets it with marker tokens in the text.
    """
    if trigger[0] < 1 or trigger[1] <= trigger[0]:
        raise ValueError(f"bad trigger span {trigger}")
    if text_length is not None and trigger[1] > text_length + 1:
        raise ValueError(f"trigger span {trigger} outside text of length {text_length}")
    return AnchoredStatement(stmt, tuple(trigger))


def extract_args(
    model,
    stmt: BleachedStatement | AnchoredStatement,
    text: Sequence[str],
    trigger_span: Span | None = None,
    sentences=None,
    order: Sequence[str] | None = None,
    trace: list | None = None,
) -> dict[str, list[Span]]:
    if isinstance(stmt, AnchoredStatement):
        trigger_span = stmt.trigger_span
        stmt = stmt.statement
    if not text:
        raise ValueError("text is empty")
    state = RefinementState(stmt, list(text), order=tuple(order) if order else None)
    while (role := state.next_role) is not None:
        tokens = state.tokens
        focus = state.index_set(role)
        spans = list(model.get_args(tokens, focus, list(text), trigger_span, sentences))
        state.fill(role, spans)
        step = {
            "event_type": stmt.event_type,
            "round": len(state.fills),
            "role": role,
            "statement": tokens,
            "focus": list(focus),
            "spans": [list(sp) for sp in spans],
        }
        if trace is not None:
            trace.append(step)
        log.debug("refine %s", step)
    return {role: list(spans) for role, spans in state.filled.items()}


def identify_triggers(model, stmt: BleachedStatement, text: Sequence[str], sentences=None) -> list[Span]:
    focus = trigger_index_set(stmt)
    return list(model.get_args(list(stmt.tokens), focus, list(text), None, sentences))


def extract_events(
    model,
    ontology: Ontology,
    tokens: Sequence[str],
    sentences: Sequence[Span] | None = None,
    per_sentence: bool = True,
    trace: list | None = None,
) -> list[EventRecord]:
    """Run trigger identification and argument extraction for every event type.

    With ``per_sentence`` and known sentence boundaries each sentence is
    processed as its own text; otherwise the whole token list is the text and
    the boundaries are handed to the selector.
    """
    tokens = list(tokens)
    if not tokens:
        return []
    if sentences and per_sentence:
        contexts = [(s, e, None) for s, e in sentences]
    else:
        contexts = [(1, len(tokens) + 1, list(sentences) if sentences else None)]
    events: list[EventRecord] = []
    for stmt in ontology:
        found = []
        for start, end, bounds in contexts:
            text = tokens[start - 1 : end - 1]
            if bounds:
                bounds = [(s - start + 1, e - start + 1) for s, e in bounds]
            try:
                triggers = identify_triggers(model, stmt, text, bounds)
            except Exception:
                log.exception("trigger identification failed for %s", stmt.event_type)
                continue
            log.debug("triggers %s", {"event_type": stmt.event_type, "start": start, "spans": triggers})
            for trig in triggers:
                try:
                    anchored = anchor_trigger(stmt, trig, len(text))
                    args = extract_args(model, anchored, text, sentences=bounds, trace=trace)
                except Exception:
                    log.exception("argument extraction failed for %s at %s", stmt.event_type, trig)
                    continue
                found.append(EventRecord(stmt.event_type, trig, args).shifted(start - 1))
        found.sort(key=lambda ev: ev.trigger)
        events.extend(found)
    return events


def extract_document(model, ontology: Ontology, doc: Document, per_sentence: bool = True) -> Document:
    events = extract_events(model, ontology, doc.tokens, doc.sentences, per_sentence)
    return Document(doc.doc_id, list(doc.tokens), events, doc.sentences)
