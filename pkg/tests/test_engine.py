import logging

import pytest

from bleached.corpus import Document
from bleached.encoder import EncoderConfig, EncoderInput, Vocabulary, pack_input
from bleached.engine import anchor_trigger, extract_args, extract_document, extract_events, identify_triggers
from bleached.ontology import Ontology, parse_ontology, parse_statement

LIFE_DIE = ("Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] "
            "in [place|some place] at [time|some time]")
BAGHDAD = "Fighting continued in Baghdad . coalition forces killed a man at a checkpoint on Saturday .".split()


def find(text, phrase):
    words = phrase.split()
    for k in range(len(text) - len(words) + 1):
        if text[k : k + len(words)] == words:
            return (k + 1, k + 1 + len(words))
    return None


class ScriptedModel:
    """Answers by the words under focus: ``answers[focused words] -> phrases``."""

    def __init__(self, answers):
        self.answers = answers
        self.calls = []

    def get_args(self, statement, focus, text, trigger_span=None, sentences=None):
        key = " ".join(statement[i - 1] for i in focus)
        self.calls.append((list(statement), list(focus), list(text), trigger_span))
        spans = [find(list(text), p) for p in self.answers.get(key, [])]
        return [s for s in spans if s is not None]


GOLD_DIE = ScriptedModel({
    "killed with in at": ["killed"],
    "someone": ["coalition forces"],
    "someone else": ["a man"],
    "some place": ["a checkpoint"],
    "some time": ["Saturday"],
})


def test_walk_through_fills_in_order_and_skips_instrument():
    onto = parse_ontology(LIFE_DIE)
    trace = []
    events = extract_events(GOLD_DIE, onto, BAGHDAD, [(1, 6), (6, 17)], trace=trace)
    assert len(events) == 1
    ev = events[0]
    assert ev.trigger == (8, 9)
    assert ev.arguments == {"agent": [(6, 8)], "victim": [(9, 11)], "place": [(12, 14)], "time": [(15, 16)]}
    assert [s["role"] for s in trace] == ["agent", "victim", "instrument", "place", "time"]
    assert [" ".join(s["statement"]) for s in trace] == [
        "someone killed someone else with something in some place at some time",
        "coalition forces killed someone else with something in some place at some time",
        "coalition forces killed a man with something in some place at some time",
        "coalition forces killed a man with something in some place at some time",
        "coalition forces killed a man with something in a checkpoint at some time",
    ]
    assert trace[2]["spans"] == []


def test_null_model_extracts_nothing_and_leaves_statement():
    stmt = parse_statement(LIFE_DIE)
    trace = []
    args = extract_args(ScriptedModel({}), stmt, BAGHDAD, trace=trace)
    assert args == {}
    assert all(s["statement"] == list(stmt.tokens) for s in trace)
    assert extract_events(ScriptedModel({}), Ontology([stmt]), BAGHDAD) == []


def test_two_spans_shift_later_focus():
    stmt = parse_statement("T :: [a|p q] v [b|r] w [c|s]")
    model = ScriptedModel({"p q": ["one", "three four"], "r": ["five"]})
    trace = []
    args = extract_args(model, stmt, "one two three four five".split(), trace=trace)
    assert args == {"a": [(1, 2), (3, 5)], "b": [(5, 6)]}
    assert [s["focus"] for s in trace] == [[1, 2], [6], [8]]
    assert trace[2]["statement"] == ["one", "and", "three", "four", "v", "five", "w", "s"]


def test_explicit_role_order():
    stmt = parse_statement(LIFE_DIE)
    trace = []
    extract_args(GOLD_DIE, stmt, BAGHDAD, order=["time", "agent", "victim", "instrument", "place"], trace=trace)
    assert [s["role"] for s in trace] == ["time", "agent", "victim", "instrument", "place"]


def test_two_triggers_two_independent_passes():
    onto = parse_ontology(LIFE_DIE)
    text = "rebels killed Kim and soldiers killed Pat .".split()

    class TwoTriggers(ScriptedModel):
        def get_args(self, statement, focus, text, trigger_span=None, sentences=None):
            if trigger_span is None:
                self.calls.append(("triggers",))
                return [(2, 3), (6, 7)]
            self.calls.append((tuple(statement), trigger_span))
            return [(1, 2)] if trigger_span == (2, 3) else [(5, 6)]

    model = TwoTriggers({})
    events = extract_events(model, onto, text)
    assert [ev.trigger for ev in events] == [(2, 3), (6, 7)]
    assert events[0].arguments != events[1].arguments
    anchors = [c[1] for c in model.calls if c[0] != "triggers"]
    assert anchors == [(2, 3)] * 5 + [(6, 7)] * 5


def test_anchoring_changes_encoder_input_only():
    stmt = parse_statement(LIFE_DIE)
    a, b = anchor_trigger(stmt, (4, 5)), anchor_trigger(stmt, (7, 8))
    assert a.statement.tokens == b.statement.tokens == stmt.tokens
    vocab, config = Vocabulary(list(stmt.tokens) + BAGHDAD), EncoderConfig()
    ids_a = pack_input(vocab, EncoderInput(stmt.tokens, tuple(BAGHDAD), a.trigger_span), config).ids
    ids_b = pack_input(vocab, EncoderInput(stmt.tokens, tuple(BAGHDAD), b.trigger_span), config).ids
    assert ids_a != ids_b
    with pytest.raises(ValueError):
        anchor_trigger(stmt, (16, 18), text_length=16)


def test_identify_triggers_focuses_on_non_placeholder_tokens():
    stmt = parse_statement(LIFE_DIE)
    model = ScriptedModel({"killed with in at": ["killed"]})
    assert identify_triggers(model, stmt, BAGHDAD) == [(8, 9)]
    assert model.calls[0][1] == [2, 5, 7, 10]
    assert model.calls[0][3] is None


def test_two_event_types_and_empty_ontology():
    onto = parse_ontology(LIFE_DIE + "\nLife:Marry :: [person|some people] married in [place|some location]")
    text = "Kim and Pat married . rebels killed a man .".split()
    model = ScriptedModel({
        "killed with in at": ["killed"], "married in": ["married"],
        "some people": ["Kim", "Pat"], "someone": ["rebels"], "someone else": ["a man"],
    })
    doc = extract_document(model, onto, Document("d", text, [], [(1, 6), (6, 11)]))
    assert [(ev.event_type, ev.trigger) for ev in doc.events] == [("Life:Die", (7, 8)), ("Life:Marry", (4, 5))]
    assert doc.events[1].arguments == {"person": [(1, 2), (3, 4)]}
    assert extract_events(model, Ontology(), text) == []


def test_whole_document_mode_passes_sentence_bounds():
    onto = parse_ontology(LIFE_DIE)
    model = ScriptedModel({"killed with in at": ["killed"]})
    extract_events(model, onto, BAGHDAD, [(1, 6), (6, 17)], per_sentence=False)
    assert len(model.calls[0][2]) == len(BAGHDAD)


def test_model_failure_is_logged_not_raised(caplog):
    class Broken:
        def get_args(self, *a, **k):
            raise RuntimeError("boom")

    with caplog.at_level(logging.ERROR, logger="bleached.engine"):
        assert extract_events(Broken(), parse_ontology(LIFE_DIE), BAGHDAD) == []
    assert "trigger identification failed" in caplog.text


def test_each_role_visited_once():
    onto = parse_ontology(LIFE_DIE)
    trace = []
    model = ScriptedModel(dict(GOLD_DIE.answers, **{"killed with in at": ["killed", "Saturday"]}))
    extract_events(model, onto, BAGHDAD, trace=trace)
    roles = [s["role"] for s in trace]
    assert roles == ["agent", "victim", "instrument", "place", "time"] * 2
