import pytest
from hypothesis import given, strategies as st

from bleached.ontology import (
    Ontology,
    OntologyError,
    RefinementState,
    detokenize,
    parse_ontology,
    parse_statement,
    render_statement,
    serialize_ontology,
    trigger_index_set,
)

LIFE_DIE = ("Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] "
            "in [place|some place] at [time|some time]")
MARRY = "Life:Marry :: [person|some people] married in [place|some location] at [time|some time]"
BORN = "Life:Be-Born :: [person|some person] was born in [place|some location] at [time|some time]"


def slots(stmt):
    return {s.role: set(s.indices) for s in stmt.placeholders}


def test_life_die_dictionary():
    stmt = parse_statement(LIFE_DIE)
    assert slots(stmt) == {
        "agent": {1}, "victim": {3, 4}, "instrument": {6}, "place": {8, 9}, "time": {11, 12},
    }
    assert stmt.roles == ("agent", "victim", "instrument", "place", "time")
    assert " ".join(stmt.tokens) == "someone killed someone else with something in some place at some time"


def test_minimal_statement():
    stmt = parse_statement("T :: [a|x] y")
    assert stmt.tokens == ("x", "y")
    assert slots(stmt) == {"a": {1}}


def test_trigger_index_set():
    stmt = parse_statement(LIFE_DIE)
    idx = trigger_index_set(stmt)
    assert idx == (2, 5, 7, 10)
    assert [stmt.tokens[i - 1] for i in idx] == ["killed", "with", "in", "at"]
    assert trigger_index_set(parse_statement("T :: [a|x] y")) == (2,)


@pytest.mark.parametrize("line, message", [
    ("T :: [a|x] [a|z]", "duplicate role"),
    ("T :: [a|] y", "empty placeholder"),
    ("T :: [|x] y", "without a role"),
    ("T :: [trigger|x] y", "reserved"),
    ("T :: [a|x y", "unterminated"),
    ("T :: a|x] y", "outside placeholder"),
    ("T :: [a|x [b|y]] z", "inside placeholder"),
    ("no separator here", "EVENT_TYPE"),
])
def test_malformed_statements(line, message):
    with pytest.raises(OntologyError, match=message):
        parse_ontology(line)


def test_all_placeholders_rejected():
    with pytest.raises(OntologyError, match="no trigger tokens"):
        parse_ontology("T :: [a|x] [b|y z]")


def test_duplicate_event_type_has_line_number():
    with pytest.raises(OntologyError, match=r"line 3: duplicate event type 'T'"):
        parse_ontology("T :: [a|x] y\n# comment\nT :: [b|x] z\n")


def test_comments_blank_lines_and_escapes():
    onto = parse_ontology("# header\n\nT :: [a|x \\[1\\]] says \\| ok\n")
    stmt = onto["T"]
    assert stmt.tokens == ("x", "[1]", "says", "|", "ok")
    assert slots(stmt) == {"a": {1, 2}}


def test_round_trip_fixture():
    onto = parse_ontology("\n".join([LIFE_DIE, MARRY, BORN, "E :: [r|a \\| b] c \\[d\\]"]))
    assert parse_ontology(serialize_ontology(onto)) == onto


def test_ontology_lookup_and_subsets():
    onto = parse_ontology("\n".join([LIFE_DIE, MARRY]))
    assert onto.event_types == ["Life:Die", "Life:Marry"]
    assert "Life:Marry" in onto and "X" not in onto
    assert onto.without("Life:Die").event_types == ["Life:Marry"]
    assert onto.subset(["Life:Die"]).event_types == ["Life:Die"]
    assert len(Ontology()) == 0


def test_render_multi_span_with_and():
    stmt = parse_statement(MARRY)
    text = "Kim and Pat married Sunday".split()
    state = RefinementState(stmt, text)
    state.fill("person", [(3, 4), (1, 2)])
    assert " ".join(render_statement(state)) == "Kim and Pat married in some location at some time"
    assert state.index_set("place") == (6, 7)


def test_render_identity_and_single_span():
    stmt = parse_statement(BORN)
    text = "Barack Obama was born in Hawaii".split()
    state = RefinementState(stmt, text)
    assert render_statement(state) == list(stmt.tokens)
    state.fill("person", [(1, 3)])
    state.fill("place", [(6, 7)])
    assert " ".join(state.tokens) == "Barack Obama was born in Hawaii at some time"


def test_skip_keeps_statement_and_order_enforced():
    stmt = parse_statement(MARRY)
    state = RefinementState(stmt, ["x"])
    with pytest.raises(ValueError):
        state.fill("place", [])
    state.skip("person")
    assert state.tokens == list(stmt.tokens)
    assert state.next_role == "place"
    assert state.fills == {"person": None}


def test_index_remapping_after_two_span_fill():
    # 5-token statement: [a|p q] v [b|r] w [c|s]
    stmt = parse_statement("T :: [a|p q] v [b|r] w [c|s]")
    text = "one two three four five".split()
    state = RefinementState(stmt, text)
    state.fill("a", [(1, 2), (3, 5)])  # "one and three four": 2 tokens -> 4 tokens
    assert state.tokens == ["one", "and", "three", "four", "v", "r", "w", "s"]
    assert state.index_set("b") == (6,)
    assert state.index_set("c") == (8,)
    state.fill("b", [(5, 6)])
    assert state.index_set("c") == (8,)


def test_detokenize():
    assert detokenize(["ozone", "is", "composed", "?"]) == "ozone is composed?"


role_words = st.lists(st.sampled_from(["some", "one", "thing", "place"]), min_size=1, max_size=3)
plain_words = st.lists(st.sampled_from(["did", "at", "in", "with", "to"]), min_size=1, max_size=3)


@st.composite
def statement_lines(draw):
    pieces = []
    n_roles = draw(st.integers(1, 4))
    for k in range(n_roles):
        if draw(st.booleans()):
            pieces.extend(draw(plain_words))
        pieces.append(f"[r{k}|{' '.join(draw(role_words))}]")
    pieces.extend(draw(plain_words))
    return "E :: " + " ".join(pieces)


@given(statement_lines())
def test_properties_partition_contiguity_roundtrip(line):
    onto = parse_ontology(line)
    stmt = onto["E"]
    n = len(stmt.tokens)
    trig = set(trigger_index_set(stmt))
    covered = [set(s.indices) for s in stmt.placeholders]
    union = set().union(*covered)
    assert trig | union == set(range(1, n + 1))
    assert not trig & union
    for s in stmt.placeholders:
        assert list(s.indices) == list(range(s.start, s.end))
    assert sum(len(c) for c in covered) == len(union)
    assert parse_ontology(serialize_ontology(onto)) == onto
    assert render_statement(RefinementState(stmt, ["t"])) == list(stmt.tokens)
