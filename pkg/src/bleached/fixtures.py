"""Synthetic fixtures bundled with the package.

``python -m bleached.fixtures`` regenerates the files under ``bleached/data``.
"""
from __future__ import annotations

import json
import random
from importlib import resources
from pathlib import Path

from .corpus import Document, EventRecord, read_documents, write_documents
from .ontology import Ontology, parse_ontology
from .training import TrainConfig

ONTOLOGY_TEXT = """\
# Synthetic ontology: ten event types, one bleached statement each.
Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]
Life:Marry :: [person|some people] married in [place|some location] at [time|some time]
Life:Be-Born :: [person|some person] was born in [place|some location] at [time|some time]
Conflict:Attack :: [attacker|someone] attacked [target|something] in [place|some place]
Movement:Transport :: [artifact|someone] traveled to [destination|some destination] from [origin|some origin]
Transaction:Transfer-Ownership :: [buyer|someone] bought [artifact|something] from [seller|someone]
Personnel:Start-Position :: [person|someone] was hired by [entity|some organization]
Justice:Arrest-Jail :: [agent|someone] arrested [person|someone] in [place|some place]
Contact:Meet :: [entity|some people] met in [place|some place] at [time|some time]
Business:Start-Org :: [agent|someone] founded [org|some organization] in [place|some place]
"""

PEOPLE = ["Kim", "Pat", "John Smith", "Maria Lopez", "the mayor", "a soldier", "Ali Hassan",
          "Chen Wei", "the governor", "Anna", "the doctor", "a farmer", "Omar", "Lena Berg"]
PLACES = ["Hawaii", "Paris", "a checkpoint", "the capital", "New York", "Cairo", "the village",
          "Berlin", "the border", "Lagos", "the harbor"]
TIMES = ["Saturday", "Monday", "Friday", "last week", "May 2003", "Tuesday", "dawn"]
ORGS = ["Acme Corp", "the ministry", "a startup", "Globex", "the bank", "the university"]
THINGS = ["a car", "the house", "a painting", "the farm", "a boat", "the factory"]
WEAPONS = ["a rifle", "a knife", "a bomb", "a pistol"]
GROUPS = ["rebels", "the army", "militants", "coalition forces", "the police", "gunmen"]
TARGETS = ["the embassy", "a convoy", "the base", "the station", "a market"]

FILLERS = [
    "The report was released later .",
    "Officials gave no further details .",
    "Witnesses described a tense scene .",
    "The news spread quickly .",
]

# (event type, template); {role} or {role+} (two spans joined by "and")
TEMPLATES = [
    ("Life:Die", "{agent} killed {victim} with {instrument} in {place} on {time} ."),
    ("Life:Die", "{agent} killed {victim} at {place} on {time} ."),
    ("Life:Die", "{victim} was killed by {agent} in {place} ."),
    ("Life:Marry", "{person+} married in {place} on {time} ."),
    ("Life:Marry", "{person+} married {time} ."),
    ("Life:Be-Born", "{person} was born in {place} on {time} ."),
    ("Life:Be-Born", "{person} was born in {place} ."),
    ("Conflict:Attack", "{attacker} attacked {target} in {place} ."),
    ("Conflict:Attack", "{attacker} attacked {target} ."),
    ("Movement:Transport", "{artifact} traveled to {destination} from {origin} ."),
    ("Movement:Transport", "{artifact} traveled from {origin} to {destination} ."),
    ("Transaction:Transfer-Ownership", "{buyer} bought {artifact} from {seller} ."),
    ("Transaction:Transfer-Ownership", "{buyer} bought {artifact} ."),
    ("Personnel:Start-Position", "{person} was hired by {entity} ."),
    ("Personnel:Start-Position", "{entity} hired {person} ."),
    ("Justice:Arrest-Jail", "{agent} arrested {person} in {place} ."),
    ("Justice:Arrest-Jail", "{person} was arrested by {agent} ."),
    ("Contact:Meet", "{entity+} met in {place} on {time} ."),
    ("Contact:Meet", "{entity+} met in {place} ."),
    ("Business:Start-Org", "{agent} founded {org} in {place} ."),
    ("Business:Start-Org", "{org} was founded by {agent} ."),
]

TRIGGER_WORDS = {
    "Life:Die": "killed", "Life:Marry": "married", "Life:Be-Born": "born",
    "Conflict:Attack": "attacked", "Movement:Transport": "traveled",
    "Transaction:Transfer-Ownership": "bought", "Personnel:Start-Position": "hired",
    "Justice:Arrest-Jail": "arrested", "Contact:Meet": "met", "Business:Start-Org": "founded",
}

POOLS = {
    "agent": PEOPLE + GROUPS, "victim": PEOPLE, "instrument": WEAPONS, "place": PLACES,
    "time": TIMES, "person": PEOPLE, "attacker": GROUPS, "target": TARGETS,
    "artifact": PEOPLE, "destination": PLACES, "origin": PLACES, "buyer": PEOPLE,
    "seller": PEOPLE + ORGS, "entity": ORGS, "org": ORGS,
}
ROLE_POOL_OVERRIDES = {
    ("Transaction:Transfer-Ownership", "artifact"): THINGS,
    ("Contact:Meet", "entity"): PEOPLE,
    ("Life:Die", "agent"): GROUPS,
    ("Justice:Arrest-Jail", "agent"): ["the police", "soldiers", "agents", "the army"],
}

# sentences whose fillers are fixed, used for walk-through tests
FIXED = [
    ("Life:Die", "{agent} killed {victim} at {place} on {time} .",
     {"agent": ["coalition forces"], "victim": ["a man"], "place": ["a checkpoint"], "time": ["Saturday"]},
     "Fighting continued in Baghdad ."),
    ("Life:Marry", "{person+} married {time} .", {"person": ["Kim", "Pat"], "time": ["Sunday"]}, None),
    ("Life:Be-Born", "{person} was born in {place} .", {"person": ["Barack Obama"], "place": ["Hawaii"]}, None),
]


def load_fixture_ontology() -> Ontology:
    return parse_ontology(ONTOLOGY_TEXT)


def _render(event_type: str, template: str, fills: dict[str, list[str]], offset: int):
    """Realize a template; returns tokens and an EventRecord with spans shifted by ``offset``."""
    tokens: list[str] = []
    args: dict[str, list[tuple[int, int]]] = {}
    trigger = None
    for piece in template.split():
        if piece.startswith("{"):
            role = piece.strip("{}+")
            for k, phrase in enumerate(fills[role]):
                if k:
                    tokens.append("and")
                words = phrase.split()
                start = offset + len(tokens) + 1
                tokens.extend(words)
                args.setdefault(role, []).append((start, start + len(words)))
        else:
            if piece == TRIGGER_WORDS[event_type] and trigger is None:
                trigger = (offset + len(tokens) + 1, offset + len(tokens) + 2)
            tokens.append(piece)
    assert trigger is not None, template
    return tokens, EventRecord(event_type, trigger, args)


def _sample_fills(rng: random.Random, event_type: str, template: str) -> dict[str, list[str]]:
    fills: dict[str, list[str]] = {}
    used: set[str] = set()
    for piece in template.split():
        if not piece.startswith("{"):
            continue
        role = piece.strip("{}+")
        pool = ROLE_POOL_OVERRIDES.get((event_type, role), POOLS[role])
        count = 2 if piece.endswith("+}") else 1
        choice = [p for p in rng.sample(pool, len(pool)) if p not in used][:count]
        used.update(choice)
        fills[role] = choice
    return fills


def generate_corpus(n_docs: int = 50, seed: int = 13) -> list[Document]:
    """Templated documents of one or two sentences, each sentence holding at most one event."""
    rng = random.Random(seed)
    docs = []
    types = [t for t, _ in TEMPLATES]
    type_order = list(dict.fromkeys(types))
    for i in range(n_docs):
        sentences: list[list[str]] = []
        events: list[EventRecord] = []
        offset = 0

        def add(tokens, event=None):
            nonlocal offset
            sentences.append(tokens)
            if event is not None:
                events.append(event)
            offset += len(tokens)

        if i < len(FIXED):
            etype, template, fills, before = FIXED[i]
            if before:
                add(before.split())
            add(*_render(etype, template, fills, offset))
        else:
            etype = type_order[i % len(type_order)]
            template = rng.choice([t for e, t in TEMPLATES if e == etype])
            if rng.random() < 0.2:
                add(rng.choice(FILLERS).split())
            add(*_render(etype, template, _sample_fills(rng, etype, template), offset))
            if rng.random() < 0.3:
                other = rng.choice([t for t in type_order if t != etype])
                template = rng.choice([t for e, t in TEMPLATES if e == other])
                add(*_render(other, template, _sample_fills(rng, other, template), offset))
        tokens = [t for s in sentences for t in s]
        bounds, pos = [], 1
        for s in sentences:
            bounds.append((pos, pos + len(s)))
            pos += len(s)
        docs.append(Document(f"syn-{i:03d}", tokens, events, bounds))
    return docs


# --- parsed QA questions for recasting ---------------------------------------------------

QA_ITEMS = [
    ("q01", "What form of oxygen is composed of 3 oxygen atoms ?",
     "(SBARQ (WHNP (WHNP (WDT What) (NN form)) (PP (IN of) (NP (NN oxygen)))) (SQ (VBZ is) (VP (VBN composed) (PP (IN of) (NP (CD 3) (NN oxygen) (NNS atoms))))) (. ?))",
     "The molecule ozone is composed of three oxygen atoms .", [[3, 4]]),
    ("q02", "Who wrote Hamlet ?",
     "(SBARQ (WHNP (WP Who)) (SQ (VP (VBD wrote) (NP (NNP Hamlet)))) (. ?))",
     "Hamlet was written by William Shakespeare around 1600 .", [[5, 7]]),
    ("q03", "Where is the Eiffel Tower ?",
     "(SBARQ (WHADVP (WRB Where)) (SQ (VBZ is) (NP (DT the) (NNP Eiffel) (NNP Tower))) (. ?))",
     "The Eiffel Tower stands in Paris , France .", [[6, 7]]),
    ("q04", "How many moons does Mars have ?",
     "(SBARQ (WHNP (WHADJP (WRB How) (JJ many)) (NNS moons)) (SQ (VBZ does) (NP (NNP Mars)) (VP (VB have))) (. ?))",
     "Mars has two small moons , Phobos and Deimos .", [[3, 4]]),
    ("q05", "When did the war end ?",
     "(SBARQ (WHADVP (WRB When)) (SQ (VBD did) (NP (DT the) (NN war)) (VP (VB end))) (. ?))",
     "The war ended in 1945 after six years .", [[5, 6]]),
    ("q06", "Which river flows through Cairo ?",
     "(SBARQ (WHNP (WDT Which) (NN river)) (SQ (VP (VBZ flows) (PP (IN through) (NP (NNP Cairo))))) (. ?))",
     "The Nile flows through Cairo .", [[1, 3]]),
    ("q07", "Whose portrait hangs in the Louvre ?",
     "(SBARQ (WHNP (WP$ Whose) (NN portrait)) (SQ (VP (VBZ hangs) (PP (IN in) (NP (DT the) (NNP Louvre))))) (. ?))",
     "The portrait of Lisa Gherardini hangs in the Louvre .", [[4, 6]]),
    ("q08", "By whose authority was the law passed ?",
     "(SBARQ (WHPP (IN By) (WHNP (WP$ whose) (NN authority))) (SQ (VBD was) (NP (DT the) (NN law)) (VP (VBN passed))) (. ?))",
     "The law was passed by the authority of the senate .", [[9, 11]]),
    ("q09", "Why did the bridge collapse ?",
     "(SBARQ (WHADVP (WRB Why)) (SQ (VBD did) (NP (DT the) (NN bridge)) (VP (VB collapse))) (. ?))",
     "The bridge collapsed because of heavy flooding .", [[6, 8]]),
    ("q10", "Who gave what to whom ?",
     "(SBARQ (WHNP (WP Who)) (SQ (VP (VBD gave) (WHNP (WP what)) (PP (TO to) (WHNP (WP whom))))) (. ?))",
     "Someone gave something to someone .", []),
    ("q11", "What did who buy ?",
     "(SBARQ (WHNP (WP What)) (SQ (VBD did) (WHNP (WP who)) (VP (VB buy))) (. ?))",
     "A man bought bread .", []),
    ("q12", "The sky is blue .",
     "(S (NP (DT The) (NN sky)) (VP (VBZ is) (ADJP (JJ blue))) (. .))",
     "The sky is blue on clear days .", []),
    ("q13", "Name the largest ocean .",
     "(S (VP (VB Name) (NP (DT the) (JJS largest) (NN ocean))) (. .))",
     "The Pacific is the largest ocean .", [[1, 3]]),
    ("q14", "What is the capital of Atlantis ?",
     "(SBARQ (WHNP (WP What)) (SQ (VBZ is) (NP (NP (DT the) (NN capital)) (PP (IN of) (NP (NNP Atlantis))))) (. ?))",
     "Atlantis is a legendary island .", []),
    ("q15", "Who founded Rome ?",
     "(SBARQ (WHNP (WP Who)) (SQ (VP (VBD founded) (NP (NNP Rome)))) (. ?))",
     "Rome was founded by Romulus according to legend .", [[5, 6]]),
    ("q16", "How tall is Everest ?",
     "(SBARQ (WHADJP (WRB How) (JJ tall)) (SQ (VBZ is) (NP (NNP Everest))) (. ?))",
     "Everest is 8,849 metres tall .", [[3, 5]]),
    ("q17", "What ?",
     "(SBARQ (WHNP (WP What)) (. ?))",
     "Nothing was said .", []),
    ("q18", "Where and when did it happen ?",
     "(SBARQ (WHADVP (WHADVP (WRB Where)) (CC and) (WHADVP (WRB when))) (SQ (VBD did) (NP (PRP it)) (VP (VB happen))) (. ?))",
     "It happened in Rome in 44 BC .", [[4, 5], [6, 8]]),
    ("q19", "Which team won and who scored ?",
     "(SBARQ (SBARQ (WHNP (WDT Which) (NN team)) (SQ (VP (VBD won)))) (CC and) (SBARQ (WHNP (WP who)) (SQ (VP (VBD scored)))) (. ?))",
     "The Lions won and Ade scored .", []),
    ("q20", "The team won .",
     "(S (NP (DT The) (NN team)) (VP (VBD won)) (. .))",
     "The team won the final .", []),
    ("q21", "In which year did the ship sink ?",
     "(SBARQ (WHPP (IN In) (WHNP (WDT which) (NN year))) (SQ (VBD did) (NP (DT the) (NN ship)) (VP (VB sink))) (. ?))",
     "The ship sank in 1912 on its first voyage .", [[5, 6]]),
    ("q22", "What color is the sun ?",
     "(SBARQ (WHNP (WDT What) (NN color)) (SQ (VBZ is) (NP (DT the) (NN sun))) (. ?))",
     "The sun appears yellow from Earth .", [[4, 5]]),
    ("q23", "Who discovered penicillin ?",
     "(SBARQ (WHNP (WP Who)) (SQ (VP (VBD discovered) (NP (NN penicillin)))) (. ?))",
     "Alexander Fleming discovered penicillin in 1928 .", [[1, 3]]),
    ("q24", "Who won ?",
     "(SBARQ (WHNP (WP Who)) (SQ (VP (VBD won)))",
     "Nobody won .", []),
    ("q25", "Who lost ?",
     "(SBARQ (WHNP (WP Who)) (SQ (VP (VBD won))) (. ?))",
     "Everybody lost .", []),
]


def qa_records() -> list[dict]:
    return [
        {"id": qid, "question_tokens": q.split(), "parse": parse,
         "context_tokens": ctx.split(), "answers": answers}
        for qid, q, parse, ctx, answers in QA_ITEMS
    ]


# --- bundled files -------------------------------------------------------------------------

def data_path(name: str) -> Path:
    return Path(str(resources.files("bleached") / "data" / name))


def fixture_corpus() -> list[Document]:
    return read_documents(data_path("synthetic_corpus.jsonl"))


# The mini encoder starts from random weights, so it needs a far larger step
# than fine-tuning a pretrained one; one example per step gives it enough updates in 8 epochs.
FIXTURE_TRAIN = TrainConfig(lr=1e-3, epochs=8, clip_norm=1.0, alpha=30.0, batch_size=1,
                            seed=0, schedule="linear", warmup=0.1)


def fixture_train_config() -> TrainConfig:
    return TrainConfig.load(data_path("fixture_train.json"))


def write_bundled(directory: Path | None = None) -> None:
    directory = Path(directory) if directory else data_path("")
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "synthetic_ontology.txt").write_text(ONTOLOGY_TEXT, encoding="utf-8")
    write_documents(directory / "synthetic_corpus.jsonl", generate_corpus())
    (directory / "fixture_train.json").write_text(
        json.dumps(FIXTURE_TRAIN.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(directory / "qa_fixture.jsonl", "w", encoding="utf-8") as fh:
        for rec in qa_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


if __name__ == "__main__":
    write_bundled()
