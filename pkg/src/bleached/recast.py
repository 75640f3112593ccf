"""Recasting extractive QA questions as cloze statements.

The maximal constituent carrying a wh- tag becomes the single placeholder.
Questions with zero or several maximal wh- constituents are discarded.
"""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import crf
from .ontology import BleachedStatement, RefinementState, RoleSlot, detokenize, render_statement
from .training import ARGUMENT_KIND, TrainingExample

log = logging.getLogger(__name__)

WH_TAGS = frozenset({"WHADJP", "WHADVP", "WHNP", "WHPP", "WDT", "WP", "WP$", "WRB"})

ANSWER_ROLE = "answer"

NO_WH = "no_wh_phrase"
MULTI_WH = "multiple_wh_phrases"
TOKEN_MISMATCH = "parse_token_mismatch"
BAD_PARSE = "malformed_parse"
BAD_RECORD = "malformed_record"


class TreeError(ValueError):
    pass


class AmbiguousWhPhrase(ValueError):
    def __init__(self, intervals):
        self.intervals = intervals
        super().__init__(f"{len(intervals)} maximal wh- phrases")


@dataclass
class Tree:
    label: str
    children: list["Tree"] = field(default_factory=list)
    word: str | None = None
    start: int = 0  # 1-based, half-open with end
    end: int = 0

    def leaves(self) -> list[str]:
        if self.word is not None:
            return [self.word]
        return [w for c in self.children for w in c.leaves()]

    def subtrees(self) -> Iterator["Tree"]:
        yield self
        for c in self.children:
            yield from c.subtrees()


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_tree(text: str) -> Tree:
    """Read one Penn-style bracketed tree, e.g. ``(S (NP (NN x)) (. ?))``.

    A bare outer wrapper ``( (S ...) )`` is accepted.
    """
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise TreeError("empty parse")
    pos = 0

    def node() -> Tree:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != "(":
            raise TreeError(f"expected '(' at token {pos}")
        pos += 1
        label = ""
        if pos < len(tokens) and tokens[pos] not in "()":
            label = tokens[pos]
            pos += 1
        children: list[Tree] = []
        word = None
        while pos < len(tokens) and tokens[pos] != ")":
            if tokens[pos] == "(":
                children.append(node())
            else:
                if word is not None or children:
                    raise TreeError(f"unexpected token {tokens[pos]!r}")
                word = tokens[pos]
                pos += 1
        if pos >= len(tokens):
            raise TreeError("unbalanced brackets: missing ')'")
        pos += 1
        if word is not None and children:
            raise TreeError("node mixes a word and children")
        if word is None and not children:
            raise TreeError(f"empty constituent {label!r}")
        return Tree(label, children, word)

    root = node()
    if pos != len(tokens):
        raise TreeError("unbalanced brackets: trailing material")
    if not root.label and len(root.children) == 1:
        root = root.children[0]
    _number(root, 1)
    return root


def _number(tree: Tree, start: int) -> int:
    tree.start = start
    if tree.word is not None:
        tree.end = start + 1
    else:
        pos = start
        for c in tree.children:
            pos = _number(c, pos)
        tree.end = pos
    return tree.end


def maximal_wh_nodes(tree: Tree) -> list[Tree]:
    found: list[Tree] = []

    def walk(t: Tree):
        if t.label in WH_TAGS:
            found.append(t)
            return
        for c in t.children:
            walk(c)

    walk(tree)
    return found


def extract_wh_phrase(parse: str | Tree) -> tuple[int, int] | None:
    """Yield interval of the maximal wh- constituent, or None if there is none.

    Raises :class:`AmbiguousWhPhrase` if several maximal constituents exist.
    """
    tree = parse_tree(parse) if isinstance(parse, str) else parse
    nodes = maximal_wh_nodes(tree)
    if not nodes:
        return None
    if len(nodes) > 1:
        raise AmbiguousWhPhrase([(n.start, n.end) for n in nodes])
    return (nodes[0].start, nodes[0].end)


@dataclass
class QaExample:
    qid: str
    question_tokens: list[str]
    parse: str
    context_tokens: list[str]
    answers: list[tuple[int, int]]

    @classmethod
    def from_json(cls, obj: dict) -> "QaExample":
        answers = [tuple(a) for a in obj.get("answers", [])]
        ex = cls(str(obj["id"]), list(obj["question_tokens"]), str(obj["parse"]),
                 list(obj["context_tokens"]), answers)
        m = len(ex.context_tokens)
        for s, e in answers:
            if not (1 <= s < e <= m + 1):
                raise ValueError(f"answer span {[s, e]} outside context")
        return ex


@dataclass
class RecastExample:
    qid: str
    statement: list[str]
    placeholder: tuple[int, ...]
    context: list[str]
    tags: list[int]
    whole_question: bool = False

    def as_statement(self) -> BleachedStatement:
        return BleachedStatement(self.qid, tuple(self.statement), (RoleSlot(ANSWER_ROLE, self.placeholder),))

    def render(self) -> str:
        """The statement with the placeholder replaced by the gold answer spans."""
        state = RefinementState(self.as_statement(), self.context)
        state.fill(ANSWER_ROLE, crf.tags_to_spans(self.tags))
        return detokenize(render_statement(state))

    def to_training(self) -> TrainingExample:
        return TrainingExample(list(self.statement), list(self.placeholder), list(self.context),
                               list(self.tags), ARGUMENT_KIND)


class Discard(Exception):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


def recast(example: QaExample) -> RecastExample:
    """Turn one QA example into a cloze statement; raises :class:`Discard`."""
    try:
        tree = parse_tree(example.parse)
    except TreeError as exc:
        raise Discard(BAD_PARSE, str(exc)) from None
    if tree.leaves() != list(example.question_tokens):
        raise Discard(TOKEN_MISMATCH, f"{tree.leaves()} vs {example.question_tokens}")
    try:
        interval = extract_wh_phrase(tree)
    except AmbiguousWhPhrase as exc:
        raise Discard(MULTI_WH, str(exc.intervals)) from None
    if interval is None:
        raise Discard(NO_WH)
    start, end = interval
    content = [t for t in example.question_tokens if t not in {"?", ".", "!"}]
    whole = end - start >= len(content)
    # overlapping gold answers keep the first span only
    spans, taken = [], set()
    for s, e in sorted(set(example.answers)):
        if taken.isdisjoint(range(s, e)):
            spans.append((s, e))
            taken.update(range(s, e))
    return RecastExample(
        example.qid,
        list(example.question_tokens),
        tuple(range(start, end)),
        list(example.context_tokens),
        crf.spans_to_tags(spans, len(example.context_tokens)),
        whole,
    )


@dataclass
class RecastLog:
    kept: int = 0
    discarded: Counter = field(default_factory=Counter)
    whole_question: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.kept + sum(self.discarded.values())

    def to_json(self) -> dict:
        return {
            "input": self.total,
            "kept": self.kept,
            "discarded": sum(self.discarded.values()),
            "reasons": dict(sorted(self.discarded.items())),
            "whole_question_placeholders": self.whole_question,
        }


def recast_stream(lines: Iterable[str], summary: RecastLog) -> Iterator[RecastExample]:
    """Lazily recast JSON lines in input order, tallying discards into ``summary``."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            qa = QaExample.from_json(json.loads(line))
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("line %d: %s", lineno, exc)
            summary.discarded[BAD_RECORD] += 1
            continue
        try:
            out = recast(qa)
        except Discard as exc:
            log.debug("line %d (%s) discarded: %s", lineno, qa.qid, exc)
            summary.discarded[exc.reason] += 1
            continue
        summary.kept += 1
        if out.whole_question:
            summary.whole_question.append(out.qid)
        yield out


def recast_corpus(lines: Iterable[str]) -> tuple[list[RecastExample], RecastLog]:
    summary = RecastLog()
    kept = list(recast_stream(lines, summary))
    return kept, summary
