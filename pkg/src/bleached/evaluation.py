"""Exact-match trigger and argument scoring, plus few- and zero-shot protocols."""
from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import CorpusError, Document, EventRecord
from .engine import extract_document
from .ontology import Ontology

log = logging.getLogger(__name__)

METRICS = ("trigger_id", "trigger_cls", "arg_id", "arg_cls")
METRIC_TITLES = {
    "trigger_id": "Trigger Id.",
    "trigger_cls": "Trigger Cls.",
    "arg_id": "Argument Id.",
    "arg_cls": "Argument Cls.",
}


def prf(matched: int, predicted: int, gold: int) -> tuple[float, float, float]:
    """Precision, recall, F1; a zero denominator gives 0 rather than NaN."""
    p = matched / predicted if predicted else 0.0
    r = matched / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class MetricScore:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    matched: int = 0
    predicted: int = 0
    gold: int = 0

    @classmethod
    def from_counts(cls, matched: int, predicted: int, gold: int) -> "MetricScore":
        return cls(*prf(matched, predicted, gold), matched, predicted, gold)

    def to_json(self) -> dict:
        return dict(vars(self))


@dataclass
class ScoreReport:
    metrics: dict[str, MetricScore] = field(default_factory=lambda: {k: MetricScore() for k in METRICS})

    def __getitem__(self, name: str) -> MetricScore:
        return self.metrics[name]

    def to_json(self) -> dict:
        return {k: self.metrics[k].to_json() for k in METRICS}

    @classmethod
    def from_f1(cls, **f1s: float) -> "ScoreReport":
        """Report carrying only F1 values, e.g. for averaging published numbers."""
        report = cls()
        for name, value in f1s.items():
            report.metrics[name] = MetricScore(f1=value)
        return report


def event_tuples(doc_id: str, events: Iterable[EventRecord]) -> dict[str, Counter]:
    out = {k: Counter() for k in METRICS}
    for ev in events:
        trig = tuple(ev.trigger)
        out["trigger_id"][(doc_id, trig)] += 1
        out["trigger_cls"][(doc_id, trig, ev.event_type)] += 1
        for role, spans in ev.arguments.items():
            for span in spans:
                span = tuple(span)
                out["arg_id"][(doc_id, span, ev.event_type)] += 1
                out["arg_cls"][(doc_id, span, ev.event_type, role)] += 1
    return out


def _check_bounds(doc: Document) -> None:
    m = len(doc.tokens)
    for ev in doc.events:
        for s, e in ev.spans():
            if not (1 <= s < e <= m + 1):
                raise CorpusError(f"{doc.doc_id}: span {[s, e]} outside {m} tokens")


def score(
    predictions: Sequence[Document],
    gold: Sequence[Document],
    event_types: Iterable[str] | None = None,
) -> ScoreReport:
    """Micro P/R/F1 for the four exact-match metrics.

    Each argument span is its own item. Identical tuples are matched one to
    one, so duplicates cannot be counted twice.
    """
    pred_by_id = {d.doc_id: d for d in predictions}
    gold_by_id = {d.doc_id: d for d in gold}
    if set(pred_by_id) != set(gold_by_id):
        missing = sorted(set(gold_by_id) ^ set(pred_by_id))
        raise CorpusError(f"prediction and gold document ids differ: {missing[:5]}")
    keep = set(event_types) if event_types is not None else None
    totals = {k: [0, 0, 0] for k in METRICS}
    for doc_id, g in gold_by_id.items():
        p = pred_by_id[doc_id]
        _check_bounds(g)
        _check_bounds(p)
        g_events = [e for e in g.events if keep is None or e.event_type in keep]
        p_events = [e for e in p.events if keep is None or e.event_type in keep]
        gt, pt = event_tuples(doc_id, g_events), event_tuples(doc_id, p_events)
        for k in METRICS:
            totals[k][0] += sum((gt[k] & pt[k]).values())
            totals[k][1] += sum(pt[k].values())
            totals[k][2] += sum(gt[k].values())
    return ScoreReport({k: MetricScore.from_counts(*totals[k]) for k in METRICS})


def macro_average(reports: Sequence[ScoreReport]) -> ScoreReport:
    """Unweighted mean of P, R and F1 per metric; counts are summed."""
    if not reports:
        raise ValueError("need at least one report")
    n = len(reports)
    out = ScoreReport()
    for k in METRICS:
        scores = [r[k] for r in reports]
        out.metrics[k] = MetricScore(
            sum(s.precision for s in scores) / n,
            sum(s.recall for s in scores) / n,
            sum(s.f1 for s in scores) / n,
            sum(s.matched for s in scores),
            sum(s.predicted for s in scores),
            sum(s.gold for s in scores),
        )
    return out


def format_table(rows: Mapping[str, ScoreReport], percent: bool = True) -> str:
    """Aligned text table grouped as trigger/argument x identification/classification."""
    scale = 100.0 if percent else 1.0
    label_w = max([5] + [len(k) for k in rows])
    col = 7
    head1 = " " * label_w + " | " + " | ".join(f"{METRIC_TITLES[k]:^{col * 3}}" for k in METRICS)
    head2 = f"{'':<{label_w}} | " + " | ".join("".join(f"{h:>{col}}" for h in ("P", "R", "F1")) for _ in METRICS)
    lines = [head1, head2, "-" * len(head2)]
    for name, rep in rows.items():
        cells = " | ".join(
            "".join(f"{v * scale:>{col}.1f}" for v in (rep[k].precision, rep[k].recall, rep[k].f1))
            for k in METRICS
        )
        lines.append(f"{name:<{label_w}} | {cells}")
    return "\n".join(lines)


def write_csv(path, rows: Mapping[str, ScoreReport], key: str = "name") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([key] + [f"{m}_{s}" for m in METRICS for s in ("p", "r", "f1")])
        for name, rep in rows.items():
            w.writerow([name] + [f"{getattr(rep[m], a):.6f}" for m in METRICS
                                 for a in ("precision", "recall", "f1")])


# --- protocols -------------------------------------------------------------------------

TrainFn = Callable[[Ontology, Sequence[Document]], object]


def drop_event_type(docs: Sequence[Document], event_type: str) -> list[Document]:
    return [Document(d.doc_id, d.tokens, [e for e in d.events if e.event_type != event_type], d.sentences)
            for d in docs]


def keep_event_types(docs: Sequence[Document], event_types: Iterable[str]) -> list[Document]:
    keep = set(event_types)
    return [Document(d.doc_id, d.tokens, [e for e in d.events if e.event_type in keep], d.sentences)
            for d in docs]


def predict(model, ontology: Ontology, docs: Sequence[Document]) -> list[Document]:
    return [extract_document(model, ontology, d) for d in docs]


@dataclass
class ProtocolResult:
    reports: dict[str, ScoreReport]
    macro: ScoreReport

    def rows(self, macro_label: str = "macro") -> dict[str, ScoreReport]:
        return {**self.reports, macro_label: self.macro}


def zero_shot_run(
    held_out: str,
    corpus: Sequence[Document],
    ontology: Ontology,
    train_fn: TrainFn,
    eval_corpus: Sequence[Document],
) -> ScoreReport:
    """One run: train without ``held_out``, then extract it from its statement alone."""
    train_docs = drop_event_type(corpus, held_out)
    if any(e.event_type == held_out for d in train_docs for e in d.events):
        raise AssertionError(f"held-out type {held_out} leaked into training data")
    log.info("zero-shot run for %s", held_out)
    model = train_fn(ontology.without(held_out), train_docs)
    preds = predict(model, ontology.subset([held_out]), eval_corpus)
    return score(preds, keep_event_types(eval_corpus, [held_out]), [held_out])


def leave_one_out(
    corpus: Sequence[Document],
    ontology: Ontology,
    train_fn: TrainFn,
    eval_corpus: Sequence[Document] | None = None,
    map_fn: Callable = map,
) -> ProtocolResult:
    """Zero-shot protocol over every event type.

    Runs are independent; pass ``executor.map`` as ``map_fn`` to run them in
    parallel (``train_fn`` must then be picklable).
    """
    if len(ontology) < 2:
        raise ValueError("leave-one-out needs at least two event types")
    eval_corpus = list(eval_corpus if eval_corpus is not None else corpus)
    run = partial(zero_shot_run, corpus=list(corpus), ontology=ontology, train_fn=train_fn,
                  eval_corpus=eval_corpus)
    types = ontology.event_types
    reports = dict(zip(types, map_fn(run, types)))
    return ProtocolResult(reports, macro_average(list(reports.values())))


def few_shot_sweep(
    train_docs: Sequence[Document],
    test_docs: Sequence[Document],
    ontology: Ontology,
    train_fn: TrainFn,
    doc_counts: Sequence[int],
) -> dict[int, ScoreReport]:
    """Train on the first k documents for each k and score on the test set."""
    out = {}
    for k in doc_counts:
        model = train_fn(ontology, list(train_docs)[:k])
        out[k] = score(predict(model, ontology, test_docs), test_docs)
    return out
