"""Training data generation and the optimization loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from . import crf
from .corpus import CorpusError, Document
from .encoder import EncodedBatch, EncodedPair, Vocabulary
from .ontology import Ontology, RefinementState, Span, trigger_index_set
from .selector import EventModel, ModelConfig, Query, SpanSelector, focus_tensor, gold_tensor

log = logging.getLogger(__name__)

TRIGGER_KIND = "trigger"
ARGUMENT_KIND = "argument"
NEGATIVE_KIND = "negative-trigger"
KINDS = (TRIGGER_KIND, ARGUMENT_KIND, NEGATIVE_KIND)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingExample:
    statement: list[str]
    focus: list[int]
    text: list[str]
    tags: list[int]
    kind: str = ARGUMENT_KIND
    event_type: str | None = None
    role: str | None = None
    trigger_span: Span | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown example kind {self.kind!r}")
        if len(self.tags) != len(self.text):
            raise ValueError("tag count differs from text length")
        if not crf.is_valid_bio(self.tags):
            raise ValueError(f"gold tags are not valid BIO: {crf.tag_names(self.tags)}")
        if self.kind == NEGATIVE_KIND and any(self.tags):
            raise ValueError("negative examples must be all-O")

    @property
    def query(self) -> Query:
        return Query(tuple(self.statement), tuple(self.focus), tuple(self.text), self.trigger_span)

    def to_json(self) -> dict:
        return {
            "statement": self.statement,
            "focus": self.focus,
            "text": self.text,
            "tags": crf.tag_names(self.tags),
            "kind": self.kind,
            "event_type": self.event_type,
            "role": self.role,
            "trigger_span": list(self.trigger_span) if self.trigger_span else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingExample":
        trig = obj.get("trigger_span")
        return cls(
            list(obj["statement"]),
            [int(i) for i in obj["focus"]],
            list(obj["text"]),
            crf.tag_ids(obj["tags"]),
            obj.get("kind", ARGUMENT_KIND),
            obj.get("event_type"),
            obj.get("role"),
            tuple(trig) if trig else None,
        )


def read_examples(path) -> list[TrainingExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(TrainingExample.from_json(json.loads(line)))
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return out


def write_examples(path, examples: Iterable[TrainingExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


# --- example generation ---------------------------------------------------------


def _local(span: Span, start: int) -> Span:
    return (span[0] - start + 1, span[1] - start + 1)


def _event_contexts(doc: Document, ontology: Ontology):
    """Group gold events by the sentence containing their trigger."""
    groups: dict[Span, list] = {}
    for ev in doc.events:
        if ev.event_type not in ontology:
            raise CorpusError(f"{doc.doc_id}: event type {ev.event_type!r} not in ontology")
        groups.setdefault(doc.sentence_of(ev.trigger), []).append(ev)
    return groups


def generate_examples(ontology: Ontology, corpus: Sequence[Document]) -> list[TrainingExample]:
    """Teacher-forced trigger and argument examples for every gold event.

    Trigger examples are emitted once per (sentence, event type) and mark every
    trigger of that type in the sentence. Argument examples are anchored on
    their event's trigger and see all earlier roles filled with gold spans.
    """
    examples: list[TrainingExample] = []
    for doc in corpus:
        doc.validate()
        for (start, end), events in _event_contexts(doc, ontology).items():
            text = doc.tokens[start - 1 : end - 1]
            m = len(text)
            done_types: set[str] = set()
            for ev in events:
                stmt = ontology[ev.event_type]
                if ev.event_type not in done_types:
                    done_types.add(ev.event_type)
                    triggers = [_local(e.trigger, start) for e in events if e.event_type == ev.event_type]
                    examples.append(TrainingExample(
                        list(stmt.tokens), list(trigger_index_set(stmt)), list(text),
                        crf.spans_to_tags(set(triggers), m), TRIGGER_KIND, ev.event_type, None,
                    ))
                anchor = _local(ev.trigger, start)
                state = RefinementState(stmt, text)
                for role in stmt.roles:
                    gold = []
                    for span in ev.arguments.get(role, []):
                        if not (start <= span[0] and span[1] <= end):
                            log.warning("%s: %s argument %s outside trigger sentence, dropped",
                                        doc.doc_id, role, span)
                            continue
                        gold.append(_local(span, start))
                    gold.sort()
                    examples.append(TrainingExample(
                        state.tokens, list(state.index_set(role)), list(text),
                        crf.spans_to_tags(gold, m), ARGUMENT_KIND, ev.event_type, role, anchor,
                    ))
                    state.fill(role, gold)
    return examples


def negative_count(alpha: float, n_absent: int) -> int:
    if not 0 <= alpha <= 100:
        raise ValueError("alpha must lie in [0, 100]")
    return math.ceil(Fraction(alpha).limit_denominator(10**6) * n_absent / 100)


def sample_negatives(
    corpus: Sequence[Document], ontology: Ontology, alpha: float, rng: np.random.Generator
) -> list[TrainingExample]:
    """All-O trigger examples for event types absent from each event's sentence."""
    out: list[TrainingExample] = []
    if negative_count(alpha, 1) == 0:
        return out
    for doc in corpus:
        for (start, end), events in _event_contexts(doc, ontology).items():
            text = doc.tokens[start - 1 : end - 1]
            present = {ev.event_type for ev in events}
            absent = [t for t in ontology.event_types if t not in present]
            k = negative_count(alpha, len(absent))
            for _ in events:
                if not absent:
                    continue
                for idx in sorted(rng.choice(len(absent), size=k, replace=False)):
                    stmt = ontology[absent[idx]]
                    out.append(TrainingExample(
                        list(stmt.tokens), list(trigger_index_set(stmt)), list(text),
                        [crf.O] * len(text), NEGATIVE_KIND, stmt.event_type,
                    ))
    return out


# --- optimization -----------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 8
    clip_norm: float = 1.0
    alpha: float = 30.0
    batch_size: int = 8
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    schedule: str = "constant"
    warmup: float = 0.0
    max_docs: int | None = None

    def __post_init__(self):
        if not 0 <= self.alpha <= 100:
            raise ValueError("alpha must lie in [0, 100]")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.schedule not in ("constant", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 0 <= self.warmup < 1:
            raise ValueError("warmup is a fraction of total steps in [0, 1)")
        self.betas = tuple(self.betas)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


PRETRAIN = TrainConfig(lr=3e-5, epochs=3)
FINETUNE = TrainConfig(lr=1e-5, epochs=8, clip_norm=1.0, alpha=30.0)


def clip_gradients(params: Sequence[torch.nn.Parameter], max_norm: float) -> float:
    """Rescale gradients to global norm ``max_norm``; returns the norm before clipping."""
    return float(torch.nn.utils.clip_grad_norm_(params, max_norm))


def learning_rate(config: TrainConfig, step: int, total_steps: int) -> float:
    """Rate for 0-based ``step``: constant, or linear warmup then linear decay to zero."""
    if config.schedule == "constant":
        return config.lr
    warm = int(config.warmup * total_steps)
    if step < warm:
        return config.lr * (step + 1) / warm
    return config.lr * max(0.0, (total_steps - step) / max(1, total_steps - warm))


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    steps: int = 0


def optimize(
    params: list[torch.nn.Parameter],
    n_items: int,
    batch_loss: Callable[[list[int], int], torch.Tensor],
    config: TrainConfig,
    resample: Callable[[int], int] | None = None,
) -> TrainResult:
    """Adam with global-norm clipping over shuffled minibatches.

    ``batch_loss(indices, epoch)`` returns the per-item losses of a batch.
    ``resample(epoch)``, when given, returns the pool size for that epoch.
    """
    if n_items == 0 and resample is None:
        raise TrainingError("no training examples")
    opt = torch.optim.Adam(params, lr=config.lr, betas=config.betas, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    result = TrainResult()
    total_steps = None
    for epoch in range(config.epochs):
        size = resample(epoch) if resample else n_items
        if total_steps is None:
            # pool size can vary by epoch; the first epoch sets the schedule length
            total_steps = config.epochs * math.ceil(size / config.batch_size)
        order = rng.permutation(size)
        total = 0.0
        for lo in range(0, size, config.batch_size):
            idx = [int(i) for i in order[lo : lo + config.batch_size]]
            losses = batch_loss(idx, epoch)
            if not torch.isfinite(losses).all():
                bad = [idx[k] for k in torch.nonzero(~torch.isfinite(losses)).flatten().tolist()]
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {result.steps}, items {bad}")
            loss = losses.mean()
            opt.zero_grad()
            loss.backward()
            clip_gradients(params, config.clip_norm)
            for group in opt.param_groups:
                group["lr"] = learning_rate(config, result.steps, total_steps)
            opt.step()
            total += float(losses.detach().sum())
            result.steps += 1
        result.losses.append(total / max(size, 1))
        log.info("epoch %d mean nll %.6f", epoch + 1, result.losses[-1])
    return result


def train(
    model: EventModel,
    examples: Sequence[TrainingExample],
    config: TrainConfig,
    resample: Callable[[np.random.Generator], list[TrainingExample]] | None = None,
) -> TrainResult:
    """Train ``model`` in place. ``resample`` adds fresh examples each epoch."""
    examples = list(examples)
    if not examples and resample is None:
        raise TrainingError("no training examples")
    pool: list[TrainingExample] = examples

    def refresh(epoch: int) -> int:
        nonlocal pool
        pool = examples + resample(np.random.default_rng([config.seed, epoch]))
        return len(pool)

    def batch_loss(idx: list[int], epoch: int) -> torch.Tensor:
        chosen = [pool[i] for i in idx]
        return model.nll([ex.query for ex in chosen], [ex.tags for ex in chosen])

    model.train()
    result = optimize(list(model.parameters()), len(examples), batch_loss, config,
                      refresh if resample else None)
    model.eval()
    return result


def train_selector(
    selector: SpanSelector,
    items: Sequence[tuple[EncodedPair, Sequence[int], Sequence[int]]],
    config: TrainConfig,
) -> TrainResult:
    """Train only the selector head on precomputed (pair, focus, tags) items."""
    items = list(items)
    dtype = selector.transitions.dtype

    def batch_loss(idx: list[int], epoch: int) -> torch.Tensor:
        chosen = [items[i] for i in idx]
        batch = EncodedBatch.from_pairs([c[0] for c in chosen], dtype=dtype)
        focus = focus_tensor([c[1] for c in chosen], batch.statement.shape[1])
        gold = gold_tensor([c[2] for c in chosen], batch.text.shape[1])
        return selector.nll(batch, focus, gold)

    return optimize(list(selector.parameters()), len(items), batch_loss, config)


# --- end-to-end fitting -------------------------------------------------------------


def build_vocab(examples: Iterable[TrainingExample], ontology: Ontology | None = None,
                lowercase: bool = False) -> Vocabulary:
    vocab = Vocabulary(lowercase=lowercase)
    for ex in examples:
        vocab.add(ex.statement)
        vocab.add(ex.text)
    if ontology is not None:
        for stmt in ontology:
            vocab.add(stmt.tokens)
    return vocab


def fit(
    ontology: Ontology,
    corpus: Sequence[Document],
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    model: EventModel | None = None,
    dtype: torch.dtype = torch.float64,
) -> tuple[EventModel, TrainResult, list[TrainingExample]]:
    """Generate examples, build or extend the vocabulary, and train.

    Negatives are redrawn every epoch. Returns the model, the loss trace, and
    the positive examples used.
    """
    corpus = list(corpus)
    if config.max_docs is not None:
        corpus = corpus[: config.max_docs]
    examples = generate_examples(ontology, corpus)
    if not examples:
        raise TrainingError("corpus yields no training examples")
    if model is None:
        vocab = build_vocab(examples, ontology, lowercase=model_config.encoder.lowercase if model_config else False)
        model = EventModel(vocab, model_config or ModelConfig(), seed=config.seed).to(dtype)
    else:
        gen = torch.Generator().manual_seed(config.seed)
        for ex in examples:
            model.encoder.extend_vocab(ex.statement + ex.text, gen)
        for stmt in ontology:
            model.encoder.extend_vocab(stmt.tokens, gen)

    def negatives(rng: np.random.Generator) -> list[TrainingExample]:
        return sample_negatives(corpus, ontology, config.alpha, rng)

    result = train(model, examples, config, negatives if config.alpha > 0 else None)
    return model, result, examples


def pretrain(examples: Sequence[TrainingExample], config: TrainConfig,
             model_config: ModelConfig | None = None, model: EventModel | None = None,
             dtype: torch.dtype = torch.float64):
    examples = list(examples)
    if model is None:
        vocab = build_vocab(examples, lowercase=model_config.encoder.lowercase if model_config else False)
        model = EventModel(vocab, model_config or ModelConfig(), seed=config.seed).to(dtype)
    result = train(model, examples, replace(config, alpha=0.0))
    return model, result
