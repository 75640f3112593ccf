"""Multiple-argument span selector.

For a focused placeholder, each text token attends over the placeholder's
statement vectors; the attended vector and the text vector are joined into
matching features, scored per BIO tag by a feed-forward network, and decoded
with a linear-chain CRF. An all-O decoding is an abstention.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
from torch import nn

from . import crf
from .encoder import (
    EncodedBatch,
    EncodedPair,
    EncoderConfig,
    EncoderInput,
    MiniEncoder,
    Vocabulary,
    encode_batch,
)
from .ontology import Span


def placeholder_attention(statement: torch.Tensor, text: torch.Tensor, focus_mask: torch.Tensor):
    """Attend from every text token over the focused statement tokens.

    Works on single pairs (``statement`` (n, d), ``text`` (m, d), ``focus_mask``
    (n,)) or padded batches with a leading batch axis. Returns the attended
    vectors (m, d) and the weights (m, n); weights outside the focus are 0.
    """
    scores = text @ statement.transpose(-1, -2)
    scores = scores.masked_fill(~focus_mask.unsqueeze(-2), float("-inf"))
    # softmax subtracts the row max internally
    weights = torch.softmax(scores, dim=-1)
    return weights @ statement, weights


def matching_features(attended: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
    if attended.shape != text.shape:
        raise ValueError(f"shape mismatch {tuple(attended.shape)} vs {tuple(text.shape)}")
    return torch.cat([attended, text, (attended - text).abs(), attended * text], dim=-1)


class TagScorer(nn.Module):
    """FFNN with widths 4d -> 2d -> d -> d -> 1 per tag and tanh between layers.

    With ``shared=True`` the three tag scorers share the hidden layers and
    differ only in the final scalar layer.
    """

    def __init__(self, d: int, shared: bool = True):
        super().__init__()
        self.shared = shared
        n_stacks = 1 if shared else crf.NUM_TAGS
        self.hidden = nn.ModuleList(
            nn.Sequential(
                nn.Linear(4 * d, 2 * d), nn.Tanh(),
                nn.Linear(2 * d, d), nn.Tanh(),
                nn.Linear(d, d), nn.Tanh(),
            )
            for _ in range(n_stacks)
        )
        if shared:
            self.final = nn.Linear(d, crf.NUM_TAGS)
        else:
            self.final = nn.ModuleList(nn.Linear(d, 1) for _ in range(crf.NUM_TAGS))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.shared:
            return self.final(self.hidden[0](x))
        return torch.cat([head(stack(x)) for stack, head in zip(self.hidden, self.final)], dim=-1)


def emission_scores(scorer: TagScorer, features: torch.Tensor) -> torch.Tensor:
    return scorer(features)


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    share_hidden: bool = True
    use_transitions: bool = True

    @property
    def d(self) -> int:
        return self.encoder.d

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        enc = EncoderConfig(**data.pop("encoder", {}))
        return cls(encoder=enc, **data)


class SpanSelector(nn.Module):
    """Selector head: tag scorer plus CRF transition scores."""

    def __init__(self, d: int, share_hidden: bool = True, use_transitions: bool = True):
        super().__init__()
        self.use_transitions = use_transitions
        self.scorer = TagScorer(d, share_hidden)
        self.transitions = nn.Parameter(torch.zeros(crf.NUM_STATES, crf.NUM_STATES))
        self.register_buffer("constraints", crf.constraint_mask(torch.float32), persistent=False)

    def transition_scores(self) -> torch.Tensor:
        learned = self.transitions if self.use_transitions else torch.zeros_like(self.transitions)
        return learned + self.constraints.to(self.transitions.dtype)

    def emissions(self, batch: EncodedBatch, focus_mask: torch.Tensor) -> torch.Tensor:
        attended, _ = placeholder_attention(batch.statement, batch.text, focus_mask)
        return self.scorer(matching_features(attended, batch.text))

    def nll(self, batch: EncodedBatch, focus_mask: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
        """Per-example negative log-likelihood, shape (B,)."""
        emissions = self.emissions(batch, focus_mask)
        trans = self.transition_scores()
        return crf.log_partition(emissions, trans, batch.text_mask) - crf.path_score(
            emissions, trans, gold, batch.text_mask
        )


def focus_tensor(focus_sets: Sequence[Sequence[int]], n_max: int) -> torch.Tensor:
    mask = torch.zeros(len(focus_sets), n_max, dtype=torch.bool)
    for b, focus in enumerate(focus_sets):
        if not focus:
            raise ValueError("focus index set is empty")
        for i in focus:
            if not 1 <= i <= n_max:
                raise ValueError(f"focus index {i} out of range")
            mask[b, i - 1] = True
    return mask


def gold_tensor(gold_tags: Sequence[Sequence[int]], m_max: int) -> torch.Tensor:
    out = torch.zeros(len(gold_tags), m_max, dtype=torch.long)
    for b, tags in enumerate(gold_tags):
        if not crf.is_valid_bio(tags):
            raise ValueError(f"gold tags are not valid BIO: {crf.tag_names(tags)}")
        out[b, : len(tags)] = torch.tensor(list(tags), dtype=torch.long)
    return out


@dataclass(frozen=True)
class Query:
    """One selector call: statement, focused positions, text, optional anchor."""

    statement: tuple[str, ...]
    focus: tuple[int, ...]
    text: tuple[str, ...]
    trigger_span: Span | None = None


class EventModel(nn.Module):
    """Mini encoder plus selector head."""

    def __init__(self, vocab: Vocabulary, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config or ModelConfig()
        self.config.encoder.lowercase = vocab.lowercase
        # initial weights are drawn in float64 whatever the global default dtype is,
        # so the same seed always gives the same model
        previous = torch.get_default_dtype()
        torch.set_default_dtype(torch.float64)
        try:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self.encoder = MiniEncoder(vocab, self.config.encoder)
                self.selector = SpanSelector(
                    self.config.d, self.config.share_hidden, self.config.use_transitions
                )
        finally:
            torch.set_default_dtype(previous)
        self.double()

    @property
    def vocab(self) -> Vocabulary:
        return self.encoder.vocab

    @property
    def dtype(self) -> torch.dtype:
        return self.selector.transitions.dtype

    def encode(self, queries: Sequence[Query]) -> EncodedBatch:
        inputs = [EncoderInput(tuple(q.statement), tuple(q.text), q.trigger_span) for q in queries]
        return encode_batch(self.encoder, inputs)

    @staticmethod
    def _check_focus(queries: Sequence[Query]) -> None:
        for q in queries:
            bad = [i for i in q.focus if not 1 <= i <= len(q.statement)]
            if bad:
                raise ValueError(f"focus {bad} outside statement of length {len(q.statement)}")

    def emissions(self, queries: Sequence[Query]) -> tuple[torch.Tensor, EncodedBatch]:
        self._check_focus(queries)
        batch = self.encode(queries)
        focus = focus_tensor([q.focus for q in queries], batch.statement.shape[1])
        return self.selector.emissions(batch, focus), batch

    def nll(self, queries: Sequence[Query], gold_tags: Sequence[Sequence[int]]) -> torch.Tensor:
        self._check_focus(queries)
        batch = self.encode(queries)
        for q, tags in zip(queries, gold_tags):
            if len(tags) != len(q.text):
                raise ValueError("gold tag count differs from text length")
        focus = focus_tensor([q.focus for q in queries], batch.statement.shape[1])
        gold = gold_tensor(gold_tags, batch.text.shape[1])
        return self.selector.nll(batch, focus, gold)

    @torch.no_grad()
    def decode(self, query: Query) -> tuple[list[int], torch.Tensor]:
        emissions, _ = self.emissions([query])
        emissions = emissions[0]
        tags, _ = crf.viterbi(emissions, self.selector.transition_scores())
        return tags, emissions

    def get_args(self, statement, focus, text, trigger_span=None, sentences=None) -> list[Span]:
        return get_args(self, statement, focus, text, trigger_span, sentences)


def _span_score(emissions: torch.Tensor, span: Span) -> float:
    start, end = span
    return float(emissions[start - 1, crf.B] + emissions[start : end - 1, crf.I].sum())


def restrict_to_sentence(spans: list[Span], sentences, scores: Sequence[float]) -> list[Span]:
    """Keep spans inside the sentence holding the best-scoring contained span."""
    if not spans or not sentences:
        return spans

    def home(span):
        for k, (s, e) in enumerate(sentences):
            if s <= span[0] and span[1] <= e:
                return k
        return None

    homes = [home(sp) for sp in spans]
    ranked = [(scores[k], -k) for k in range(len(spans)) if homes[k] is not None]
    if not ranked:
        return []
    best = -max(ranked)[1]
    return [sp for sp, h in zip(spans, homes) if h == homes[best]]


def get_args(model: EventModel, statement, focus, text, trigger_span=None, sentences=None) -> list[Span]:
    """Select zero or more text spans for the focused placeholder.

    ``sentences`` optionally partitions the text into 1-based half-open
    intervals; spans are then kept only from a single sentence.
    """
    if not text:
        return []
    query = Query(tuple(statement), tuple(focus), tuple(text), trigger_span)
    tags, emissions = model.decode(query)
    spans = crf.tags_to_spans(tags)
    if sentences:
        spans = restrict_to_sentence(spans, sentences, [_span_score(emissions, sp) for sp in spans])
    return spans
