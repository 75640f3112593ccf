"""Contextual encoding of (statement, text) pairs.

The owned encoder is a small pre-norm transformer over the sequence
``[CLS] statement [SEP] text [SEP]``. When a trigger span is anchored, the text
half carries ``[TRIG]`` / ``[/TRIG]`` marker tokens around it; their output
vectors are dropped so text vectors stay aligned with the input tokens.

Precomputed vectors from an external encoder can be read with
:func:`load_imported_embeddings`.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import torch
from torch import nn

CLS, SEP, UNK, TRIG_OPEN, TRIG_CLOSE, PAD = "[CLS]", "[SEP]", "[UNK]", "[TRIG]", "[/TRIG]", "[PAD]"
RESERVED = (PAD, CLS, SEP, UNK, TRIG_OPEN, TRIG_CLOSE)

MAGIC = b"BLEV1"


class EncoderError(ValueError):
    pass


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = (), lowercase: bool = False):
        self.lowercase = lowercase
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        self.add(tokens)

    def norm(self, token: str) -> str:
        return token.lower() if self.lowercase and token not in self.stoi else token

    def add(self, tokens: Iterable[str]) -> list[str]:
        """Add unseen tokens in first-seen order; returns the tokens that were new."""
        added = []
        for tok in tokens:
            tok = self.norm(tok)
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)
                added.append(tok)
        return added

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return self.norm(token) in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(self.norm(token), self.stoi[UNK])

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: list[str], lowercase: bool = False) -> "Vocabulary":
        if list(itos[: len(RESERVED)]) != list(RESERVED):
            raise EncoderError("vocabulary is missing the reserved tokens")
        vocab = cls(lowercase=lowercase)
        vocab.itos = list(itos)
        vocab.stoi = {t: i for i, t in enumerate(itos)}
        return vocab


@dataclass(frozen=True)
class EncoderInput:
    statement_tokens: tuple[str, ...]
    text_tokens: tuple[str, ...]
    trigger_span: tuple[int, int] | None = None


@dataclass
class EncodedPair:
    statement_vectors: torch.Tensor  # (n, d)
    text_vectors: torch.Tensor  # (m, d)

    @property
    def d(self) -> int:
        return self.statement_vectors.shape[1]


@dataclass
class EncoderConfig:
    d: int = 64
    heads: int = 4
    layers: int = 2
    ffn_mult: int = 2
    max_len: int = 512
    max_query: int = 128
    lowercase: bool = False


def sinusoid_table(length: int, d: int) -> torch.Tensor:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return torch.from_numpy(table)


class EncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ffn_mult: int = 2):
        super().__init__()
        if d % heads:
            raise EncoderError(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)
        self.norm1 = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, ffn_mult * d)
        self.ff2 = nn.Linear(ffn_mult * d, d)
        self.norm2 = nn.LayerNorm(d)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        b, length, d = x.shape
        h = self.heads
        y = self.norm1(x)
        q, k, v = self.qkv(y).view(b, length, 3, h, d // h).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        mixed = (scores.softmax(-1) @ v).transpose(1, 2).reshape(b, length, d)
        x = x + self.out(mixed)
        return x + self.ff2(nn.functional.gelu(self.ff1(self.norm2(x))))


class MiniEncoder(nn.Module):
    """Token + sinusoidal position + segment embeddings followed by self-attention layers."""

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.tok = nn.Embedding(len(vocab), config.d)
        self.seg = nn.Embedding(2, config.d)
        self.register_buffer("pos", sinusoid_table(config.max_len, config.d).float(), persistent=False)
        self.norm = nn.LayerNorm(config.d)
        self.layers = nn.ModuleList(
            EncoderLayer(config.d, config.heads, config.ffn_mult) for _ in range(config.layers)
        )

    @property
    def d(self) -> int:
        return self.config.d

    def extend_vocab(self, tokens: Iterable[str], generator: torch.Generator | None = None) -> int:
        added = self.vocab.add(tokens)
        if added:
            old = self.tok.weight.data
            extra = torch.randn(len(added), old.shape[1], generator=generator, dtype=torch.float64)
            self.tok = nn.Embedding(len(self.vocab), old.shape[1]).to(old.dtype)
            self.tok.weight.data = torch.cat([old, extra.to(old.dtype)])
        return len(added)

    def forward(self, ids: torch.Tensor, segments: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        length = ids.shape[1]
        x = self.tok(ids) + self.seg(segments) + self.pos[:length].to(self.tok.weight.dtype)
        for layer in self.layers:
            x = layer(x, mask)
        return self.norm(x)


@dataclass
class _Packed:
    ids: list[int]
    segments: list[int]
    stmt_pos: list[int]
    text_pos: list[int]


def pack_input(vocab: Vocabulary, inp: EncoderInput, config: EncoderConfig) -> _Packed:
    n, m = len(inp.statement_tokens), len(inp.text_tokens)
    if n > config.max_query:
        raise EncoderError(f"statement has {n} tokens, limit is {config.max_query}")
    trig = inp.trigger_span
    if trig is not None and not (1 <= trig[0] < trig[1] <= m + 1):
        raise EncoderError(f"trigger span {trig} outside text of length {m}")
    total = n + m + 3 + (2 if trig else 0)
    if total > config.max_len:
        raise EncoderError(f"sequence of {total} tokens exceeds limit {config.max_len}")
    ids = [vocab.index(CLS)] + [vocab.index(t) for t in inp.statement_tokens] + [vocab.index(SEP)]
    segments = [0] * len(ids)
    stmt_pos = list(range(1, n + 1))
    text_pos = []
    for j, tok in enumerate(inp.text_tokens, start=1):
        if trig and j == trig[0]:
            ids.append(vocab.index(TRIG_OPEN))
        if trig and j == trig[1]:
            ids.append(vocab.index(TRIG_CLOSE))
        text_pos.append(len(ids))
        ids.append(vocab.index(tok))
    if trig and trig[1] == m + 1:
        ids.append(vocab.index(TRIG_CLOSE))
    ids.append(vocab.index(SEP))
    segments += [1] * (len(ids) - len(segments))
    return _Packed(ids, segments, stmt_pos, text_pos)


@dataclass
class EncodedBatch:
    """Padded encoder outputs for a batch of pairs."""

    statement: torch.Tensor  # (B, n_max, d)
    text: torch.Tensor  # (B, m_max, d)
    statement_mask: torch.Tensor  # (B, n_max) bool
    text_mask: torch.Tensor  # (B, m_max) bool

    def __len__(self) -> int:
        return self.statement.shape[0]

    def pair(self, b: int) -> EncodedPair:
        n = int(self.statement_mask[b].sum())
        m = int(self.text_mask[b].sum())
        return EncodedPair(self.statement[b, :n], self.text[b, :m])

    @classmethod
    def from_pairs(cls, pairs: Sequence[EncodedPair], dtype=None) -> "EncodedBatch":
        dtype = dtype or pairs[0].statement_vectors.dtype
        d = pairs[0].d
        n_max = max(p.statement_vectors.shape[0] for p in pairs)
        m_max = max(p.text_vectors.shape[0] for p in pairs)
        s = torch.zeros(len(pairs), n_max, d, dtype=dtype)
        t = torch.zeros(len(pairs), m_max, d, dtype=dtype)
        sm = torch.zeros(len(pairs), n_max, dtype=torch.bool)
        tm = torch.zeros(len(pairs), m_max, dtype=torch.bool)
        for b, p in enumerate(pairs):
            if p.d != d:
                raise EncoderError("mixed embedding widths in one batch")
            n, m = p.statement_vectors.shape[0], p.text_vectors.shape[0]
            s[b, :n] = p.statement_vectors.to(dtype)
            t[b, :m] = p.text_vectors.to(dtype)
            sm[b, :n] = True
            tm[b, :m] = True
        return cls(s, t, sm, tm)


def encode_batch(encoder: MiniEncoder, inputs: Sequence[EncoderInput]) -> EncodedBatch:
    packed = [pack_input(encoder.vocab, inp, encoder.config) for inp in inputs]
    length = max(len(p.ids) for p in packed)
    b = len(packed)
    ids = torch.zeros(b, length, dtype=torch.long)
    segs = torch.zeros(b, length, dtype=torch.long)
    mask = torch.zeros(b, length, dtype=torch.bool)
    for k, p in enumerate(packed):
        ids[k, : len(p.ids)] = torch.tensor(p.ids)
        segs[k, : len(p.ids)] = torch.tensor(p.segments)
        mask[k, : len(p.ids)] = True
    hidden = encoder(ids, segs, mask)

    n_max = max(len(p.stmt_pos) for p in packed)
    m_max = max(len(p.text_pos) for p in packed)
    s_idx = torch.zeros(b, n_max, dtype=torch.long)
    t_idx = torch.zeros(b, m_max, dtype=torch.long)
    s_mask = torch.zeros(b, n_max, dtype=torch.bool)
    t_mask = torch.zeros(b, m_max, dtype=torch.bool)
    for k, p in enumerate(packed):
        s_idx[k, : len(p.stmt_pos)] = torch.tensor(p.stmt_pos, dtype=torch.long)
        t_idx[k, : len(p.text_pos)] = torch.tensor(p.text_pos, dtype=torch.long)
        s_mask[k, : len(p.stmt_pos)] = True
        t_mask[k, : len(p.text_pos)] = True
    d = hidden.shape[-1]
    statement = hidden.gather(1, s_idx[..., None].expand(-1, -1, d)) * s_mask[..., None]
    text = hidden.gather(1, t_idx[..., None].expand(-1, -1, d)) * t_mask[..., None]
    return EncodedBatch(statement, text, s_mask, t_mask)


def encode(encoder: MiniEncoder, inp: EncoderInput) -> EncodedPair:
    return encode_batch(encoder, [inp]).pair(0)


# --- embedding interchange file ------------------------------------------------


def write_imported_embeddings(path, pairs: Sequence[EncodedPair]) -> None:
    if not pairs:
        raise EncoderError("nothing to write")
    d = pairs[0].d
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", d, len(pairs)))
        for p in pairs:
            if p.d != d:
                raise EncoderError("all pairs must share one width")
            s = np.asarray(p.statement_vectors.detach().cpu().numpy(), dtype="<f4")
            t = np.asarray(p.text_vectors.detach().cpu().numpy(), dtype="<f4")
            fh.write(struct.pack("<II", s.shape[0], t.shape[0]))
            fh.write(np.ascontiguousarray(s).tobytes())
            fh.write(np.ascontiguousarray(t).tobytes())


def _read_exact(fh, size: int) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise EncoderError("truncated embedding file")
    return data


def load_imported_embeddings(path, expected_d: int | None = None) -> Iterator[EncodedPair]:
    """Stream pairs from an interchange file. Values keep their exact float32 bits."""
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise EncoderError("not an embedding interchange file (bad magic)")
        d, count = struct.unpack("<II", _read_exact(fh, 8))
        if d == 0:
            raise EncoderError("embedding width is zero")
        if expected_d is not None and d != expected_d:
            raise EncoderError(f"file declares d={d}, model expects d={expected_d}")
        for _ in range(count):
            n, m = struct.unpack("<II", _read_exact(fh, 8))
            block = np.frombuffer(_read_exact(fh, (n + m) * d * 4), dtype="<f4").reshape(n + m, d)
            block = torch.from_numpy(block.astype(np.float32))
            yield EncodedPair(block[:n], block[n:])
        if fh.read(1):
            raise EncoderError("trailing bytes after declared examples")
